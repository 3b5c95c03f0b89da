//! Spatial grids, wavefunctions, coherent-state preparation and the moving
//! window policy.
//!
//! A [`WaveFunction`] is stored in a momentum frame: the physical amplitude at
//! node `j` is `exp(i q (x_j - x_min) / hbar) * a_j`, where `q` is the carrier
//! momentum and `a_j` the stored amplitude. The carrier absorbs the fast
//! `exp(i p x / hbar)` oscillation so that packets with `|p| / hbar` far above
//! the grid's Nyquist wavenumber stay representable. All physical quantities
//! (norm, moments, overlaps, CSV dumps) are frame independent; states are
//! defined up to a global phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::CoherentWidths;
use crate::measurement::PhasePoint;
use crate::spectral::{signed_bin, FftPair};

/// Largest grid the window planner will hand out.
pub const MAX_GRID_POINTS: usize = 1 << 22;

/// Mass allowed in the outermost 2% of the grid.
pub const EDGE_MASS_BOUND: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("window too narrow: edge mass {edge_mass:e} exceeds {EDGE_MASS_BOUND:e}")]
    WindowTooNarrow { edge_mass: f64 },
    #[error("support lost while regridding: only {retained:.6} of the norm survived")]
    SupportLoss { retained: f64 },
    #[error("wavefunction has zero norm")]
    ZeroNorm,
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("grid mismatch between wavefunction and propagator plan")]
    GridMismatch,
    #[error("window needs {needed} points, above the {MAX_GRID_POINTS} point limit")]
    GridTooLarge { needed: usize },
}

/// Uniform grid `x_j = x_min + j dx`, `j in [0, n)`, with `n` a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    dx: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, dx: f64, n: usize) -> Result<Grid, StateError> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(StateError::BadGrid(format!("spacing {dx} must be positive")));
        }
        if !x_min.is_finite() {
            return Err(StateError::BadGrid("x_min must be finite".into()));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(StateError::BadGrid(format!("{n} points is not a power of two")));
        }
        Ok(Grid { x_min, dx, n })
    }

    /// Grid covering `[center - half_width, center + half_width)`.
    pub fn centered(center: f64, half_width: f64, n: usize) -> Result<Grid, StateError> {
        Grid::new(center - half_width, 2.0 * half_width / n as f64, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn center(&self) -> f64 {
        self.x_min + 0.5 * self.n as f64 * self.dx
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.n as f64 * self.dx
    }

    /// Spacing of the discrete wavenumber grid.
    pub fn dk(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dx)
    }

    /// Wavenumbers in DFT slot order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = self.dk();
        (0..self.n).map(|j| signed_bin(j, self.n) as f64 * dk).collect()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.x(j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    hbar: f64,
    carrier: f64,
    amplitudes: Vec<Complex64>,
}

impl WaveFunction {
    /// Wraps raw frame amplitudes without normalizing.
    pub fn from_parts(
        grid: Grid,
        hbar: f64,
        carrier: f64,
        amplitudes: Vec<Complex64>,
    ) -> Result<WaveFunction, StateError> {
        if amplitudes.len() != grid.len() {
            return Err(StateError::GridMismatch);
        }
        Ok(WaveFunction {
            grid,
            hbar,
            carrier,
            amplitudes,
        })
    }

    /// Builds a normalized state from physical samples `psi(x_j)`.
    pub fn from_samples(
        grid: Grid,
        hbar: f64,
        samples: Vec<Complex64>,
    ) -> Result<WaveFunction, StateError> {
        let mut wf = WaveFunction::from_parts(grid, hbar, 0.0, samples)?;
        wf.normalize()?;
        Ok(wf)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Carrier momentum of the storage frame.
    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    /// Frame amplitudes (see the module docs).
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub(crate) fn set_carrier(&mut self, carrier: f64) {
        self.carrier = carrier;
    }

    fn carrier_phase(&self, j: usize) -> Complex64 {
        if self.carrier == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, self.carrier * (j as f64 * self.grid.dx) / self.hbar)
        }
    }

    /// Physical amplitude `psi(x_j)`.
    pub fn psi_at(&self, j: usize) -> Complex64 {
        self.carrier_phase(j) * self.amplitudes[j]
    }

    pub fn psi(&self) -> Vec<Complex64> {
        (0..self.grid.len()).map(|j| self.psi_at(j)).collect()
    }

    /// `sum |psi_j|^2 dx`.
    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx
    }

    pub fn normalize(&mut self) -> Result<(), StateError> {
        let n2 = self.norm_sq();
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(StateError::ZeroNorm);
        }
        let s = 1.0 / n2.sqrt();
        for a in &mut self.amplitudes {
            *a *= s;
        }
        Ok(())
    }

    pub fn expectation_x(&self) -> f64 {
        let dx = self.grid.dx;
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| self.grid.x(j) * a.norm_sqr())
            .sum::<f64>()
            * dx
    }

    pub fn position_variance(&self) -> f64 {
        let mean = self.expectation_x();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| (self.grid.x(j) - mean).powi(2) * a.norm_sqr())
            .sum::<f64>()
            * self.grid.dx
    }

    /// Probability weights of the discrete momenta `carrier + hbar k_j`.
    fn momentum_weights(&self) -> Vec<f64> {
        let mut spec = self.amplitudes.clone();
        FftPair::new(self.grid.len()).forward(&mut spec);
        let total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
        spec.iter().map(|z| z.norm_sqr() / total).collect()
    }

    /// `<p>` evaluated spectrally with `p = carrier + hbar k`.
    pub fn expectation_p(&self) -> f64 {
        let w = self.momentum_weights();
        let dk = self.grid.dk();
        let n = self.grid.len();
        let mean_k: f64 = w
            .iter()
            .enumerate()
            .map(|(j, wj)| wj * signed_bin(j, n) as f64 * dk)
            .sum();
        self.carrier + self.hbar * mean_k
    }

    pub fn momentum_variance(&self) -> f64 {
        let w = self.momentum_weights();
        let dk = self.grid.dk();
        let n = self.grid.len();
        let ks: Vec<f64> = (0..n).map(|j| self.hbar * signed_bin(j, n) as f64 * dk).collect();
        let mean: f64 = w.iter().zip(&ks).map(|(a, k)| a * k).sum();
        w.iter().zip(&ks).map(|(a, k)| a * (k - mean).powi(2)).sum()
    }

    /// Mass in the outermost 2% of nodes on each side of the grid.
    pub fn edge_mass(&self) -> f64 {
        let n = self.grid.len();
        let band = ((n as f64) * 0.02).ceil().max(1.0) as usize;
        let lo: f64 = self.amplitudes[..band].iter().map(|a| a.norm_sqr()).sum();
        let hi: f64 = self.amplitudes[n - band..].iter().map(|a| a.norm_sqr()).sum();
        (lo + hi) * self.grid.dx
    }

    /// Multiplies by `exp(i q x / hbar)` (up to a global phase).
    pub fn boost(&mut self, q: f64) {
        self.carrier += q;
    }

    /// `<self|other>`; both states must share a grid.
    pub fn overlap(&self, other: &WaveFunction) -> Result<Complex64, StateError> {
        if self.grid != other.grid {
            return Err(StateError::GridMismatch);
        }
        let sum: Complex64 = (0..self.grid.len())
            .map(|j| self.psi_at(j).conj() * other.psi_at(j))
            .sum();
        Ok(sum * self.grid.dx)
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &WaveFunction) -> Result<f64, StateError> {
        Ok(self.overlap(other)?.norm_sqr())
    }

    /// Moves the storage frame by an integer number of wavenumber bins. This
    /// changes no physical amplitude.
    #[cfg(test)]
    pub(crate) fn shift_carrier_bins(&mut self, bins: i64) {
        if bins == 0 {
            return;
        }
        let n = self.grid.len();
        let dk = self.grid.dk();
        for (j, a) in self.amplitudes.iter_mut().enumerate() {
            // exp(-i 2 pi bins j / n), reduced mod n for accuracy
            let m = (bins.rem_euclid(n as i64) as u128 * j as u128 % n as u128) as f64;
            *a *= Complex64::from_polar(1.0, -2.0 * PI * m / n as f64);
        }
        self.carrier += self.hbar * bins as f64 * dk;
    }
}

/// Coherent state `(m w / pi hbar)^{1/4} exp(-m w (x - x0)^2 / 2 hbar + i p0 x / hbar)`
/// sampled on `grid` and renormalized there.
pub fn make_coherent_state(
    center: PhasePoint,
    widths: &CoherentWidths,
    hbar: f64,
    grid: Grid,
) -> Result<WaveFunction, StateError> {
    // m w / 2 hbar = 1 / (4 sigma_x^2)
    let a = 1.0 / (4.0 * widths.sigma_x * widths.sigma_x);
    let norm = (2.0 * a / PI).powf(0.25);
    let amplitudes = grid
        .positions()
        .map(|x| {
            let d = x - center.x;
            Complex64::new(norm * (-a * d * d).exp(), 0.0)
        })
        .collect();
    let mut wf = WaveFunction::from_parts(grid, hbar, center.p, amplitudes)?;
    wf.normalize()?;
    let edge = wf.edge_mass();
    if edge >= EDGE_MASS_BOUND {
        return Err(StateError::WindowTooNarrow { edge_mass: edge });
    }
    Ok(wf)
}

/// Sizing rule for the moving window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub momentum_prefactor: f64,
    pub uncertainty_prefactor: f64,
    /// Lower bound on the grid size.
    pub min_points: usize,
    /// Minimum resolution in nodes per sigma_x.
    pub points_per_sigma: f64,
}

impl WindowPolicy {
    /// `L = max(c_p |p| dt / m, c_u sigma_x)`: room for the drift before the
    /// next measurement, or for the packet itself, whichever is larger.
    pub fn half_width(&self, p: f64, widths: &CoherentWidths, dt_meas: f64, mass: f64) -> f64 {
        let drift = self.momentum_prefactor * (p.abs() / mass) * dt_meas;
        let spread = self.uncertainty_prefactor * widths.sigma_x;
        drift.max(spread)
    }

    /// Smallest power of two `>= min_points` that resolves sigma_x.
    pub fn points_for(&self, half_width: f64, widths: &CoherentWidths) -> Result<usize, StateError> {
        let needed = (2.0 * half_width * self.points_per_sigma / widths.sigma_x).ceil();
        if !needed.is_finite() || needed > MAX_GRID_POINTS as f64 {
            return Err(StateError::GridTooLarge {
                needed: needed.min(usize::MAX as f64) as usize,
            });
        }
        Ok((needed as usize).max(self.min_points).next_power_of_two())
    }
}

/// Grid centered on `center.x` sized by `policy`.
pub fn plan_window(
    center: PhasePoint,
    widths: &CoherentWidths,
    policy: &WindowPolicy,
    dt_meas: f64,
    mass: f64,
) -> Result<Grid, StateError> {
    let half = policy.half_width(center.p, widths, dt_meas, mass);
    let n = policy.points_for(half, widths)?;
    Grid::centered(center.x, half, n)
}

/// Transfers `psi` onto `new_grid` by linear interpolation of the real and
/// imaginary parts of the frame amplitudes, then renormalizes.
pub fn rewindow(psi: &WaveFunction, new_grid: Grid) -> Result<WaveFunction, StateError> {
    if *psi.grid() == new_grid {
        return Ok(psi.clone());
    }
    let old = psi.grid();
    let src = psi.amplitudes();
    // Re-anchoring the carrier phase to the new x_min is a constant factor.
    let anchor = Complex64::from_polar(
        1.0,
        psi.carrier() * (new_grid.x_min() - old.x_min()) / psi.hbar(),
    );
    let last = (old.len() - 1) as f64;
    let amplitudes: Vec<Complex64> = new_grid
        .positions()
        .map(|x| {
            let u = (x - old.x_min()) / old.dx();
            let snapped = u.round();
            if (u - snapped).abs() < 1e-9 && (0.0..=last).contains(&snapped) {
                return anchor * src[snapped as usize];
            }
            if !(0.0..=last).contains(&u) {
                return Complex64::new(0.0, 0.0);
            }
            let i = u.floor() as usize;
            let f = u - i as f64;
            let a = src[i];
            let b = if i + 1 < src.len() { src[i + 1] } else { a };
            anchor * (a * (1.0 - f) + b * f)
        })
        .collect();
    let mut out = WaveFunction::from_parts(new_grid, psi.hbar(), psi.carrier(), amplitudes)?;
    let retained = out.norm_sq();
    if retained < 0.999 {
        return Err(StateError::SupportLoss { retained });
    }
    out.normalize()?;
    Ok(out)
}
