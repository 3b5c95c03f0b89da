//! Coherent-state POVM measurement: Husimi Q construction, sampling and
//! collapse.
//!
//! `Q(x, p) = (1/pi) |<x, p|psi>|^2`. The natural measure for this density is
//! `dx dp / (2 hbar)` (the phase-space area in units of `2 hbar`), so
//! [`HusimiField::cell_area`] is reported in those units and
//! `sum(values) * cell_area` approaches 1 as the window grows.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{CoherentWidths, SamplingMode, ValidatedConfig};
use crate::grid_state::{make_coherent_state, plan_window, StateError, WaveFunction, WindowPolicy};

/// A point in phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Self {
        PhasePoint { x, p }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("Husimi window captures no probability (mass {mass:e})")]
    DisjointWindow { mass: f64 },
    #[error("cannot sample a field with zero total mass")]
    ZeroMass,
    #[error("Husimi resolution must be at least 2")]
    BadResolution,
    #[error(transparent)]
    State(#[from] StateError),
}

/// Rectangle in phase space divided into `resolution x resolution` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseWindow {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub resolution: usize,
}

impl PhaseWindow {
    /// Window of `n_sigma` coherent widths on each side of `center`.
    pub fn around(center: PhasePoint, widths: &CoherentWidths, n_sigma: f64, resolution: usize) -> Self {
        PhaseWindow {
            x_min: center.x - n_sigma * widths.sigma_x,
            x_max: center.x + n_sigma * widths.sigma_x,
            p_min: center.p - n_sigma * widths.sigma_p,
            p_max: center.p + n_sigma * widths.sigma_p,
            resolution,
        }
    }

    pub fn cell_dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.resolution as f64
    }

    pub fn cell_dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.resolution as f64
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.cell_dx()
    }

    pub fn p_center(&self, j: usize) -> f64 {
        self.p_min + (j as f64 + 0.5) * self.cell_dp()
    }
}

/// Discretized Husimi distribution. `values[i * resolution + j]` belongs to
/// the cell at position index `i` and momentum index `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HusimiField {
    pub window: PhaseWindow,
    pub values: Vec<f64>,
    /// `dx_cell * dp_cell / (2 hbar)`.
    pub cell_area: f64,
}

impl HusimiField {
    /// Builds a field from explicit values, for tests and replays.
    pub fn from_values(window: PhaseWindow, hbar: f64, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), window.resolution * window.resolution);
        let cell_area = window.cell_dx() * window.cell_dp() / (2.0 * hbar);
        HusimiField {
            window,
            values,
            cell_area,
        }
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.window.resolution + j]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area
    }

    pub fn cell_center(&self, cell: usize) -> PhasePoint {
        let r = self.window.resolution;
        PhasePoint::new(self.window.x_center(cell / r), self.window.p_center(cell % r))
    }

    /// Probability of each cell, normalized over the window.
    pub fn cell_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().sum();
        self.values.iter().map(|v| v / total).collect()
    }
}

/// Coherent-state kernel amplitudes below this fraction of the peak are
/// dropped from the overlap quadrature.
const KERNEL_CUTOFF: f64 = 1e-10;

/// Nodes `[lo, hi)` of `psi`'s grid where the kernel centered at `x0`
/// exceeds the cutoff.
fn kernel_support(psi: &WaveFunction, x0: f64, sigma_x: f64) -> (usize, usize) {
    let reach = 2.0 * sigma_x * (-KERNEL_CUTOFF.ln()).sqrt();
    let g = psi.grid();
    let lo = ((x0 - reach - g.x_min()) / g.dx()).floor().max(0.0);
    let hi = ((x0 + reach - g.x_min()) / g.dx()).ceil() + 1.0;
    let hi = hi.min(g.len() as f64).max(0.0);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

/// `<x0, p0|psi>` up to a global phase, by quadrature on `psi`'s grid.
pub fn coherent_overlap(psi: &WaveFunction, point: PhasePoint, widths: &CoherentWidths) -> Complex64 {
    let a = 1.0 / (4.0 * widths.sigma_x * widths.sigma_x);
    let norm = (2.0 * a / PI).powf(0.25);
    let g = psi.grid();
    let hbar = psi.hbar();
    let dq = psi.carrier() - point.p;
    let (lo, hi) = kernel_support(psi, point.x, widths.sigma_x);
    let mut sum = Complex64::new(0.0, 0.0);
    for (j, amp) in psi.amplitudes().iter().enumerate().take(hi).skip(lo) {
        let d = g.x(j) - point.x;
        let phase = Complex64::from_polar(1.0, dq * d / hbar);
        sum += amp * phase * (norm * (-a * d * d).exp());
    }
    sum * g.dx()
}

/// `Q` at a single phase-space point.
pub fn husimi_at(psi: &WaveFunction, point: PhasePoint, widths: &CoherentWidths) -> f64 {
    coherent_overlap(psi, point, widths).norm_sqr() / PI
}

/// Evaluates `Q` at every cell center of `window`.
///
/// The momentum dependence of the kernel is a plane wave, so for each
/// position row the cells are filled by a phase recurrence along `p`.
pub fn compute_husimi(
    psi: &WaveFunction,
    window: &PhaseWindow,
    widths: &CoherentWidths,
) -> Result<HusimiField, MeasurementError> {
    let r = window.resolution;
    if r < 2 {
        return Err(MeasurementError::BadResolution);
    }
    let a = 1.0 / (4.0 * widths.sigma_x * widths.sigma_x);
    let norm = (2.0 * a / PI).powf(0.25);
    let g = psi.grid();
    let hbar = psi.hbar();
    let amps = psi.amplitudes();
    let dp = window.cell_dp();
    let mut values = vec![0.0; r * r];
    let mut acc: Vec<Complex64> = Vec::new();
    let mut step: Vec<Complex64> = Vec::new();
    for i in 0..r {
        let x0 = window.x_center(i);
        let (lo, hi) = kernel_support(psi, x0, widths.sigma_x);
        if lo >= hi {
            continue;
        }
        // row terms for the first momentum cell, and the per-cell phase step
        let p_first = window.p_center(0);
        acc.clear();
        step.clear();
        for (j, amp) in amps.iter().enumerate().take(hi).skip(lo) {
            let d = g.x(j) - x0;
            let k = norm * (-a * d * d).exp();
            acc.push(amp * Complex64::from_polar(k, (psi.carrier() - p_first) * d / hbar));
            step.push(Complex64::from_polar(1.0, -dp * d / hbar));
        }
        for jp in 0..r {
            if jp > 0 {
                for (t, s) in acc.iter_mut().zip(&step) {
                    *t *= s;
                }
            }
            let overlap: Complex64 = acc.iter().sum::<Complex64>() * g.dx();
            values[i * r + jp] = overlap.norm_sqr() / PI;
        }
    }
    let field = HusimiField::from_values(*window, hbar, values);
    let mass = field.total_mass();
    if !(mass >= 1e-6) {
        return Err(MeasurementError::DisjointWindow { mass });
    }
    Ok(field)
}

/// Draws one cell with probability proportional to its weight and returns a
/// point inside it (uniformly jittered, or the center).
pub fn sample_phase_point<R: Rng + ?Sized>(
    field: &HusimiField,
    rng: &mut R,
    mode: SamplingMode,
) -> Result<PhasePoint, MeasurementError> {
    let mut cumulative = Vec::with_capacity(field.values.len());
    let mut total = 0.0;
    for v in &field.values {
        total += v;
        cumulative.push(total);
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(MeasurementError::ZeroMass);
    }
    let u = rng.random::<f64>() * total;
    let cell = cumulative
        .partition_point(|&c| c <= u)
        .min(field.values.len() - 1);
    // skip any zero-width cells the partition may land on at the top end
    let cell = (0..=cell).rev().find(|&c| field.values[c] > 0.0).unwrap_or(cell);
    let center = field.cell_center(cell);
    match mode {
        SamplingMode::CellCenter => Ok(center),
        SamplingMode::Jitter => {
            let w = &field.window;
            let jx = rng.random::<f64>() - 0.5;
            let jp = rng.random::<f64>() - 0.5;
            Ok(PhasePoint::new(
                center.x + jx * w.cell_dx(),
                center.p + jp * w.cell_dp(),
            ))
        }
    }
}

/// Full measurement: Husimi window around `(<x>, <p>)`, one sampled outcome,
/// and a fresh coherent state centered on it over a newly planned window.
pub fn measure<R: Rng + ?Sized>(
    psi: &WaveFunction,
    config: &ValidatedConfig,
    rng: &mut R,
) -> Result<(PhasePoint, WaveFunction), MeasurementError> {
    let widths = config.widths();
    let centroid = PhasePoint::new(psi.expectation_x(), psi.expectation_p());
    let window = PhaseWindow::around(centroid, &widths, config.husimi_sigmas, config.husimi_resolution);
    let field = compute_husimi(psi, &window, &widths)?;
    let outcome = sample_phase_point(&field, rng, config.sampling)?;
    let grid = plan_window(outcome, &widths, &window_policy(config), config.dt_meas, config.mass)?;
    let collapsed = make_coherent_state(outcome, &widths, config.hbar, grid)?;
    Ok((outcome, collapsed))
}

pub fn window_policy(config: &ValidatedConfig) -> WindowPolicy {
    WindowPolicy {
        momentum_prefactor: config.momentum_prefactor,
        uncertainty_prefactor: config.uncertainty_prefactor,
        min_points: config.grid_points,
        points_per_sigma: config.points_per_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{coherent_widths, SimConfig};
    use crate::grid_state::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coherent(hbar: f64, center: PhasePoint) -> (WaveFunction, CoherentWidths) {
        let w = coherent_widths(hbar, 1.0, 1.0);
        let grid = Grid::centered(center.x, 15.0 * w.sigma_x, 1024).unwrap();
        (make_coherent_state(center, &w, hbar, grid).unwrap(), w)
    }

    /// Closed-form coherent-state overlap `|<a|b>|^2 = exp(-dx^2/4sx^2 - dp^2/4sp^2)`.
    fn overlap_oracle(w: &CoherentWidths, dx: f64, dp: f64) -> f64 {
        (-(dx * dx) / (4.0 * w.sigma_x * w.sigma_x) - (dp * dp) / (4.0 * w.sigma_p * w.sigma_p)).exp() / PI
    }

    #[test]
    fn self_overlap_peak() {
        let c = PhasePoint::new(0.4, 1.0);
        let (psi, w) = coherent(0.01, c);
        assert!((husimi_at(&psi, c, &w) - 1.0 / PI).abs() < 1e-4);
    }

    #[test]
    fn displaced_overlap() {
        let c = PhasePoint::new(-0.2, 0.5);
        let (psi, w) = coherent(0.01, c);
        for (dx, dp) in [(0.05, 0.0), (0.0, -0.08), (0.07, 0.1), (-0.12, 0.03)] {
            let q = husimi_at(&psi, PhasePoint::new(c.x + dx, c.p + dp), &w);
            assert!((q - overlap_oracle(&w, dx, dp)).abs() < 1e-4);
        }
    }

    #[test]
    fn field_matches_pointwise_overlaps() {
        let c = PhasePoint::new(0.0, 1.0);
        let (psi, w) = coherent(0.001, c);
        let window = PhaseWindow::around(c, &w, 5.0, 12);
        let field = compute_husimi(&psi, &window, &w).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let pt = PhasePoint::new(window.x_center(i), window.p_center(j));
                assert!((field.value(i, j) - husimi_at(&psi, pt, &w)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalization_over_six_sigma() {
        let c = PhasePoint::new(0.0, 1.0);
        let (psi, w) = coherent(0.01, c);
        let field = compute_husimi(&psi, &PhaseWindow::around(c, &w, 6.0, 80), &w).unwrap();
        assert!((field.total_mass() - 1.0).abs() < 1e-3);
        let field = compute_husimi(&psi, &PhaseWindow::around(c, &w, 5.0, 50), &w).unwrap();
        assert!(field.total_mass() >= 0.999 && field.total_mass() <= 1.0 + 1e-6);
        assert!(field.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn disjoint_window_is_an_error() {
        let c = PhasePoint::new(0.0, 1.0);
        let (psi, w) = coherent(0.01, c);
        let far = PhaseWindow::around(PhasePoint::new(0.0, 3.0), &w, 5.0, 10);
        assert!(matches!(
            compute_husimi(&psi, &far, &w),
            Err(MeasurementError::DisjointWindow { .. })
        ));
    }

    fn window01(r: usize) -> PhaseWindow {
        PhaseWindow {
            x_min: 0.0,
            x_max: 1.0,
            p_min: 0.0,
            p_max: 1.0,
            resolution: r,
        }
    }

    #[test]
    fn degenerate_field_always_hits_its_cell() {
        let r = 4;
        let mut values = vec![0.0; r * r];
        values[2 * r + 1] = 3.0;
        let field = HusimiField::from_values(window01(r), 0.5, values);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let pt = sample_phase_point(&field, &mut rng, SamplingMode::Jitter).unwrap();
            assert!(pt.x > 0.5 && pt.x < 0.75, "{pt:?}");
            assert!(pt.p > 0.25 && pt.p < 0.5, "{pt:?}");
        }
        let pt = sample_phase_point(&field, &mut rng, SamplingMode::CellCenter).unwrap();
        assert_eq!(pt, PhasePoint::new(0.625, 0.375));
    }

    #[test]
    fn zero_field_cannot_be_sampled() {
        let field = HusimiField::from_values(window01(2), 0.5, vec![0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_phase_point(&field, &mut rng, SamplingMode::Jitter),
            Err(MeasurementError::ZeroMass)
        );
    }

    #[test]
    fn uniform_field_passes_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let r = 5;
        let field = HusimiField::from_values(window01(r), 0.5, vec![1.0; r * r]);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let mut counts = vec![0usize; r * r];
        for _ in 0..draws {
            let pt = sample_phase_point(&field, &mut rng, SamplingMode::Jitter).unwrap();
            let i = ((pt.x * r as f64) as usize).min(r - 1);
            let j = ((pt.p * r as f64) as usize).min(r - 1);
            counts[i * r + j] += 1;
        }
        let expected = draws as f64 / (r * r) as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((r * r - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 {chi2} p {p}");
    }

    #[test]
    fn coherent_field_sample_mean() {
        let c = PhasePoint::new(0.3, 1.0);
        let (psi, w) = coherent(0.01, c);
        let field = compute_husimi(&psi, &PhaseWindow::around(c, &w, 5.0, 50), &w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_phase_point(&field, &mut rng, SamplingMode::Jitter).unwrap().x)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - c.x).abs() < 4.0 * (var / n as f64).sqrt());
    }

    fn cfg(hbar: f64) -> ValidatedConfig {
        SimConfig {
            hbar,
            ..Default::default()
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn collapse_yields_coherent_state_at_outcome() {
        let config = cfg(1e-3);
        let c = PhasePoint::new(0.0, 1.0);
        let w = config.widths();
        let grid = Grid::centered(0.0, 15.0 * w.sigma_x, 1024).unwrap();
        let psi = make_coherent_state(c, &w, config.hbar, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (pt, out) = measure(&psi, &config, &mut rng).unwrap();
        assert!((husimi_at(&out, pt, &w) - 1.0 / PI).abs() < 1e-6);
        assert!((out.expectation_x() - pt.x).abs() < 1e-9);
        assert!((out.expectation_p() - pt.p).abs() < 1e-9);
    }

    #[test]
    fn tiny_hbar_outcome_stays_close() {
        let config = cfg(1e-6);
        let w = config.widths();
        let c = PhasePoint::new(0.1, 1.0);
        let grid = Grid::centered(0.1, 15.0 * w.sigma_x, 1024).unwrap();
        let psi = make_coherent_state(c, &w, config.hbar, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (pt, _) = measure(&psi, &config, &mut rng).unwrap();
            assert!((pt.x - c.x).abs() <= 5.0 * w.sigma_x);
            assert!((pt.p - c.p).abs() <= 5.0 * w.sigma_p);
        }
    }

    #[test]
    fn repeated_measurement_spread() {
        // Oracle: variance of x under Q of a coherent state, by direct
        // numerical integration of the closed-form Q over a wide window.
        let config = cfg(1e-2);
        let w = config.widths();
        let c = PhasePoint::new(0.0, 1.0);
        let n = 2001;
        let h = 16.0 * w.sigma_x / (n - 1) as f64;
        let (mut z, mut m2) = (0.0, 0.0);
        for i in 0..n {
            let dx = -8.0 * w.sigma_x + i as f64 * h;
            let q = (-(dx * dx) / (4.0 * w.sigma_x * w.sigma_x)).exp();
            z += q;
            m2 += q * dx * dx;
        }
        let oracle_std = (m2 / z).sqrt();
        assert!((oracle_std / w.sigma_x - 2f64.sqrt()).abs() < 1e-6);

        let grid = Grid::centered(0.0, 15.0 * w.sigma_x, 1024).unwrap();
        let psi = make_coherent_state(c, &w, config.hbar, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..10_000).map(|_| measure(&psi, &config, &mut rng).unwrap().0.x).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let std = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt();
        assert!(std >= w.sigma_x && std <= 2.0 * w.sigma_x, "std {std}");
        assert!((std - oracle_std).abs() / oracle_std < 0.05, "std {std} oracle {oracle_std}");
    }

    #[test]
    fn measurement_chain_has_no_drift() {
        let config = SimConfig {
            hbar: 1e-4,
            husimi_resolution: 24,
            grid_points: 64,
            points_per_sigma: 4.0,
            ..Default::default()
        }
        .validate()
        .unwrap();
        let w = config.widths();
        let start = PhasePoint::new(0.2, 1.0);
        let grid = Grid::centered(start.x, 15.0 * w.sigma_x, 256).unwrap();
        let psi0 = make_coherent_state(start, &w, config.hbar, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let chains = 10_000;
        let len = 10;
        let mut dxs = Vec::with_capacity(chains);
        let mut dps = Vec::with_capacity(chains);
        for _ in 0..chains {
            let mut psi = psi0.clone();
            let mut last = start;
            for _ in 0..len {
                let (pt, next) = measure(&psi, &config, &mut rng).unwrap();
                last = pt;
                psi = next;
            }
            dxs.push((last.x - start.x) / len as f64);
            dps.push((last.p - start.p) / len as f64);
        }
        for d in [dxs, dps] {
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let se = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            assert!(mean.abs() < 5.0 * se, "mean {mean} se {se}");
        }
    }
}
