//! Split-operator spectral propagation.
//!
//! One step is the symmetric product
//! `exp(-i V dt / 2 hbar) F^-1 exp(-i (q + hbar k)^2 dt / 2 m hbar) F exp(-i V dt / 2 hbar)`,
//! with `q` the carrier momentum of the wavefunction's storage frame. Before
//! the kinetic factor is applied the frame is re-centered on the packet's mean
//! wavenumber whenever it has drifted more than `n / 16` bins. The shift is a
//! whole number of bins, so it only relabels the momentum grid.

use num_complex::Complex64;

use crate::grid_state::{Grid, StateError, WaveFunction};
use crate::potentials::PotentialSpec;
use crate::spectral::{signed_bin, FftPair};

/// Cached phase factors for one `(grid, dt)` pair.
pub struct PropagatorPlan {
    grid: Grid,
    hbar: f64,
    mass: f64,
    dt: f64,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    kinetic_carrier: f64,
    fft: FftPair,
    buffer: Vec<Complex64>,
}

impl PropagatorPlan {
    pub fn new(grid: Grid, potential: &PotentialSpec, hbar: f64, mass: f64, dt: f64) -> Self {
        let half_potential = grid
            .positions()
            .map(|x| Complex64::from_polar(1.0, -potential.value(x) * dt / (2.0 * hbar)))
            .collect();
        let mut plan = PropagatorPlan {
            grid,
            hbar,
            mass,
            dt,
            half_potential,
            kinetic: Vec::new(),
            kinetic_carrier: f64::NAN,
            fft: FftPair::new(grid.len()),
            buffer: vec![Complex64::new(0.0, 0.0); grid.len()],
        };
        plan.rebuild_kinetic(0.0);
        plan
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn half_potential(&self) -> &[Complex64] {
        &self.half_potential
    }

    pub fn kinetic(&self) -> &[Complex64] {
        &self.kinetic
    }

    fn rebuild_kinetic(&mut self, carrier: f64) {
        let scale = self.dt / (2.0 * self.mass * self.hbar);
        self.kinetic = self
            .grid
            .wavenumbers()
            .into_iter()
            .map(|k| {
                let p = carrier + self.hbar * k;
                Complex64::from_polar(1.0, -p * p * scale)
            })
            .collect();
        self.kinetic_carrier = carrier;
    }

    /// Advances `psi` by one step of length `dt` in place.
    pub fn step_in_place(&mut self, psi: &mut WaveFunction) -> Result<(), StateError> {
        if *psi.grid() != self.grid {
            return Err(StateError::GridMismatch);
        }
        let n = self.grid.len();
        {
            let amps = psi.amplitudes_mut();
            for (a, v) in amps.iter_mut().zip(&self.half_potential) {
                *a *= v;
            }
            self.buffer.copy_from_slice(amps);
        }
        self.fft.forward(&mut self.buffer);

        let total: f64 = self.buffer.iter().map(|z| z.norm_sqr()).sum();
        let mean_bin: f64 = self
            .buffer
            .iter()
            .enumerate()
            .map(|(j, z)| signed_bin(j, n) as f64 * z.norm_sqr())
            .sum::<f64>()
            / total;
        if mean_bin.abs() > (n / 16) as f64 {
            let shift = mean_bin.round() as i64;
            self.buffer.rotate_left(shift.rem_euclid(n as i64) as usize);
            let carrier = psi.carrier() + self.hbar * shift as f64 * self.grid.dk();
            psi.set_carrier(carrier);
        }
        if psi.carrier() != self.kinetic_carrier {
            self.rebuild_kinetic(psi.carrier());
        }

        for (z, k) in self.buffer.iter_mut().zip(&self.kinetic) {
            *z *= k;
        }
        self.fft.inverse(&mut self.buffer);
        let amps = psi.amplitudes_mut();
        for ((a, b), v) in amps.iter_mut().zip(&self.buffer).zip(&self.half_potential) {
            *a = b * v;
        }
        Ok(())
    }

    pub fn step(&mut self, psi: &WaveFunction) -> Result<WaveFunction, StateError> {
        let mut out = psi.clone();
        self.step_in_place(&mut out)?;
        Ok(out)
    }
}

/// Evolves wavefunctions for arbitrary durations, subdividing into steps no
/// longer than `substep_max`. Plans are rebuilt whenever the grid changes.
pub struct Propagator {
    potential: PotentialSpec,
    hbar: f64,
    mass: f64,
    substep_max: f64,
    main: Option<PropagatorPlan>,
    tail: Option<PropagatorPlan>,
}

impl Propagator {
    pub fn new(potential: PotentialSpec, hbar: f64, mass: f64, substep_max: f64) -> Self {
        Propagator {
            potential,
            hbar,
            mass,
            substep_max,
            main: None,
            tail: None,
        }
    }

    fn plan_for<'a>(
        slot: &'a mut Option<PropagatorPlan>,
        grid: &Grid,
        dt: f64,
        potential: &PotentialSpec,
        hbar: f64,
        mass: f64,
    ) -> &'a mut PropagatorPlan {
        let stale = match slot {
            Some(p) => p.grid != *grid || p.dt != dt,
            None => true,
        };
        if stale {
            *slot = Some(PropagatorPlan::new(*grid, potential, hbar, mass, dt));
        }
        slot.as_mut().expect("plan just built")
    }

    /// Number of substeps used for a burst of length `duration`.
    pub fn substeps(&self, duration: f64) -> usize {
        ((duration / self.substep_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// Applies `ceil(duration / substep_max)` steps, the last one shortened so
    /// that the total is exactly `duration`.
    pub fn evolve_in_place(&mut self, psi: &mut WaveFunction, duration: f64) -> Result<(), StateError> {
        if !(duration > 0.0) {
            return Err(StateError::BadGrid(format!("burst duration {duration} must be positive")));
        }
        let steps = self.substeps(duration);
        let last = duration - (steps - 1) as f64 * self.substep_max;
        let grid = *psi.grid();
        if steps > 1 {
            let plan = Self::plan_for(
                &mut self.main,
                &grid,
                self.substep_max,
                &self.potential,
                self.hbar,
                self.mass,
            );
            for _ in 0..steps - 1 {
                plan.step_in_place(psi)?;
            }
        }
        let slot = if last == self.substep_max {
            &mut self.main
        } else {
            &mut self.tail
        };
        let plan = Self::plan_for(slot, &grid, last, &self.potential, self.hbar, self.mass);
        plan.step_in_place(psi)
    }

    pub fn evolve_burst(&mut self, psi: &WaveFunction, duration: f64) -> Result<WaveFunction, StateError> {
        let mut out = psi.clone();
        self.evolve_in_place(&mut out, duration)?;
        Ok(out)
    }
}
