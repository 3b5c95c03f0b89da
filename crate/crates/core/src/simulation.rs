//! The measurement loop: evolve, measure, collapse, regrid, compare against
//! the classical reference. Single runs, lock-step ensembles and independent
//! per-run ensembles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::{evolve_to, ClassicalState};
use crate::config::{DivergenceMode, SimConfig, ValidatedConfig};
use crate::divergence::{rms_deviation, DivergenceError, DivergenceSeries};
use crate::grid_state::{make_coherent_state, plan_window, rewindow, Grid, StateError, WaveFunction};
use crate::measurement::{measure, window_policy, MeasurementError, PhasePoint};
use crate::propagator::Propagator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepFailure {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

/// A failure inside the loop, stamped with the simulation time at which it
/// happened and, for ensembles, the member index.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}t = {t}: {failure}", member.map(|m| format!("member {m}, ")).unwrap_or_default())]
pub struct SimulationError {
    pub t: f64,
    pub member: Option<usize>,
    pub failure: StepFailure,
}

impl SimulationError {
    fn at(t: f64, failure: impl Into<StepFailure>) -> Self {
        SimulationError {
            t,
            member: None,
            failure: failure.into(),
        }
    }

    fn for_member(mut self, member: usize) -> Self {
        self.member = Some(member);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    /// Sampled outcome at each measurement time.
    pub quantum: Vec<(f64, PhasePoint)>,
    /// Classical reference at the same times.
    pub classical: Vec<ClassicalState>,
    pub rms: DivergenceSeries,
    pub divergence_time: Option<f64>,
}

impl RunRecord {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.quantum.iter().map(|q| q.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub mode: DivergenceMode,
    pub runs: Vec<RunRecord>,
    /// The pooled `D(t)` over all members (ensemble mode only).
    pub pooled: Option<DivergenceSeries>,
    /// Pooled crossing time (ensemble mode) or the mean over runs with
    /// non-crossing runs counted as `t_max` (per-run mode).
    pub mean_divergence_time: f64,
    /// True if any contribution to the mean is a non-crossing at `t_max`.
    pub censored: bool,
    pub config: SimConfig,
}

/// Seed of ensemble member `member`, a SplitMix64 mix of the base seed.
pub fn member_seed(base_seed: u64, member: u64) -> u64 {
    mix(mix(base_seed) ^ member.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One member's quantum state and its private random stream.
struct Member {
    seed: u64,
    rng: ChaCha8Rng,
    psi: WaveFunction,
    propagator: Propagator,
    quantum: Vec<(f64, PhasePoint)>,
}

impl Member {
    fn new(config: &ValidatedConfig, seed: u64) -> Result<Member, SimulationError> {
        let widths = config.widths();
        let start = PhasePoint::new(config.x0, config.p0);
        let psi = plan_window(start, &widths, &window_policy(config), config.dt_meas, config.mass)
            .and_then(|grid| make_coherent_state(start, &widths, config.hbar, grid))
            .map_err(|e| SimulationError::at(0.0, e))?;
        Ok(Member {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            psi,
            propagator: Propagator::new(config.potential, config.hbar, config.mass, config.substep_max),
            quantum: Vec::new(),
        })
    }

    /// Evolves through one measurement interval ending at `t` and records
    /// the sampled point (or, with measurements off, the expectation values).
    fn advance(&mut self, config: &ValidatedConfig, t: f64) -> Result<PhasePoint, SimulationError> {
        let fail = |e: StepFailure| SimulationError::at(t, e);
        self.propagator
            .evolve_in_place(&mut self.psi, config.dt_meas)
            .map_err(|e| fail(e.into()))?;
        let point = if config.measurements {
            let (outcome, collapsed) = measure(&self.psi, config, &mut self.rng).map_err(|e| fail(e.into()))?;
            self.psi = collapsed;
            outcome
        } else {
            let point = PhasePoint::new(self.psi.expectation_x(), self.psi.expectation_p());
            self.psi = recenter(&self.psi, point.x).map_err(|e| fail(e.into()))?;
            point
        };
        self.quantum.push((t, point));
        Ok(point)
    }
}

/// Moves the grid by a whole number of nodes so it stays centered on `x`.
/// Exact (no interpolation), so the diagnostic mode adds no regridding error.
fn recenter(psi: &WaveFunction, x: f64) -> Result<WaveFunction, StateError> {
    let g = psi.grid();
    let shift = ((x - g.center()) / g.dx()).round();
    if shift == 0.0 {
        return Ok(psi.clone());
    }
    let grid = Grid::new(g.x_min() + shift * g.dx(), g.dx(), g.len())?;
    rewindow(psi, grid)
}

/// Measurement time `k dt`, computed from the index.
fn clock(config: &ValidatedConfig, k: u64) -> f64 {
    k as f64 * config.dt_meas
}

fn finished(config: &ValidatedConfig, t: f64, series: &DivergenceSeries) -> bool {
    (config.stop_at_threshold && series.has_diverged()) || t >= config.t_max * (1.0 - 1e-12)
}

/// Single trajectory with its own classical reference.
pub fn run_single(config: &ValidatedConfig, seed: u64) -> Result<RunRecord, SimulationError> {
    let mut member = Member::new(config, seed)?;
    let mut classical = ClassicalState::new(0.0, config.x0, config.p0);
    let mut classical_track = Vec::new();
    let mut series = DivergenceSeries::new(config.divergence_threshold);
    let mut k = 0u64;
    loop {
        k += 1;
        let t = clock(config, k);
        let point = member.advance(config, t)?;
        classical = evolve_to(classical, &config.potential, config.mass, t, config.dt_classical);
        classical_track.push(classical);
        let d = rms_deviation(&classical, &[point]).map_err(|e| SimulationError::at(t, e))?;
        series.record(t, d).map_err(|e| SimulationError::at(t, e))?;
        if finished(config, t, &series) {
            break;
        }
    }
    Ok(RunRecord {
        seed,
        quantum: member.quantum,
        classical: classical_track,
        divergence_time: series.divergence_time,
        rms: series,
    })
}

/// Runs the configured ensemble with member seeds derived from `base_seed`.
pub fn run_ensemble(config: &ValidatedConfig) -> Result<EnsembleRecord, SimulationError> {
    let seeds: Vec<u64> = (0..config.ensemble_size as u64)
        .map(|i| member_seed(config.base_seed, i))
        .collect();
    run_members(config, &seeds)
}

/// Runs an ensemble with explicit member seeds.
pub fn run_members(config: &ValidatedConfig, seeds: &[u64]) -> Result<EnsembleRecord, SimulationError> {
    match config.divergence_mode {
        DivergenceMode::Ensemble => run_lock_step(config, seeds),
        DivergenceMode::PerRun => {
            let results: Vec<Result<RunRecord, SimulationError>> =
                seeds.par_iter().map(|&s| run_single(config, s)).collect();
            let mut runs = Vec::with_capacity(results.len());
            for (i, r) in results.into_iter().enumerate() {
                runs.push(r.map_err(|e| e.for_member(i))?);
            }
            Ok(EnsembleRecord::from_runs(config, runs))
        }
    }
}

/// Lock-step ensemble: time is the outer loop, members the inner one, with a
/// single classical reference and one pooled `D(t)`.
fn run_lock_step(config: &ValidatedConfig, seeds: &[u64]) -> Result<EnsembleRecord, SimulationError> {
    let mut members = seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| Member::new(config, s).map_err(|e| e.for_member(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut classical = ClassicalState::new(0.0, config.x0, config.p0);
    let mut classical_track = Vec::new();
    let mut pooled = DivergenceSeries::new(config.divergence_threshold);
    let mut per_member: Vec<DivergenceSeries> = members
        .iter()
        .map(|_| DivergenceSeries::new(config.divergence_threshold))
        .collect();
    let mut k = 0u64;
    loop {
        k += 1;
        let t = clock(config, k);
        let points = members
            .par_iter_mut()
            .enumerate()
            .map(|(i, m)| m.advance(config, t).map_err(|e| e.for_member(i)))
            .collect::<Result<Vec<_>, _>>()?;
        classical = evolve_to(classical, &config.potential, config.mass, t, config.dt_classical);
        classical_track.push(classical);
        let d = rms_deviation(&classical, &points).map_err(|e| SimulationError::at(t, e))?;
        pooled.record(t, d).map_err(|e| SimulationError::at(t, e))?;
        for (series, p) in per_member.iter_mut().zip(&points) {
            let d = rms_deviation(&classical, std::slice::from_ref(p)).map_err(|e| SimulationError::at(t, e))?;
            series.record(t, d).map_err(|e| SimulationError::at(t, e))?;
        }
        if finished(config, t, &pooled) {
            break;
        }
    }
    let runs = members
        .into_iter()
        .zip(per_member)
        .map(|(m, rms)| RunRecord {
            seed: m.seed,
            quantum: m.quantum,
            classical: classical_track.clone(),
            divergence_time: rms.divergence_time,
            rms,
        })
        .collect();
    Ok(EnsembleRecord {
        mode: DivergenceMode::Ensemble,
        runs,
        mean_divergence_time: pooled.divergence_time.unwrap_or(config.t_max),
        censored: !pooled.has_diverged(),
        pooled: Some(pooled),
        config: config.config().clone(),
    })
}

impl EnsembleRecord {
    /// Per-run aggregate; order of `runs` does not affect the mean beyond
    /// floating-point summation, which is done in seed order.
    pub fn from_runs(config: &ValidatedConfig, mut runs: Vec<RunRecord>) -> EnsembleRecord {
        let n = runs.len().max(1) as f64;
        let mut times: Vec<f64> = runs
            .iter()
            .map(|r| r.divergence_time.unwrap_or(config.t_max))
            .collect();
        times.sort_by(f64::total_cmp);
        let mean = times.iter().sum::<f64>() / n;
        let censored = runs.iter().any(|r| r.divergence_time.is_none());
        runs.sort_by_key(|r| r.seed);
        EnsembleRecord {
            mode: DivergenceMode::PerRun,
            runs,
            pooled: None,
            mean_divergence_time: mean,
            censored,
            config: config.config().clone(),
        }
    }

    /// The series used for reporting: pooled if present, else the
    /// per-time RMS over all runs that are still active at that time.
    pub fn rms_series(&self) -> DivergenceSeries {
        if let Some(p) = &self.pooled {
            return p.clone();
        }
        let threshold = self.config.divergence_threshold;
        let longest = self.runs.iter().map(|r| r.rms.len()).max().unwrap_or(0);
        let mut out = DivergenceSeries::new(threshold);
        for k in 0..longest {
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut t = 0.0;
            for r in &self.runs {
                if let Some(&(tk, d)) = r.rms.samples.get(k) {
                    sum += d * d;
                    count += 1;
                    t = tk;
                }
            }
            let _ = out.record(t, (sum / count as f64).sqrt());
        }
        out
    }

    pub fn max_rms(&self) -> f64 {
        self.rms_series().max_deviation()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(hbar: f64, dt: f64) -> SimConfig {
        SimConfig {
            hbar,
            dt_meas: dt,
            husimi_resolution: 20,
            grid_points: 64,
            points_per_sigma: 4.0,
            t_max: 2.0,
            ensemble_size: 3,
            ..SimConfig::default()
        }
    }

    #[test]
    fn member_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..1000).map(|i| member_seed(7, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_ne!(member_seed(0, 0), member_seed(1, 0));
    }

    #[test]
    fn single_run_is_deterministic_and_clock_aligned() {
        let cfg = small(1e-3, 0.05).validate().unwrap();
        let a = run_single(&cfg, 11).unwrap();
        let b = run_single(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.quantum.len(), a.classical.len());
        for (k, ((tq, _), c)) in a.quantum.iter().zip(&a.classical).enumerate() {
            assert_eq!(*tq, c.t);
            assert_eq!(*tq, (k + 1) as f64 * 0.05);
        }
        let c = run_single(&cfg, 12).unwrap();
        assert_ne!(a.quantum, c.quantum);
    }

    #[test]
    fn dt_beyond_t_max_gives_one_measurement() {
        let mut cfg = small(1e-3, 0.5);
        cfg.t_max = 0.3;
        let r = run_single(&cfg.validate().unwrap(), 1).unwrap();
        assert_eq!(r.quantum.len(), 1);
        assert_eq!(r.quantum[0].0, 0.5);
    }

    #[test]
    fn large_hbar_diverges_immediately() {
        let mut cfg = small(0.1, 0.1);
        cfg.grid_points = 256;
        let cfg = cfg.validate().unwrap();
        for seed in 0..5 {
            let r = run_single(&cfg, seed).unwrap();
            assert!(r.divergence_time.unwrap() < 1.0, "{:?}", r.divergence_time);
        }
    }

    #[test]
    fn singleton_ensemble_matches_single_run() {
        let mut cfg = small(1e-3, 0.05);
        cfg.ensemble_size = 1;
        cfg.base_seed = 9;
        let cfg = cfg.validate().unwrap();
        let single = run_single(&cfg, member_seed(9, 0)).unwrap();
        let ens = run_ensemble(&cfg).unwrap();
        assert_eq!(ens.runs.len(), 1);
        assert_eq!(ens.runs[0], single);
        assert_eq!(ens.pooled.as_ref().unwrap(), &single.rms);
    }

    #[test]
    fn identical_seeds_pool_to_member_series() {
        let cfg = small(1e-3, 0.05).validate().unwrap();
        let ens = run_members(&cfg, &[5, 5, 5]).unwrap();
        let single = run_single(&cfg, 5).unwrap();
        let pooled = ens.pooled.unwrap();
        assert_eq!(pooled.samples.len(), single.rms.samples.len());
        for (a, b) in pooled.samples.iter().zip(&single.rms.samples) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() <= 1e-15 * (1.0 + b.1));
        }
    }

    #[test]
    fn per_run_aggregate_ignores_member_order() {
        let mut cfg = small(1e-2, 0.05);
        cfg.divergence_mode = DivergenceMode::PerRun;
        let cfg = cfg.validate().unwrap();
        let seeds = [3u64, 17, 42, 99];
        let mut shuffled = seeds;
        shuffled.reverse();
        shuffled.swap(0, 2);
        let a = run_members(&cfg, &seeds).unwrap();
        let b = run_members(&cfg, &shuffled).unwrap();
        assert_eq!(a, b);
        let runs: Vec<_> = a.runs.iter().rev().cloned().collect();
        assert_eq!(EnsembleRecord::from_runs(&cfg, runs), a);
    }

    #[test]
    fn without_measurement_harmonic_centroid_is_classical() {
        let period = 2.0 * std::f64::consts::PI / 5f64.sqrt();
        let cfg = SimConfig {
            measurements: false,
            dt_meas: period / 40.0,
            t_max: period,
            substep_max: 1e-3,
            stop_at_threshold: false,
            ..SimConfig::default()
        }
        .validate()
        .unwrap();
        let r = run_single(&cfg, 0).unwrap();
        let (t, q) = *r.quantum.last().unwrap();
        assert!((t - period).abs() < 1e-12);
        let c = r.classical.last().unwrap();
        let dist = ((q.x - c.x).powi(2) + (q.p - c.p).powi(2)).sqrt();
        assert!(dist < 1e-4, "{dist}");
    }

    #[test]
    fn errors_carry_the_timestamp() {
        // an over-wide packet on a coarse window: the first collapse cannot
        // fit a coherent state with negligible edge mass
        let mut cfg = small(1e-3, 0.05);
        cfg.uncertainty_prefactor = 1.0;
        cfg.momentum_prefactor = 1.0;
        let err = run_single(&cfg.validate().unwrap(), 0).unwrap_err();
        assert_eq!(err.t, 0.0);
        assert!(err.to_string().starts_with("t = 0"), "{err}");
    }
}
