//! Log-spaced (hbar, dt) sweeps with per-cell seeds, failure isolation and
//! an append-only checkpoint file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DivergenceMode, SimConfig};
use crate::regimes::{evaluate, RegimeInputs, RegimeLabel};
use crate::simulation::{mix, run_ensemble};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        AxisSpec { min, max, count }
    }

    fn violations(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.min > 0.0 && self.min.is_finite()) {
            out.push(format!("{name} minimum must be positive"));
        }
        if !(self.max > self.min && self.max.is_finite()) {
            out.push(format!("{name} maximum must exceed the minimum"));
        }
        if self.count < 2 {
            out.push(format!("{name} count must be at least 2"));
        }
        out
    }

    /// Geometric progression from `min` to `max`, both endpoints exact.
    pub fn values(&self) -> Vec<f64> {
        let last = self.count - 1;
        let ratio = (self.max / self.min).ln();
        (0..self.count)
            .map(|k| match k {
                0 => self.min,
                k if k == last => self.max,
                k => self.min * (ratio * k as f64 / last as f64).exp(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub hbar: AxisSpec,
    pub dt: AxisSpec,
    pub base: SimConfig,
    /// Worker threads; 0 uses the rayon default.
    pub parallelism: usize,
    pub mode: DivergenceMode,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            hbar: AxisSpec::new(3e-6, 1e-2, 25),
            dt: AxisSpec::new(0.01, 0.3, 25),
            base: SimConfig::default(),
            parallelism: 0,
            mode: DivergenceMode::PerRun,
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

pub fn build_axes(spec: &SweepSpec) -> Result<(Vec<f64>, Vec<f64>), SweepError> {
    let mut errs = spec.hbar.violations("hbar");
    errs.extend(spec.dt.violations("dt"));
    if !errs.is_empty() {
        return Err(SweepError::Invalid(errs));
    }
    Ok((spec.hbar.values(), spec.dt.values()))
}

/// Seed of cell `(i, j)`, derived from the base seed and the position only.
pub fn cell_seed(base_seed: u64, i: usize, j: usize) -> u64 {
    mix(mix(mix(base_seed) ^ i as u64) ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Outcome of one `(hbar_i, dt_j)` cell. A failed cell keeps its position
/// and carries the error text instead of a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub i: usize,
    pub j: usize,
    pub hbar: f64,
    pub dt: f64,
    pub divergence_time: Option<f64>,
    pub censored: bool,
    pub regime: RegimeLabel,
    pub error: Option<String>,
}

/// Column order of the sweep CSV and the checkpoint file.
pub const SWEEP_COLUMNS: [&str; 8] = [
    "i",
    "j",
    "hbar",
    "dt",
    "divergence_time",
    "censored",
    "regime",
    "error",
];

#[derive(Debug, Serialize, Deserialize)]
struct CellRow {
    i: usize,
    j: usize,
    hbar: f64,
    dt: f64,
    divergence_time: Option<f64>,
    censored: bool,
    regime: String,
    error: Option<String>,
}

impl From<&CellResult> for CellRow {
    fn from(c: &CellResult) -> Self {
        CellRow {
            i: c.i,
            j: c.j,
            hbar: c.hbar,
            dt: c.dt,
            divergence_time: c.divergence_time,
            censored: c.censored,
            regime: c.regime.to_string(),
            error: c.error.clone(),
        }
    }
}

impl TryFrom<CellRow> for CellResult {
    type Error = String;
    fn try_from(r: CellRow) -> Result<Self, String> {
        Ok(CellResult {
            i: r.i,
            j: r.j,
            hbar: r.hbar,
            dt: r.dt,
            divergence_time: r.divergence_time,
            censored: r.censored,
            regime: r.regime.parse()?,
            error: r.error,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub hbar_values: Vec<f64>,
    pub dt_values: Vec<f64>,
    /// Indexed by `i * dt_values.len() + j`.
    pub cells: Vec<CellResult>,
    pub t_max: f64,
    pub base_seed: u64,
}

impl SweepResult {
    pub fn cell(&self, i: usize, j: usize) -> &CellResult {
        &self.cells[i * self.dt_values.len() + j]
    }

    /// `matrix[i][j]` of divergence times; `None` marks a failed cell.
    pub fn matrix(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.hbar_values.len())
            .map(|i| (0..self.dt_values.len()).map(|j| self.cell(i, j).divergence_time).collect())
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    /// Writes the cells as CSV with [`SWEEP_COLUMNS`].
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for c in &self.cells {
            out.serialize(CellRow::from(c))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn run_cell(spec: &SweepSpec, i: usize, j: usize, hbar: f64, dt: f64) -> CellResult {
    let mut cfg = spec.base.clone();
    cfg.hbar = hbar;
    cfg.dt_meas = dt;
    cfg.divergence_mode = spec.mode;
    cfg.base_seed = cell_seed(spec.base.base_seed, i, j);
    let regime = RegimeInputs::with_default_displacements(
        hbar,
        cfg.mass,
        cfg.omega,
        dt,
        cfg.x0,
        cfg.p0,
        cfg.potential,
    );
    let regime = evaluate(&regime, cfg.regime_tolerance).label;
    let outcome = cfg
        .validate()
        .map_err(|e| e.to_string())
        .and_then(|v| run_ensemble(&v).map_err(|e| e.to_string()));
    match outcome {
        Ok(rec) => CellResult {
            i,
            j,
            hbar,
            dt,
            divergence_time: Some(rec.mean_divergence_time),
            censored: rec.censored,
            regime,
            error: None,
        },
        Err(e) => CellResult {
            i,
            j,
            hbar,
            dt,
            divergence_time: None,
            censored: false,
            regime,
            error: Some(e),
        },
    }
}

fn checkpoint_err(path: &Path, e: impl ToString) -> SweepError {
    SweepError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Completed cells from an existing checkpoint, checked against the axes.
fn load_checkpoint(
    path: &Path,
    hbars: &[f64],
    dts: &[f64],
) -> Result<HashMap<(usize, usize), CellResult>, SweepError> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| checkpoint_err(path, e))?;
    for row in reader.deserialize::<CellRow>() {
        let row = row.map_err(|e| checkpoint_err(path, e))?;
        let cell = CellResult::try_from(row).map_err(|e| checkpoint_err(path, e))?;
        let matches = hbars.get(cell.i) == Some(&cell.hbar) && dts.get(cell.j) == Some(&cell.dt);
        if !matches {
            return Err(checkpoint_err(
                path,
                format!("cell ({}, {}) does not belong to this sweep's axes", cell.i, cell.j),
            ));
        }
        done.insert((cell.i, cell.j), cell);
    }
    Ok(done)
}

/// Runs every cell not already present in `checkpoint`, appending each
/// finished cell to it. Results do not depend on worker count or order.
pub fn run_sweep(spec: &SweepSpec, checkpoint: Option<&Path>) -> Result<SweepResult, SweepError> {
    let (hbars, dts) = build_axes(spec)?;
    let mut done = match checkpoint {
        Some(p) => load_checkpoint(p, &hbars, &dts)?,
        None => HashMap::new(),
    };
    let sink = match checkpoint {
        Some(p) => {
            let fresh = !p.exists() || std::fs::metadata(p).map(|m| m.len() == 0).unwrap_or(true);
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| checkpoint_err(p, e))?;
            let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
            Some(Mutex::new(writer))
        }
        None => None,
    };
    let todo: Vec<(usize, usize)> = (0..hbars.len())
        .flat_map(|i| (0..dts.len()).map(move |j| (i, j)))
        .filter(|k| !done.contains_key(k))
        .collect();

    let work = || -> Result<Vec<CellResult>, SweepError> {
        todo.par_iter()
            .map(|&(i, j)| {
                let cell = run_cell(spec, i, j, hbars[i], dts[j]);
                if let (Some(sink), Some(path)) = (&sink, checkpoint) {
                    let mut w: std::sync::MutexGuard<'_, csv::Writer<File>> =
                        sink.lock().unwrap_or_else(|p| p.into_inner());
                    w.serialize(CellRow::from(&cell)).map_err(|e| checkpoint_err(path, e))?;
                    w.flush().map_err(|e| checkpoint_err(path, e))?;
                }
                Ok(cell)
            })
            .collect()
    };
    let fresh = if spec.parallelism == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.parallelism)
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?
            .install(work)?
    };
    for c in fresh {
        done.insert((c.i, c.j), c);
    }
    let cells = (0..hbars.len())
        .flat_map(|i| (0..dts.len()).map(move |j| (i, j)))
        .map(|k| done.remove(&k).expect("every cell is run or restored"))
        .collect();
    Ok(SweepResult {
        hbar_values: hbars,
        dt_values: dts,
        cells,
        t_max: spec.base.t_max,
        base_seed: spec.base.base_seed,
    })
}
