//! `qcorr` command line: `simulate`, `sweep` and `regimes`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, DivergenceMode, SimConfig};
use crate::io::{
    heatmap_svg, phase_portrait_svg, resolve_out_dir, rms_csv, sweep_csv, trajectories_csv, OutputBundle,
    CONFIG_SNAPSHOT_NAME, RMS_COLUMNS, TRAJECTORY_COLUMNS,
};
use crate::regimes::{evaluate, RegimeInputs};
use crate::simulation::run_ensemble;
use crate::sweep::{run_sweep, AxisSpec, CellResult, SweepError, SweepResult, SweepSpec, SWEEP_COLUMNS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "qcorr",
    version,
    about = "Quantum-classical correspondence under repeated coherent-state measurement",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one ensemble and write trajectories, the RMS series and a phase portrait.
    Simulate(SimulateArgs),
    /// Run a log-spaced (hbar, dt) sweep and write the divergence-time heatmap.
    Sweep(SweepArgs),
    /// Evaluate the two regime inequalities and the resulting label.
    Regimes(RegimesArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// key=value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    hbar: Option<f64>,
    /// Time between measurements.
    #[arg(long)]
    dt: Option<f64>,
    /// Initial momentum.
    #[arg(long)]
    p: Option<f64>,
    /// Initial position.
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// harmonic, free, linear, quartic, gaussian_well or double_well.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ensemble size.
    #[arg(long, short = 'n')]
    ensemble: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory (default $QCORR_OUT_DIR, then ./qcorr-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value_t = 3e-6)]
    hbar_min: f64,
    #[arg(long, default_value_t = 1e-2)]
    hbar_max: f64,
    #[arg(long, default_value_t = 25)]
    hbar_count: usize,
    #[arg(long, default_value_t = 0.01)]
    dt_min: f64,
    #[arg(long, default_value_t = 0.3)]
    dt_max: f64,
    #[arg(long, default_value_t = 25)]
    dt_count: usize,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// per_run or ensemble.
    #[arg(long, default_value = "per_run")]
    mode: String,
    /// Continue from the checkpoint in the output directory instead of starting over.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RegimesArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Tolerance standing in for "much less than one".
    #[arg(long)]
    eps: Option<f64>,
    /// Position displacement (default sigma_x).
    #[arg(long)]
    delta_x: Option<f64>,
    /// Momentum displacement (default sigma_p).
    #[arg(long)]
    delta_p: Option<f64>,
    #[arg(long)]
    json: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl ConfigArgs {
    fn build(&self) -> Result<SimConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(name) = &self.potential {
            cfg.set("potential", name)?;
        }
        let mut pairs = Vec::new();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::BadValue {
                key: kv.clone(),
                message: "expected KEY=VALUE".into(),
            })?;
            pairs.push((k.trim(), v.trim()));
        }
        cfg.apply_pairs(pairs)?;
        let opt = |v: Option<f64>, slot: &mut f64| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        opt(self.hbar, &mut cfg.hbar);
        opt(self.dt, &mut cfg.dt_meas);
        opt(self.p, &mut cfg.p0);
        opt(self.x, &mut cfg.x0);
        opt(self.mass, &mut cfg.mass);
        opt(self.omega, &mut cfg.omega);
        opt(self.t_max, &mut cfg.t_max);
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(n) = self.ensemble {
            cfg.ensemble_size = n;
        }
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() || e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                EXIT_CONFIG
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Regimes(a) => regimes(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(m)) => {
            eprintln!("qcorr: configuration error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("qcorr: {m}");
            EXIT_RUNTIME
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    serde_json::to_vec_pretty(v).map_err(runtime)
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let cfg = a.cfg.build()?.validate()?;
    let out = resolve_out_dir(a.out.as_deref());
    let record = run_ensemble(&cfg).map_err(runtime)?;
    let series = record.rms_series();

    let mut bundle = OutputBundle::new();
    bundle.add(CONFIG_SNAPSHOT_NAME, cfg.to_config_string());
    bundle.add("record.json", to_json(&record)?);
    bundle.add_table("trajectories.csv", trajectories_csv(&record.runs).map_err(runtime)?, &TRAJECTORY_COLUMNS);
    bundle.add_table("rms.csv", rms_csv(&series).map_err(runtime)?, &RMS_COLUMNS);
    if let Some(first) = record.runs.first() {
        bundle.add("phase_portrait.svg", phase_portrait_svg(first));
    }
    let mut notes = vec![format!("divergence mode: {}", record.mode)];
    if record.censored {
        notes.push(format!("censored: no threshold crossing by t_max = {}; mean uses t_max", cfg.t_max));
    }
    bundle
        .write(&out, "simulate", cfg.base_seed, notes)
        .map_err(|e| runtime(format!("writing {}: {e}", out.display())))?;

    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "mean divergence time {}{} s over {} member(s), max RMS {:.6}",
        record.mean_divergence_time,
        if record.censored { " (censored)" } else { "" },
        record.runs.len(),
        series.max_deviation()
    );
    let _ = writeln!(stdout, "wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepDocument<'a> {
    spec: &'a SweepSpec,
    hbar_values: &'a [f64],
    dt_values: &'a [f64],
    /// `divergence_time[i][j]` for `hbar_values[i]`, `dt_values[j]`; null marks a failed cell.
    divergence_time: Vec<Vec<Option<f64>>>,
    censored: Vec<Vec<bool>>,
    regime: Vec<Vec<String>>,
    base_seed: u64,
    t_max: f64,
}

fn by_cell<T>(result: &SweepResult, f: impl Fn(&CellResult) -> T) -> Vec<Vec<T>> {
    (0..result.hbar_values.len())
        .map(|i| (0..result.dt_values.len()).map(|j| f(result.cell(i, j))).collect())
        .collect()
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let base = a.cfg.build()?;
    base.clone().validate()?;
    let mode: DivergenceMode = a.mode.parse().map_err(|e: String| Failure::Config(e))?;
    let spec = SweepSpec {
        hbar: AxisSpec::new(a.hbar_min, a.hbar_max, a.hbar_count),
        dt: AxisSpec::new(a.dt_min, a.dt_max, a.dt_count),
        base,
        parallelism: a.jobs,
        mode,
    };
    let out = resolve_out_dir(a.out.as_deref());
    fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    let checkpoint = out.join("sweep_checkpoint.csv");
    if !a.resume && checkpoint.exists() {
        fs::remove_file(&checkpoint).map_err(runtime)?;
    }
    let result = run_sweep(&spec, Some(&checkpoint)).map_err(|e| match e {
        SweepError::Invalid(_) => Failure::Config(e.to_string()),
        other => runtime(other),
    })?;

    let doc = SweepDocument {
        spec: &spec,
        hbar_values: &result.hbar_values,
        dt_values: &result.dt_values,
        divergence_time: result.matrix(),
        censored: by_cell(&result, |c| c.censored),
        regime: by_cell(&result, |c| c.regime.to_string()),
        base_seed: result.base_seed,
        t_max: result.t_max,
    };
    let mut bundle = OutputBundle::new();
    bundle.add(CONFIG_SNAPSHOT_NAME, spec.base.to_config_string());
    bundle.add_table("sweep.csv", sweep_csv(&result).map_err(runtime)?, &SWEEP_COLUMNS);
    bundle.add("sweep.json", to_json(&doc)?);
    bundle.add("heatmap.svg", heatmap_svg(&result));
    let failures = result.failures().count();
    let mut notes = vec![format!(
        "censored cells use t_max = {} as their divergence time",
        result.t_max
    )];
    if failures > 0 {
        notes.push(format!("{failures} cell(s) failed; see the error column"));
    }
    bundle
        .write(&out, "sweep", spec.base.base_seed, notes)
        .map_err(|e| runtime(format!("writing {}: {e}", out.display())))?;
    println!(
        "{}x{} cells, {} failed; wrote {}",
        result.hbar_values.len(),
        result.dt_values.len(),
        failures,
        out.display()
    );
    Ok(())
}

fn regimes(a: RegimesArgs) -> Result<(), Failure> {
    let mut cfg = a.cfg.build()?;
    if let Some(eps) = a.eps {
        cfg.regime_tolerance = eps;
    }
    let cfg = cfg.validate()?;
    let mut inputs = RegimeInputs::from_config(&cfg);
    if let Some(dx) = a.delta_x {
        inputs.delta_x = dx;
    }
    if let Some(dp) = a.delta_p {
        inputs.delta_p = dp;
    }
    let report = evaluate(&inputs, cfg.regime_tolerance);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
        return Ok(());
    }
    let show = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_else(|| "undefined".into());
    println!("uncertainty_lhs {}", show(report.uncertainty));
    println!("wavelike_lhs {}", show(report.wavelike));
    println!("label {}", report.label);
    Ok(())
}
