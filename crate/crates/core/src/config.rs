//! Physical and numerical parameters, validation and the key=value file format.
//!
//! All quantities are in dimensionless natural units. The defaults reproduce the
//! reference parameter table (m = omega = 1, x0 = 0, p0 = 1, V = 5/2 x^2,
//! N = 25, momentum prefactor 8, uncertainty prefactor 15, threshold 0.05,
//! Husimi resolution 50).

use std::fmt;
use std::fs;
use std::ops::Deref;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potentials::PotentialSpec;

/// How a sampled outcome is placed inside the chosen Husimi cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Uniform jitter inside the cell.
    #[default]
    Jitter,
    /// Exact cell center.
    CellCenter,
}

/// How an ensemble is reduced to a single divergence time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceMode {
    /// Members advance in lock-step; one pooled RMS series with a single
    /// termination.
    #[default]
    Ensemble,
    /// Independent runs, each with its own divergence time; the arithmetic
    /// mean is reported.
    PerRun,
}

impl FromStr for SamplingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "jitter" => Ok(SamplingMode::Jitter),
            "center" | "cell_center" => Ok(SamplingMode::CellCenter),
            other => Err(format!("unknown sampling mode '{other}' (jitter|center)")),
        }
    }
}

impl FromStr for DivergenceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ensemble" => Ok(DivergenceMode::Ensemble),
            "per_run" | "per-run" => Ok(DivergenceMode::PerRun),
            other => Err(format!("unknown divergence mode '{other}' (ensemble|per_run)")),
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Jitter => "jitter",
            SamplingMode::CellCenter => "center",
        })
    }
}

impl fmt::Display for DivergenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DivergenceMode::Ensemble => "ensemble",
            DivergenceMode::PerRun => "per_run",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub hbar: f64,
    pub mass: f64,
    /// Coherent-state width parameter. Independent of the potential curvature.
    pub omega: f64,
    /// Time between measurements.
    pub dt_meas: f64,
    pub dt_classical: f64,
    pub x0: f64,
    pub p0: f64,
    pub potential: PotentialSpec,
    pub ensemble_size: usize,
    pub momentum_prefactor: f64,
    pub uncertainty_prefactor: f64,
    pub divergence_threshold: f64,
    pub husimi_resolution: usize,
    /// Half-width of the Husimi window in units of sigma_x / sigma_p.
    pub husimi_sigmas: f64,
    pub t_max: f64,
    pub base_seed: u64,
    /// Minimum number of spatial grid points (power of two).
    pub grid_points: usize,
    /// Minimum number of grid points per sigma_x; raises the grid size above
    /// `grid_points` when the window is wide compared to the packet.
    pub points_per_sigma: f64,
    /// Largest internal split-operator substep.
    pub substep_max: f64,
    pub sampling: SamplingMode,
    pub divergence_mode: DivergenceMode,
    /// Diagnostic switch: with measurements off the packet evolves freely and
    /// its expectation values stand in for the sampled coordinates.
    pub measurements: bool,
    /// Stop a run (or lock-step ensemble) at the first threshold crossing.
    pub stop_at_threshold: bool,
    /// Tolerance standing in for "much less than one" when classifying regimes.
    pub regime_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            hbar: 1e-3,
            mass: 1.0,
            omega: 1.0,
            dt_meas: 0.055,
            dt_classical: 0.01,
            x0: 0.0,
            p0: 1.0,
            potential: PotentialSpec::Harmonic { k: 5.0 },
            ensemble_size: 25,
            momentum_prefactor: 8.0,
            uncertainty_prefactor: 15.0,
            divergence_threshold: 0.05,
            husimi_resolution: 50,
            husimi_sigmas: 5.0,
            t_max: 30.0,
            base_seed: 0,
            grid_points: 1024,
            points_per_sigma: 8.0,
            substep_max: 0.005,
            sampling: SamplingMode::Jitter,
            divergence_mode: DivergenceMode::Ensemble,
            measurements: true,
            stop_at_threshold: true,
            regime_tolerance: 0.1,
        }
    }
}

/// Position and momentum widths of the coherent states, `sigma_x * sigma_p = hbar / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentWidths {
    pub sigma_x: f64,
    pub sigma_p: f64,
}

pub fn coherent_widths(hbar: f64, mass: f64, omega: f64) -> CoherentWidths {
    CoherentWidths {
        sigma_x: (hbar / (2.0 * mass * omega)).sqrt(),
        sigma_p: (hbar * mass * omega / 2.0).sqrt(),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {message}")]
    BadValue { key: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// A configuration whose invariants have been checked, with derived widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedConfig {
    config: SimConfig,
    widths: CoherentWidths,
}

impl ValidatedConfig {
    pub fn widths(&self) -> CoherentWidths {
        self.widths
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn into_inner(self) -> SimConfig {
        self.config
    }

    /// Validating again is a no-op.
    pub fn revalidate(self) -> Result<ValidatedConfig, ConfigError> {
        self.config.validate()
    }
}

impl Deref for ValidatedConfig {
    type Target = SimConfig;
    fn deref(&self) -> &SimConfig {
        &self.config
    }
}

fn positive(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(format!("{name} must be positive"));
    }
}

fn finite(errs: &mut Vec<String>, name: &str, v: f64) {
    if !v.is_finite() {
        errs.push(format!("{name} must be finite"));
    }
}

impl SimConfig {
    /// Checks every invariant and attaches the derived coherent widths.
    /// All violations are reported together, each naming its field.
    pub fn validate(self) -> Result<ValidatedConfig, ConfigError> {
        let mut errs = Vec::new();
        positive(&mut errs, "hbar", self.hbar);
        positive(&mut errs, "mass", self.mass);
        positive(&mut errs, "omega", self.omega);
        positive(&mut errs, "dt_meas", self.dt_meas);
        positive(&mut errs, "dt_classical", self.dt_classical);
        positive(&mut errs, "divergence_threshold", self.divergence_threshold);
        positive(&mut errs, "t_max", self.t_max);
        positive(&mut errs, "substep_max", self.substep_max);
        positive(&mut errs, "husimi_sigmas", self.husimi_sigmas);
        positive(&mut errs, "points_per_sigma", self.points_per_sigma);
        positive(&mut errs, "regime_tolerance", self.regime_tolerance);
        finite(&mut errs, "x0", self.x0);
        finite(&mut errs, "p0", self.p0);
        if self.ensemble_size < 1 {
            errs.push("ensemble_size must be at least 1".into());
        }
        if !(self.momentum_prefactor >= 1.0) {
            errs.push("momentum_prefactor must be at least 1".into());
        }
        if !(self.uncertainty_prefactor >= 1.0) {
            errs.push("uncertainty_prefactor must be at least 1".into());
        }
        if self.husimi_resolution < 2 {
            errs.push("husimi_resolution must be at least 2".into());
        }
        if self.grid_points < 64 || !self.grid_points.is_power_of_two() {
            errs.push("grid_points must be power of two and at least 64".into());
        }
        errs.extend(self.potential.violations());
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        let widths = coherent_widths(self.hbar, self.mass, self.omega);
        Ok(ValidatedConfig {
            config: self,
            widths,
        })
    }

    /// Sets one field from its config-file key. Potential parameter keys
    /// (`k`, `g`, `lambda`, `v0`, `w`, `a`, `b`) apply to the current potential.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim();
        let value = value.trim();
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value.parse::<T>().map_err(|e| ConfigError::BadValue {
                key: key.to_string(),
                message: e.to_string(),
            })
        }
        fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(ConfigError::BadValue {
                    key: key.to_string(),
                    message: format!("expected a boolean, got '{value}'"),
                }),
            }
        }
        let bad = |message: String| ConfigError::BadValue {
            key: key.to_string(),
            message,
        };
        match key {
            "hbar" => self.hbar = num(key, value)?,
            "mass" | "m" => self.mass = num(key, value)?,
            "omega" => self.omega = num(key, value)?,
            "dt" | "dt_meas" => self.dt_meas = num(key, value)?,
            "dt_classical" => self.dt_classical = num(key, value)?,
            "x0" => self.x0 = num(key, value)?,
            "p0" => self.p0 = num(key, value)?,
            "potential" => {
                self.potential = PotentialSpec::from_name(value).ok_or_else(|| {
                    bad(format!(
                        "unknown potential '{value}' (one of {})",
                        PotentialSpec::NAMES.join(", ")
                    ))
                })?
            }
            "k" | "g" | "lambda" | "v0" | "w" | "a" | "b" => {
                let v: f64 = num(key, value)?;
                if !self.potential.set_param(key, v) {
                    return Err(bad(format!(
                        "parameter does not apply to the {} potential",
                        self.potential.name()
                    )));
                }
            }
            "ensemble_size" | "n" => self.ensemble_size = num(key, value)?,
            "momentum_prefactor" => self.momentum_prefactor = num(key, value)?,
            "uncertainty_prefactor" => self.uncertainty_prefactor = num(key, value)?,
            "divergence_threshold" | "threshold" => self.divergence_threshold = num(key, value)?,
            "husimi_resolution" => self.husimi_resolution = num(key, value)?,
            "husimi_sigmas" => self.husimi_sigmas = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "base_seed" | "seed" => self.base_seed = num(key, value)?,
            "grid_points" => self.grid_points = num(key, value)?,
            "points_per_sigma" => self.points_per_sigma = num(key, value)?,
            "substep_max" => self.substep_max = num(key, value)?,
            "sampling" => self.sampling = value.parse().map_err(bad)?,
            "divergence_mode" => self.divergence_mode = value.parse().map_err(bad)?,
            "measurements" => self.measurements = flag(key, value)?,
            "stop_at_threshold" => self.stop_at_threshold = flag(key, value)?,
            "regime_tolerance" => self.regime_tolerance = num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `(key, value)` pairs on top of `self`. The `potential` key is
    /// applied first so that parameter keys may appear in any order.
    pub fn apply_pairs<'a, I>(&mut self, pairs: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        for (k, v) in pairs.iter().filter(|(k, _)| k.trim() == "potential") {
            self.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k.trim() != "potential") {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parses the key=value text format on top of the defaults.
    pub fn parse_str(text: &str) -> Result<SimConfig, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            })?;
            pairs.push((i + 1, k.trim(), v.trim()));
        }
        let mut cfg = SimConfig::default();
        let ordered = pairs
            .iter()
            .filter(|p| p.1 == "potential")
            .chain(pairs.iter().filter(|p| p.1 != "potential"));
        for (line, k, v) in ordered {
            cfg.set(k, v).map_err(|e| ConfigError::Parse {
                line: *line,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SimConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_str(&text)
    }

    /// Serializes every field in the key=value format. Floats are written in
    /// shortest round-trip form, so `parse_str(to_config_string())` is exact.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        put("hbar", self.hbar.to_string());
        put("mass", self.mass.to_string());
        put("omega", self.omega.to_string());
        put("dt_meas", self.dt_meas.to_string());
        put("dt_classical", self.dt_classical.to_string());
        put("x0", self.x0.to_string());
        put("p0", self.p0.to_string());
        put("potential", self.potential.name().to_string());
        for (k, v) in self.potential.params() {
            put(k, v.to_string());
        }
        put("ensemble_size", self.ensemble_size.to_string());
        put("momentum_prefactor", self.momentum_prefactor.to_string());
        put("uncertainty_prefactor", self.uncertainty_prefactor.to_string());
        put("divergence_threshold", self.divergence_threshold.to_string());
        put("husimi_resolution", self.husimi_resolution.to_string());
        put("husimi_sigmas", self.husimi_sigmas.to_string());
        put("t_max", self.t_max.to_string());
        put("base_seed", self.base_seed.to_string());
        put("grid_points", self.grid_points.to_string());
        put("points_per_sigma", self.points_per_sigma.to_string());
        put("substep_max", self.substep_max.to_string());
        put("sampling", self.sampling.to_string());
        put("divergence_mode", self.divergence_mode.to_string());
        put("measurements", self.measurements.to_string());
        put("stop_at_threshold", self.stop_at_threshold.to_string());
        put("regime_tolerance", self.regime_tolerance.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid() {
        let v = SimConfig::default().validate().unwrap();
        assert_eq!(v.mass, 1.0);
        assert_eq!(v.omega, 1.0);
        assert_eq!(v.x0, 0.0);
        assert_eq!(v.p0, 1.0);
        assert_eq!(v.divergence_threshold, 0.05);
        assert_eq!(v.ensemble_size, 25);
        assert_eq!(v.momentum_prefactor, 8.0);
        assert_eq!(v.uncertainty_prefactor, 15.0);
        assert_eq!(v.husimi_resolution, 50);
        assert_eq!(v.dt_classical, 0.01);
        assert_eq!(v.potential.value(1.0), 2.5);
    }

    #[test]
    fn zero_hbar_rejected() {
        let cfg = SimConfig {
            hbar: 0.0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(ConfigError::Invalid(v)) => assert!(v.contains(&"hbar must be positive".to_string())),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_points_power_of_two() {
        let cfg = SimConfig {
            grid_points: 100,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("must be power of two"), "{err}");
    }

    #[test]
    fn reports_every_violation() {
        let cfg = SimConfig {
            hbar: -1.0,
            mass: 0.0,
            ensemble_size: 0,
            husimi_resolution: 1,
            divergence_threshold: 0.0,
            ..Default::default()
        };
        let Err(ConfigError::Invalid(v)) = cfg.validate() else {
            panic!()
        };
        assert_eq!(v.len(), 5, "{v:?}");
        for field in ["hbar", "mass", "ensemble_size", "husimi_resolution", "divergence_threshold"] {
            assert!(v.iter().any(|m| m.starts_with(field)), "{field}");
        }
    }

    #[test]
    fn widths_examples() {
        let w = coherent_widths(1.0, 1.0, 1.0);
        assert!((w.sigma_x - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((w.sigma_p - 0.5f64.sqrt()).abs() < 1e-15);
        let w = coherent_widths(0.01, 1.0, 1.0);
        assert!((w.sigma_x - 0.070710678).abs() < 1e-8);
        assert!((w.sigma_p - 0.070710678).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn widths_product_is_half_hbar(
            hbar in 1e-8f64..10.0, m in 1e-3f64..1e3, omega in 1e-3f64..1e3
        ) {
            let w = coherent_widths(hbar, m, omega);
            prop_assert!((w.sigma_x * w.sigma_p - hbar / 2.0).abs() <= 4.0 * f64::EPSILON * hbar);
        }
    }

    #[test]
    fn validate_is_idempotent() {
        let v = SimConfig::default().validate().unwrap();
        let again = v.clone().revalidate().unwrap();
        assert_eq!(v, again);
    }

    #[test]
    fn parse_with_comments_and_potential_params() {
        let text = "# reference setup\nk = 3.5   # stiffness\npotential=harmonic\nhbar=1e-5\n\ndt=0.03\nsampling=center\n";
        let cfg = SimConfig::parse_str(text).unwrap();
        assert_eq!(cfg.potential, PotentialSpec::Harmonic { k: 3.5 });
        assert_eq!(cfg.hbar, 1e-5);
        assert_eq!(cfg.dt_meas, 0.03);
        assert_eq!(cfg.sampling, SamplingMode::CellCenter);
        assert_eq!(cfg.ensemble_size, 25);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = SimConfig::parse_str("hbar=1\nnot a pair\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
        let err = SimConfig::parse_str("bogus=1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = SimConfig::parse_str("potential=free\nk=2\n").unwrap_err();
        assert!(err.to_string().contains("does not apply"));
    }

    #[test]
    fn snapshot_round_trip() {
        let cfg = SimConfig {
            hbar: 3.1622776601683795e-5,
            dt_meas: 0.041,
            potential: PotentialSpec::DoubleWell { a: 0.7, b: 1.3 },
            base_seed: 987654321,
            divergence_mode: DivergenceMode::PerRun,
            measurements: false,
            ..Default::default()
        };
        let back = SimConfig::parse_str(&cfg.to_config_string()).unwrap();
        assert_eq!(back, cfg);
    }
}
