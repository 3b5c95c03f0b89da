//! The two regime inequalities and the resulting classification.
//!
//! * uncertainty criterion: `hbar m / (2 omega p^2 dt^2) << 1`
//! * wavelike criterion:
//!   `|(3 hbar m omega dp - 4 dp^3) V'''(x)| / |6 m^2 omega^2 (m omega^2 p dx - dp V'(x))| << 1`
//!
//! The wavelike form carries the factor `p` in the denominator, which comes
//! from `dH/dp = p/m`. Both sides are compared as magnitudes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{coherent_widths, ValidatedConfig};
use crate::potentials::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeInputs {
    pub hbar: f64,
    pub mass: f64,
    pub omega: f64,
    pub dt_meas: f64,
    pub p: f64,
    pub x: f64,
    pub delta_x: f64,
    pub delta_p: f64,
    pub potential: PotentialSpec,
}

impl RegimeInputs {
    /// Inputs at `(x, p)` with one-sigma displacements.
    pub fn with_default_displacements(
        hbar: f64,
        mass: f64,
        omega: f64,
        dt_meas: f64,
        x: f64,
        p: f64,
        potential: PotentialSpec,
    ) -> Self {
        let w = coherent_widths(hbar, mass, omega);
        RegimeInputs {
            hbar,
            mass,
            omega,
            dt_meas,
            p,
            x,
            delta_x: w.sigma_x,
            delta_p: w.sigma_p,
            potential,
        }
    }

    /// Inputs at the configured initial state.
    pub fn from_config(config: &ValidatedConfig) -> Self {
        Self::with_default_displacements(
            config.hbar,
            config.mass,
            config.omega,
            config.dt_meas,
            config.x0,
            config.p0,
            config.potential,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    UncertaintyDominated,
    Wavelike,
    Semiclassical,
    Indeterminate,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::UncertaintyDominated => "uncertainty_dominated",
            RegimeLabel::Wavelike => "wavelike",
            RegimeLabel::Semiclassical => "semiclassical",
            RegimeLabel::Indeterminate => "indeterminate",
        })
    }
}

impl FromStr for RegimeLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "uncertainty_dominated" => Ok(RegimeLabel::UncertaintyDominated),
            "wavelike" => Ok(RegimeLabel::Wavelike),
            "semiclassical" => Ok(RegimeLabel::Semiclassical),
            "indeterminate" => Ok(RegimeLabel::Indeterminate),
            other => Err(format!("unknown regime label '{other}'")),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum RegimeError {
    #[error("uncertainty criterion needs nonzero momentum")]
    ZeroMomentum,
    #[error("uncertainty criterion needs a positive timestep")]
    ZeroTimestep,
    #[error("wavelike criterion has a vanishing denominator")]
    SingularDenominator,
}

pub fn uncertainty_lhs(inputs: &RegimeInputs) -> Result<f64, RegimeError> {
    if inputs.p == 0.0 {
        return Err(RegimeError::ZeroMomentum);
    }
    if !(inputs.dt_meas > 0.0) {
        return Err(RegimeError::ZeroTimestep);
    }
    let dt = inputs.dt_meas;
    // divide by dt twice rather than by dt^2: keeps round numbers exact
    Ok(inputs.hbar / dt / dt * inputs.mass / (2.0 * inputs.omega * inputs.p * inputs.p))
}

pub fn wavelike_lhs(inputs: &RegimeInputs) -> Result<f64, RegimeError> {
    let v3 = inputs.potential.third_derivative(inputs.x);
    if v3 == 0.0 {
        return Ok(0.0);
    }
    let RegimeInputs {
        hbar,
        mass: m,
        omega: w,
        p,
        delta_x: dx,
        delta_p: dp,
        ..
    } = *inputs;
    let num = (3.0 * hbar * m * w * dp - 4.0 * dp.powi(3)) * v3;
    let den = 6.0 * m * m * w * w * (m * w * w * p * dx - dp * inputs.potential.derivative(inputs.x));
    if den == 0.0 || !den.is_finite() {
        return Err(RegimeError::SingularDenominator);
    }
    Ok((num / den).abs())
}

/// Both left-hand sides and the label for tolerance `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub uncertainty: Option<f64>,
    pub wavelike: Option<f64>,
    pub label: RegimeLabel,
}

pub fn evaluate(inputs: &RegimeInputs, eps: f64) -> RegimeReport {
    let u = uncertainty_lhs(inputs);
    let w = wavelike_lhs(inputs);
    let label = match (u, w) {
        (Err(_), _) => RegimeLabel::Indeterminate,
        (Ok(u), _) if u >= eps => RegimeLabel::UncertaintyDominated,
        (Ok(_), Err(_)) => RegimeLabel::Indeterminate,
        (Ok(_), Ok(w)) if w >= eps => RegimeLabel::Wavelike,
        (Ok(_), Ok(_)) => RegimeLabel::Semiclassical,
    };
    RegimeReport {
        uncertainty: u.ok(),
        wavelike: w.ok(),
        label,
    }
}

pub fn classify(inputs: &RegimeInputs, eps: f64) -> RegimeLabel {
    evaluate(inputs, eps).label
}
