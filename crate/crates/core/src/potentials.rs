//! One-dimensional potential energy landscapes.
//!
//! Every kind provides the value `V(x)`, the force `-V'(x)` and the third
//! derivative `V'''(x)`, all in closed form.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A potential family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `(k/2) x^2`
    Harmonic { k: f64 },
    /// `0`
    Free,
    /// `g x`
    Linear { g: f64 },
    /// `lambda x^4`
    Quartic { lambda: f64 },
    /// `-depth * exp(-x^2 / (2 width^2))`
    GaussianWell { depth: f64, width: f64 },
    /// `a (x^2 - b^2)^2`
    DoubleWell { a: f64, b: f64 },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Harmonic { k: 5.0 }
    }
}

impl PotentialSpec {
    /// Canonical lowercase names accepted by [`PotentialSpec::from_name`].
    pub const NAMES: [&'static str; 6] = [
        "harmonic",
        "free",
        "linear",
        "quartic",
        "gaussian_well",
        "double_well",
    ];

    /// Builds the named kind with its default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        let spec = match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "harmonic" => PotentialSpec::Harmonic { k: 5.0 },
            "free" => PotentialSpec::Free,
            "linear" => PotentialSpec::Linear { g: 1.0 },
            "quartic" => PotentialSpec::Quartic { lambda: 1.0 },
            "gaussian_well" | "gaussian" => PotentialSpec::GaussianWell {
                depth: 1.0,
                width: 1.0,
            },
            "double_well" => PotentialSpec::DoubleWell { a: 1.0, b: 1.0 },
            _ => return None,
        };
        Some(spec)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PotentialSpec::Harmonic { .. } => "harmonic",
            PotentialSpec::Free => "free",
            PotentialSpec::Linear { .. } => "linear",
            PotentialSpec::Quartic { .. } => "quartic",
            PotentialSpec::GaussianWell { .. } => "gaussian_well",
            PotentialSpec::DoubleWell { .. } => "double_well",
        }
    }

    /// Parameter `(key, value)` pairs in config-file spelling.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            PotentialSpec::Harmonic { k } => vec![("k", k)],
            PotentialSpec::Free => vec![],
            PotentialSpec::Linear { g } => vec![("g", g)],
            PotentialSpec::Quartic { lambda } => vec![("lambda", lambda)],
            PotentialSpec::GaussianWell { depth, width } => vec![("v0", depth), ("w", width)],
            PotentialSpec::DoubleWell { a, b } => vec![("a", a), ("b", b)],
        }
    }

    /// Sets one parameter by its config-file key. Returns `false` when the key
    /// does not belong to this kind.
    pub fn set_param(&mut self, key: &str, value: f64) -> bool {
        match (self, key) {
            (PotentialSpec::Harmonic { k }, "k") => *k = value,
            (PotentialSpec::Linear { g }, "g") => *g = value,
            (PotentialSpec::Quartic { lambda }, "lambda") => *lambda = value,
            (PotentialSpec::GaussianWell { depth, .. }, "v0") => *depth = value,
            (PotentialSpec::GaussianWell { width, .. }, "w") => *width = value,
            (PotentialSpec::DoubleWell { a, .. }, "a") => *a = value,
            (PotentialSpec::DoubleWell { b, .. }, "b") => *b = value,
            _ => return false,
        }
        true
    }

    /// Lists every violated parameter constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{} must be positive for the {} potential", name, self.name()));
            }
        };
        match *self {
            PotentialSpec::Harmonic { k } => positive("k", k),
            PotentialSpec::Free => {}
            PotentialSpec::Linear { g } => {
                if !g.is_finite() {
                    out.push("g must be finite for the linear potential".to_string());
                }
            }
            PotentialSpec::Quartic { lambda } => positive("lambda", lambda),
            PotentialSpec::GaussianWell { depth, width } => {
                positive("v0", depth);
                positive("w", width);
            }
            PotentialSpec::DoubleWell { a, b } => {
                positive("a", a);
                positive("b", b);
            }
        }
        out
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::Harmonic { k } => 0.5 * k * x * x,
            PotentialSpec::Free => 0.0,
            PotentialSpec::Linear { g } => g * x,
            PotentialSpec::Quartic { lambda } => lambda * x.powi(4),
            PotentialSpec::GaussianWell { depth, width } => {
                -depth * (-x * x / (2.0 * width * width)).exp()
            }
            PotentialSpec::DoubleWell { a, b } => {
                let s = x * x - b * b;
                a * s * s
            }
        }
    }

    /// `V'(x)`.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::Harmonic { k } => k * x,
            PotentialSpec::Free => 0.0,
            PotentialSpec::Linear { g } => g,
            PotentialSpec::Quartic { lambda } => 4.0 * lambda * x.powi(3),
            PotentialSpec::GaussianWell { depth, width } => {
                let w2 = width * width;
                depth * x / w2 * (-x * x / (2.0 * w2)).exp()
            }
            PotentialSpec::DoubleWell { a, b } => 4.0 * a * x * (x * x - b * b),
        }
    }

    /// `F(x) = -V'(x)`.
    pub fn force(&self, x: f64) -> f64 {
        -self.derivative(x)
    }

    /// `V'''(x)`. Exactly zero for the free, linear and harmonic kinds.
    pub fn third_derivative(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::Harmonic { .. } | PotentialSpec::Free | PotentialSpec::Linear { .. } => {
                0.0
            }
            PotentialSpec::Quartic { lambda } => 24.0 * lambda * x,
            PotentialSpec::GaussianWell { depth, width } => {
                // d^3/dx^3 of -V0 e^{-u}, u = x^2/2w^2, gives V0 x (x^2 - 3w^2) / w^6 e^{-u}
                let w2 = width * width;
                depth * x * (x * x - 3.0 * w2) / (w2 * w2 * w2) * (-x * x / (2.0 * w2)).exp()
            }
            PotentialSpec::DoubleWell { a, .. } => 24.0 * a * x,
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        for (k, v) in self.params() {
            write!(f, " {}={}", k, v)?;
        }
        Ok(())
    }
}
