//! Newtonian reference trajectory, fourth-order Runge-Kutta.

use serde::{Deserialize, Serialize};

use crate::potentials::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub t: f64,
    pub x: f64,
    pub p: f64,
}

impl ClassicalState {
    pub fn new(t: f64, x: f64, p: f64) -> Self {
        ClassicalState { t, x, p }
    }

    pub fn energy(&self, potential: &PotentialSpec, mass: f64) -> f64 {
        self.p * self.p / (2.0 * mass) + potential.value(self.x)
    }
}

/// One RK4 step of `x' = p / m`, `p' = F(x)`.
pub fn rk4_step(s: ClassicalState, potential: &PotentialSpec, mass: f64, dt: f64) -> ClassicalState {
    let f = |x: f64, p: f64| (p / mass, potential.force(x));
    let (k1x, k1p) = f(s.x, s.p);
    let (k2x, k2p) = f(s.x + 0.5 * dt * k1x, s.p + 0.5 * dt * k1p);
    let (k3x, k3p) = f(s.x + 0.5 * dt * k2x, s.p + 0.5 * dt * k2p);
    let (k4x, k4p) = f(s.x + dt * k3x, s.p + dt * k3p);
    ClassicalState {
        t: s.t + dt,
        x: s.x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        p: s.p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    }
}

/// Integrates to `t_target` with steps of `dt`, the last one shortened. The
/// returned time is exactly `t_target`; intermediate times are computed from
/// the step index.
pub fn evolve_to(
    s: ClassicalState,
    potential: &PotentialSpec,
    mass: f64,
    t_target: f64,
    dt: f64,
) -> ClassicalState {
    assert!(t_target >= s.t, "cannot integrate backwards ({} -> {})", s.t, t_target);
    assert!(dt > 0.0);
    let span = t_target - s.t;
    if span == 0.0 {
        return s;
    }
    let steps = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as u64;
    let t0 = s.t;
    let mut cur = s;
    for i in 0..steps {
        let t_next = if i + 1 == steps {
            t_target
        } else {
            t0 + (i + 1) as f64 * dt
        };
        let mut next = rk4_step(cur, potential, mass, t_next - cur.t);
        next.t = t_next;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HARMONIC: PotentialSpec = PotentialSpec::Harmonic { k: 5.0 };

    /// Closed form for `V = 5/2 x^2`, `m = 1`.
    fn harmonic_exact(x0: f64, p0: f64, t: f64) -> (f64, f64) {
        let w = 5f64.sqrt();
        (
            x0 * (w * t).cos() + p0 / w * (w * t).sin(),
            p0 * (w * t).cos() - x0 * w * (w * t).sin(),
        )
    }

    #[test]
    fn harmonic_single_step() {
        let s = rk4_step(ClassicalState::new(0.0, 0.0, 1.0), &HARMONIC, 1.0, 0.01);
        let (x, p) = harmonic_exact(0.0, 1.0, 0.01);
        assert!((s.x - x).abs() < 1e-10);
        assert!((s.p - p).abs() < 1e-10);
        assert!((x - 0.0099991667).abs() < 1e-10);
    }

    #[test]
    fn free_and_linear_are_exact() {
        let s = rk4_step(ClassicalState::new(0.0, 0.0, 1.0), &PotentialSpec::Free, 1.0, 0.5);
        assert_eq!((s.x, s.p), (0.5, 1.0));
        let s = rk4_step(ClassicalState::new(0.0, 0.0, 0.0), &PotentialSpec::Linear { g: 1.0 }, 1.0, 1.0);
        assert_eq!((s.x, s.p), (-0.5, -1.0));
    }

    #[test]
    fn zero_duration_is_identity() {
        let s = ClassicalState::new(1.5, 0.3, -0.2);
        assert_eq!(evolve_to(s, &HARMONIC, 1.0, 1.5, 0.01), s);
    }

    #[test]
    fn harmonic_period_returns_home() {
        let period = 2.0 * std::f64::consts::PI / 5f64.sqrt();
        let s = evolve_to(ClassicalState::new(0.0, 0.0, 1.0), &HARMONIC, 1.0, period, 0.01);
        assert_eq!(s.t, period);
        assert!(s.x.abs() < 1e-8 && (s.p - 1.0).abs() < 1e-8, "{s:?}");
    }

    #[test]
    fn double_well_energy_drift() {
        let pot = PotentialSpec::DoubleWell { a: 1.0, b: 1.0 };
        let s0 = ClassicalState::new(0.0, -1.2, 0.4);
        let e0 = s0.energy(&pot, 1.0);
        // at dt = 0.01 this orbit drifts ~1e-7; the bound needs a finer step
        let s = evolve_to(s0, &pot, 1.0, 100.0, 0.002);
        assert!(((s.energy(&pot, 1.0) - e0) / e0).abs() < 1e-9);
    }

    #[test]
    fn fourth_order_convergence() {
        let t = 2.0;
        let (x, p) = harmonic_exact(0.0, 1.0, t);
        let err = |dt: f64| {
            let s = evolve_to(ClassicalState::new(0.0, 0.0, 1.0), &HARMONIC, 1.0, t, dt);
            ((s.x - x).powi(2) + (s.p - p).powi(2)).sqrt()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn lands_exactly(t0 in 0.0f64..5.0, span in 0.0f64..3.0, dt in 0.001f64..0.1) {
            let s = evolve_to(ClassicalState::new(t0, 0.1, 0.2), &HARMONIC, 1.0, t0 + span, dt);
            prop_assert_eq!(s.t, t0 + span);
        }
    }
}
