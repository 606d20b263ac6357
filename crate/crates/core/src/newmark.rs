//! Implicit Newmark-β time integration.
//!
//! The acceleration update is written against a history term
//! `h_n = u_n + dt v_n + dt² (1/2 - β) a_n`, so that
//! `a_{n+1} = (u_{n+1} - h_n) / (β dt²)` and `∂a_{n+1}/∂u_{n+1} = α₁/dt²`
//! with `α₁ = 1/β`.

use crate::error::{Fe2Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
}

impl NewmarkParams {
    pub fn new(beta: f64, gamma: f64, dt: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 0.5) {
            return Err(Fe2Error::config(format!("beta must lie in (0, 0.5], got {beta}")));
        }
        if !(0.5..=1.0).contains(&gamma) {
            return Err(Fe2Error::config(format!("gamma must lie in [0.5, 1], got {gamma}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Fe2Error::config(format!("dt must be positive, got {dt}")));
        }
        Ok(NewmarkParams { beta, gamma, dt })
    }

    /// Average-acceleration scheme (`β = 1/4`, `γ = 1/2`).
    pub fn trapezoidal(dt: f64) -> Result<Self> {
        Self::new(0.25, 0.5, dt)
    }

    pub fn alpha1(&self) -> f64 {
        1.0 / self.beta
    }

    /// `α₁ / dt²`, the slope of the acceleration in the displacement.
    pub fn mass_factor(&self) -> f64 {
        self.alpha1() / (self.dt * self.dt)
    }

    fn history_term(&self, u: f64, v: f64, a: f64) -> f64 {
        u + self.dt * v + self.dt * self.dt * (0.5 - self.beta) * a
    }

    /// Scalar acceleration update.
    pub fn accel(&self, u_next: f64, u: f64, v: f64, a: f64) -> f64 {
        (u_next - self.history_term(u, v, a)) * self.mass_factor()
    }

    /// Scalar velocity update.
    pub fn vel(&self, a_next: f64, v: f64, a: f64) -> f64 {
        v + self.dt * ((1.0 - self.gamma) * a + self.gamma * a_next)
    }
}

/// Converged displacement, velocity and acceleration per DOF.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KinematicHistory {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl KinematicHistory {
    /// At rest.
    pub fn zeros(n: usize) -> Self {
        KinematicHistory {
            u: vec![0.0; n],
            v: vec![0.0; n],
            a: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Advances the history to the converged state `u_next`.
    pub fn commit(&mut self, u_next: &[f64], p: &NewmarkParams) {
        let a_next = acceleration(u_next, self, p);
        let v_next = velocity(&a_next, self, p);
        self.u.copy_from_slice(u_next);
        self.v = v_next;
        self.a = a_next;
    }
}

/// `a_{n+1} = (u_{n+1} - u_n - dt v_n)/(β dt²) - (1/(2β) - 1) a_n`.
pub fn acceleration(u_next: &[f64], hist: &KinematicHistory, p: &NewmarkParams) -> Vec<f64> {
    u_next
        .iter()
        .zip(&hist.u)
        .zip(hist.v.iter().zip(&hist.a))
        .map(|((&un, &u), (&v, &a))| p.accel(un, u, v, a))
        .collect()
}

/// `v_{n+1} = v_n + dt ((1-γ) a_n + γ a_{n+1})`.
pub fn velocity(a_next: &[f64], hist: &KinematicHistory, p: &NewmarkParams) -> Vec<f64> {
    a_next
        .iter()
        .zip(hist.v.iter().zip(&hist.a))
        .map(|(&an, (&v, &a))| p.vel(an, v, a))
        .collect()
}

/// History of a single scalar, used for the macro deformation gradient at a
/// Gauss point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarHistory {
    pub value: f64,
    pub rate: f64,
    pub accel: f64,
}

impl ScalarHistory {
    pub fn at_rest(value: f64) -> Self {
        ScalarHistory {
            value,
            rate: 0.0,
            accel: 0.0,
        }
    }

    pub fn acceleration(&self, next: f64, p: &NewmarkParams) -> f64 {
        p.accel(next, self.value, self.rate, self.accel)
    }

    pub fn commit(&mut self, next: f64, p: &NewmarkParams) {
        let a = self.acceleration(next, p);
        self.rate = p.vel(a, self.rate, self.accel);
        self.accel = a;
        self.value = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rest_stays_at_rest() {
        let p = NewmarkParams::trapezoidal(1e-3).unwrap();
        let h = KinematicHistory {
            u: vec![0.3],
            v: vec![0.0],
            a: vec![0.0],
        };
        assert_eq!(acceleration(&[0.3], &h, &p), vec![0.0]);
    }

    #[test]
    fn unit_step_gives_alpha1() {
        let p = NewmarkParams::trapezoidal(1.0).unwrap();
        let h = KinematicHistory::zeros(1);
        let a = acceleration(&[1.0], &h, &p);
        assert_relative_eq!(a[0], 4.0);
        assert_relative_eq!(a[0], p.alpha1());
        let v = velocity(&a, &h, &p);
        assert_relative_eq!(v[0], 2.0);
    }

    #[test]
    fn velocity_constant_acceleration() {
        let p = NewmarkParams::new(0.3, 0.7, 0.5).unwrap();
        let h = KinematicHistory {
            u: vec![0.0],
            v: vec![1.5],
            a: vec![2.0],
        };
        assert_relative_eq!(velocity(&[2.0], &h, &p)[0], 1.5 + 0.5 * 2.0);
        let h0 = KinematicHistory {
            u: vec![0.0],
            v: vec![1.5],
            a: vec![0.0],
        };
        assert_relative_eq!(velocity(&[0.0], &h0, &p)[0], 1.5);
    }

    #[test]
    fn invalid_parameters() {
        assert!(NewmarkParams::new(0.0, 0.5, 1.0).is_err());
        assert!(NewmarkParams::new(0.6, 0.5, 1.0).is_err());
        assert!(NewmarkParams::new(0.25, 0.4, 1.0).is_err());
        assert!(NewmarkParams::new(0.25, 0.5, 0.0).is_err());
    }

    #[test]
    fn oscillator_energy_is_conserved() {
        // m ü + k u = 0 with the average-acceleration rule.
        let (m, k) = (2.0, 50.0);
        let p = NewmarkParams::trapezoidal(0.05).unwrap();
        let mut h = KinematicHistory {
            u: vec![1.0],
            v: vec![0.0],
            a: vec![-k / m],
        };
        let energy = |h: &KinematicHistory| 0.5 * m * h.v[0] * h.v[0] + 0.5 * k * h.u[0] * h.u[0];
        let e0 = energy(&h);
        for _ in 0..500 {
            // (k + m α₁/dt²) u = m α₁/dt² h_n
            let c = p.mass_factor();
            let hist = h.u[0] + p.dt * h.v[0] + p.dt * p.dt * (0.5 - p.beta) * h.a[0];
            let u_next = m * c * hist / (k + m * c);
            let before = energy(&h);
            h.commit(&[u_next], &p);
            assert!(((energy(&h) - before) / e0).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn slope_is_alpha1_over_dt2(
            u in -1.0f64..1.0, v in -10.0f64..10.0, a in -100.0f64..100.0,
            un in -1.0f64..1.0, dt in 1e-4f64..1e-1,
        ) {
            let p = NewmarkParams::trapezoidal(dt).unwrap();
            let h = KinematicHistory { u: vec![u], v: vec![v], a: vec![a] };
            let step = 1e-3;
            let plus = acceleration(&[un + step], &h, &p)[0];
            let minus = acceleration(&[un - step], &h, &p)[0];
            let fd = (plus - minus) / (2.0 * step);
            prop_assert!(((fd - p.mass_factor()) / p.mass_factor()).abs() < 1e-6);
        }
    }
}
