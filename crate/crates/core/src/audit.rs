//! Finite-difference audit of the homogenized tangent moduli.
//!
//! Each probe re-converges the RVE from the converged state with the history
//! frozen. A perturbation `h` of `F̄` also shifts `F̈̄` by `ā h`, because the
//! macro Newmark rule ties the two; `ǖ` is perturbed on its own.

use crate::error::Result;
use crate::homogenize::{macro_inertia, macro_stress, SensitivityMatrices, TangentSet};
use crate::rve::{solve_micro, MicroLoad, RveModel, RveState};

/// Relative steps of the consistency sweep.
pub const STEP_SWEEP: [f64; 3] = [1.0, 0.1, 0.01];

/// Base perturbation of `F̄`.
pub const BASE_STEP_F: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulusAudit {
    pub analytic: f64,
    /// Central difference at the step with the smallest error.
    pub fd: f64,
    pub step: f64,
    pub rel_err: f64,
    /// Spread of the sweep values relative to the analytic value.
    pub sweep_spread: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentAudit {
    pub a_pf: ModulusAudit,
    pub a_pu: ModulusAudit,
    pub a_ff: ModulusAudit,
    pub a_fu: ModulusAudit,
}

impl TangentAudit {
    pub fn max_rel_err(&self) -> f64 {
        [self.a_pf, self.a_pu, self.a_ff, self.a_fu]
            .iter()
            .map(|m| m.rel_err)
            .fold(0.0, f64::max)
    }
}

fn response(model: &RveModel, base: &RveState, load: &MicroLoad) -> Result<(f64, f64)> {
    let mut s = base.clone();
    solve_micro(model, &mut s, load)?;
    Ok((macro_stress(model, &s, load)?, macro_inertia(model, &s, load)?))
}

fn audit_one(analytic: f64, scale: f64, samples: &[(f64, f64)]) -> ModulusAudit {
    let denom = analytic.abs().max(1e-8 * scale);
    let mut best = ModulusAudit {
        analytic,
        fd: f64::NAN,
        step: f64::NAN,
        rel_err: f64::INFINITY,
        sweep_spread: 0.0,
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(h, fd) in samples {
        lo = lo.min(fd);
        hi = hi.max(fd);
        let err = (fd - analytic).abs() / denom;
        if err < best.rel_err {
            best.fd = fd;
            best.step = h;
            best.rel_err = err;
        }
    }
    best.sweep_spread = (hi - lo) / denom;
    best
}

/// Compares `analytic` against central differences at a converged state.
///
/// `macro_mass_factor` is `ᾱ₁/dt²` of the macro scale.
pub fn audit_tangents(
    model: &RveModel,
    state: &RveState,
    load: &MicroLoad,
    macro_mass_factor: f64,
    analytic: &TangentSet,
) -> Result<TangentAudit> {
    let mats = SensitivityMatrices::assemble(model, state, load)?;
    let rho = mats.mean_density.max(f64::MIN_POSITIVE);
    // Acceleration that loads the RVE like the F̄ step does.
    let base_u = BASE_STEP_F * mats.mean_tangent / (rho * model.volume());

    let mut pf = Vec::new();
    let mut ff = Vec::new();
    let mut pu = Vec::new();
    let mut fu = Vec::new();
    for s in STEP_SWEEP {
        let h = BASE_STEP_F * s;
        let shifted = |sign: f64| MicroLoad {
            f_bar: load.f_bar + sign * h,
            f_bar_ddot: load.f_bar_ddot + sign * macro_mass_factor * h,
            u_bar_ddot: load.u_bar_ddot,
        };
        let (p1, f1) = response(model, state, &shifted(1.0))?;
        let (p0, f0) = response(model, state, &shifted(-1.0))?;
        pf.push((h, (p1 - p0) / (2.0 * h)));
        ff.push((h, (f1 - f0) / (2.0 * h)));

        let hu = base_u * s;
        let pushed = |sign: f64| MicroLoad {
            u_bar_ddot: load.u_bar_ddot + sign * hu,
            ..*load
        };
        let (p1, f1) = response(model, state, &pushed(1.0))?;
        let (p0, f0) = response(model, state, &pushed(-1.0))?;
        pu.push((hu, (p1 - p0) / (2.0 * hu)));
        fu.push((hu, (f1 - f0) / (2.0 * hu)));
    }
    let length = model.volume();
    Ok(TangentAudit {
        a_pf: audit_one(analytic.a_pf, mats.mean_tangent, &pf),
        a_pu: audit_one(analytic.a_pu, rho * length, &pu),
        a_ff: audit_one(analytic.a_ff, macro_mass_factor * rho * length, &ff),
        a_fu: audit_one(analytic.a_fu, rho, &fu),
    })
}
