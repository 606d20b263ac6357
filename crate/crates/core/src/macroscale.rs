//! Macroscale FE² solver: Newmark time stepping with a Newton loop in which
//! every Gauss point re-solves its RVE and returns the homogenized response.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Fe2Error, Result};
use crate::fe::{assemble_matrix, assemble_vector, ElementBasis, Mesh1D};
use crate::homogenize::{homogenize, TangentSet};
use crate::linalg::BandedMatrix;
use crate::newmark::{acceleration, KinematicHistory, NewmarkParams, ScalarHistory};
use crate::rve::{norm, solve_micro, MicroLoad, RveModel, RveState};

/// Smooth displacement pulse applied at the right end of the bar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpactLoad {
    pub u_max: f64,
    pub duration: f64,
}

impl ImpactLoad {
    pub fn displacement(&self, t: f64) -> f64 {
        impact_displacement(t, self.u_max, self.duration)
    }
}

/// `ū(t) = 2⁸ u_max / T⁸ · t⁴ (t − T)⁴` on `[0, T]`, zero afterwards.
pub fn impact_displacement(t: f64, u_max: f64, duration: f64) -> f64 {
    if t <= 0.0 || t >= duration {
        return 0.0;
    }
    let s = t / duration;
    let r = s * (s - 1.0);
    256.0 * u_max * r * r * r * r
}

/// Newton controls for the bar-level solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonControls {
    /// Converged once `|ΔD̄| < tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonControls {
    fn default() -> Self {
        NewtonControls {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MacroModel {
    pub mesh: Mesh1D,
    pub params: NewmarkParams,
    pub load: ImpactLoad,
    pub rve: RveModel,
    pub controls: NewtonControls,
}

impl MacroModel {
    pub fn new(
        mesh: Mesh1D,
        params: NewmarkParams,
        load: ImpactLoad,
        rve: RveModel,
        controls: NewtonControls,
    ) -> Result<Self> {
        mesh.validate()?;
        if !(load.duration > 0.0) {
            return Err(Fe2Error::config("pulse duration T must be positive"));
        }
        Ok(MacroModel {
            mesh,
            params,
            load,
            rve,
            controls,
        })
    }

    pub fn n_gauss_points(&self) -> usize {
        2 * self.mesh.n_elements()
    }
}

/// One macro integration point and the RVE it owns.
#[derive(Clone, Debug)]
pub struct GaussPoint {
    pub element: usize,
    pub q: usize,
    /// Reference macro coordinate.
    pub x: f64,
    pub f_hist: ScalarHistory,
    pub rve: RveState,
    /// Input of the most recent micro solve.
    pub load: MicroLoad,
    pub tangents: TangentSet,
}

impl GaussPoint {
    pub fn id(&self) -> usize {
        2 * self.element + self.q
    }
}

#[derive(Clone, Debug)]
pub struct MacroState {
    /// Number of committed steps.
    pub step: usize,
    pub time: f64,
    /// Current nodal displacements (trial values during a step).
    pub d: Vec<f64>,
    pub hist: KinematicHistory,
    pub gps: Vec<GaussPoint>,
}

impl MacroState {
    /// Bar at rest.
    pub fn at_rest(model: &MacroModel) -> Self {
        let n = model.mesh.n_nodes();
        let mut gps = Vec::with_capacity(model.n_gauss_points());
        for e in 0..model.mesh.n_elements() {
            let basis = model.mesh.basis(e);
            for q in 0..2 {
                gps.push(GaussPoint {
                    element: e,
                    q,
                    x: basis.x[q],
                    f_hist: ScalarHistory::at_rest(1.0),
                    rve: RveState::at_rest(&model.rve),
                    load: MicroLoad::identity(),
                    tangents: TangentSet::default(),
                });
            }
        }
        MacroState {
            step: 0,
            time: 0.0,
            d: vec![0.0; n],
            hist: KinematicHistory::zeros(n),
            gps,
        }
    }

    /// Macro displacement interpolated at a Gauss point.
    pub fn displacement_at(&self, model: &MacroModel, gp: &GaussPoint) -> f64 {
        let [a, b] = model.mesh.elements[gp.element];
        model.mesh.basis(gp.element).interpolate(gp.q, [self.d[a], self.d[b]])
    }
}

/// `(F̄, F̈̄, ǖ)` at a Gauss point for nodal displacements `d`.
///
/// `ǖ` interpolates the Newmark nodal accelerations; `F̈̄` applies the Newmark
/// acceleration formula to the Gauss point's own `F̄` history.
pub fn macro_gp_kinematics(
    model: &MacroModel,
    d: &[f64],
    hist: &KinematicHistory,
    gp: &GaussPoint,
) -> MicroLoad {
    let [a, b] = model.mesh.elements[gp.element];
    let basis = model.mesh.basis(gp.element);
    let f_bar = 1.0 + basis.gradient(gp.q, [d[a], d[b]]);
    let p = &model.params;
    let acc = [
        p.accel(d[a], hist.u[a], hist.v[a], hist.a[a]),
        p.accel(d[b], hist.u[b], hist.v[b], hist.a[b]),
    ];
    MicroLoad {
        f_bar,
        f_bar_ddot: gp.f_hist.acceleration(f_bar, p),
        u_bar_ddot: basis.interpolate(gp.q, acc),
    }
}

/// `∫ B A_PF B + ā B A_Pu N + N A_fF B + ā N A_fu N dV`; not symmetric in
/// general.
pub fn macro_element(
    tangents: [&TangentSet; 2],
    basis: &ElementBasis,
    params: &NewmarkParams,
) -> [[f64; 2]; 2] {
    let c = params.mass_factor();
    let mut k = [[0.0; 2]; 2];
    for (q, t) in tangents.iter().enumerate() {
        let n = basis.shape_values[q];
        let b = basis.shape_gradients[q];
        let dv = basis.dv(q);
        for i in 0..2 {
            for j in 0..2 {
                k[i][j] += (b[i] * t.a_pf * b[j]
                    + c * b[i] * t.a_pu * n[j]
                    + n[i] * t.a_ff * b[j]
                    + c * n[i] * t.a_fu * n[j])
                    * dv;
            }
        }
    }
    k
}

/// `∫ Bᵀ P̄ + N f̄ρ dV` from `(P̄, f̄ρ)` at both Gauss points.
pub fn macro_residual(values: [(f64, f64); 2], basis: &ElementBasis) -> [f64; 2] {
    let mut r = [0.0; 2];
    for (q, (p, f)) in values.iter().enumerate() {
        for (a, ra) in r.iter_mut().enumerate() {
            *ra += (basis.shape_gradients[q][a] * p + basis.shape_values[q][a] * f) * basis.dv(q);
        }
    }
    r
}

/// Record of one macro time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    /// `|ΔD̄|` per Newton iteration.
    pub deltas: Vec<f64>,
    pub micro_iterations_max: usize,
    pub micro_solves: usize,
    /// Largest `|⟨ũ⟩| / V` over every micro solve of the step.
    pub max_mean_fluctuation: f64,
    /// Largest `|⟨F⟩ − F̄|` over every micro solve of the step.
    pub max_f_mismatch: f64,
    /// `|D̄|` at convergence.
    pub solution_norm: f64,
    pub wall_seconds: f64,
}

impl StepReport {
    pub fn iterations(&self) -> usize {
        self.deltas.len()
    }
}

struct GpOutcome {
    micro_iterations: usize,
    mean_fluct: f64,
    f_mismatch: f64,
}

fn solve_gauss_point(model: &MacroModel, gp: &mut GaussPoint) -> Result<GpOutcome> {
    let report = solve_micro(&model.rve, &mut gp.rve, &gp.load)?;
    gp.tangents = homogenize(&model.rve, &gp.rve, &gp.load, &model.params)?;
    gp.rve.release_factor();
    Ok(GpOutcome {
        micro_iterations: report.iterations,
        mean_fluct: gp.rve.mean_fluctuation(&model.rve).abs() / model.rve.volume(),
        f_mismatch: (gp.rve.mean_deformation_gradient(&model.rve, gp.load.f_bar) - gp.load.f_bar)
            .abs(),
    })
}

/// Advances `state` by one time step without committing histories.
///
/// On return `state.d` holds the converged nodal displacements, every Gauss
/// point holds the micro state and tangents of the final iteration, and
/// `state.time` is unchanged until [`commit`].
pub fn step(model: &MacroModel, state: &mut MacroState) -> Result<StepReport> {
    let started = Instant::now();
    let step_index = state.step + 1;
    let t = step_index as f64 * model.params.dt;
    let n = model.mesh.n_nodes();
    let last = n - 1;
    let fail = |reason: String| Fe2Error::StepFailure {
        step: step_index,
        reason,
    };

    // Previous step as predictor with the prescribed end values already in
    // place. Macro elements are long against one step of boundary travel, so
    // this cannot invert the end element (unlike the layer-resolved bar).
    let mut d = state.hist.u.clone();
    let targets = [(0, 0.0), (last, model.load.displacement(t))];
    for (i, value) in targets {
        d[i] = value;
    }

    let mut report = StepReport {
        step: step_index,
        time: t,
        deltas: Vec::new(),
        micro_iterations_max: 0,
        micro_solves: 0,
        max_mean_fluctuation: 0.0,
        max_f_mismatch: 0.0,
        solution_norm: 0.0,
        wall_seconds: 0.0,
    };

    for _ in 0..model.controls.max_iter {
        for gp in state.gps.iter_mut() {
            gp.load = macro_gp_kinematics(model, &d, &state.hist, gp);
        }
        let outcomes: Vec<Result<GpOutcome>> = state
            .gps
            .par_iter_mut()
            .map(|gp| solve_gauss_point(model, gp))
            .collect();
        for (gp, outcome) in state.gps.iter().zip(outcomes) {
            let o = outcome.map_err(|e| fail(format!("Gauss point {}: {e}", gp.id())))?;
            report.micro_solves += 1;
            report.micro_iterations_max = report.micro_iterations_max.max(o.micro_iterations);
            report.max_mean_fluctuation = report.max_mean_fluctuation.max(o.mean_fluct);
            report.max_f_mismatch = report.max_f_mismatch.max(o.f_mismatch);
        }

        let mut k = BandedMatrix::zeros(n, 1, 1);
        let mut r = vec![0.0; n];
        for e in 0..model.mesh.n_elements() {
            let basis = model.mesh.basis(e);
            let (g0, g1) = (&state.gps[2 * e].tangents, &state.gps[2 * e + 1].tangents);
            let dofs = model.mesh.elements[e].map(Some);
            let ke = macro_element([g0, g1], &basis, &model.params);
            let re = macro_residual([(g0.p_bar, g0.f_rho_bar), (g1.p_bar, g1.f_rho_bar)], &basis);
            assemble_matrix(&mut k, &dofs, &ke)?;
            assemble_vector(&mut r, &dofs, &re)?;
        }
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        for (i, value) in targets {
            k.apply_dirichlet(i, value - d[i], &mut rhs);
        }
        let delta = k
            .factorize()
            .map_err(|e| fail(e.to_string()))?
            .solve(&rhs);
        for (di, dd) in d.iter_mut().zip(&delta) {
            *di += dd;
        }
        let size = norm(&delta);
        report.deltas.push(size);
        if !size.is_finite() {
            break;
        }
        if size < model.controls.tol {
            report.solution_norm = norm(&d);
            state.d = d;
            report.wall_seconds = started.elapsed().as_secs_f64();
            return Ok(report);
        }
    }
    Err(fail(format!(
        "macro Newton did not converge in {} iterations (|dD| = {:e})",
        report.deltas.len(),
        report.deltas.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Commits the converged step: nodal Newmark history, every Gauss point's
/// `F̄` history and every RVE's fluctuation history.
pub fn commit(model: &MacroModel, state: &mut MacroState) {
    let d = state.d.clone();
    for gp in state.gps.iter_mut() {
        let [a, b] = model.mesh.elements[gp.element];
        let f_bar = 1.0 + model.mesh.basis(gp.element).gradient(gp.q, [d[a], d[b]]);
        gp.f_hist.commit(f_bar, &model.params);
        gp.rve.commit(&model.rve);
    }
    state.hist.commit(&d, &model.params);
    state.step += 1;
    state.time = state.step as f64 * model.params.dt;
}

/// Nodal accelerations of the current trial displacements.
pub fn nodal_acceleration(model: &MacroModel, state: &MacroState) -> Vec<f64> {
    acceleration(&state.d, &state.hist, &model.params)
}

/// Where a run stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    pub step: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub completed_steps: usize,
    pub failure: Option<RunFailure>,
    pub reports: Vec<StepReport>,
}

impl RunOutcome {
    pub fn finished(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs `n_steps` steps from rest. `observer` sees the committed state after
/// every step. A failing step ends the run and is recorded, not returned as
/// an error.
pub fn run_fe2(
    model: &MacroModel,
    n_steps: usize,
    mut observer: impl FnMut(&MacroState, &StepReport),
) -> (MacroState, RunOutcome) {
    let mut state = MacroState::at_rest(model);
    let mut reports = Vec::with_capacity(n_steps);
    let mut failure = None;
    for _ in 0..n_steps {
        match step(model, &mut state) {
            Ok(report) => {
                commit(model, &mut state);
                observer(&state, &report);
                log::debug!(
                    "fe2 step {} t={:.6e} iterations={}",
                    report.step,
                    report.time,
                    report.iterations()
                );
                reports.push(report);
            }
            Err(err) => {
                let step = state.step + 1;
                log::warn!("fe2 run stopped at step {step}: {err}");
                failure = Some(RunFailure {
                    step,
                    message: err.to_string(),
                });
                break;
            }
        }
    }
    let outcome = RunOutcome {
        completed_steps: state.step,
        failure,
        reports,
    };
    (state, outcome)
}
