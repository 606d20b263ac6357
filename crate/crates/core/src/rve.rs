//! The microscopic boundary-value problem.
//!
//! The micro displacement is split as `u = ū + (F̄ - 1) X + ũ` with `X`
//! measured from the RVE centroid, so `F = F̄ + ∂ũ/∂X` and
//! `ü = ǖ + F̈̄ X + ũ̈`. Only the fluctuation `ũ` is solved for. The link
//! `⟨F⟩ = F̄` is imposed either by periodic ties (last node aliased to the
//! first) or by a Lagrange multiplier on `∫ B dV`; the displacement link
//! `⟨ũ⟩ = 0` is imposed by one Lagrange multiplier `λ` on `∫ N dV`, or
//! replaced by zero fluctuations at both end nodes.
//!
//! Newton right-hand sides are the negative out-of-balance force
//! `-(∫ Bᵀ P + N ρ₀ ü dV + G λ)` and `-Gᵀ D̃`, so updates are additive.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Fe2Error, Result};
use crate::fe::{assemble_matrix, assemble_vector, DofMap, ElementBasis, Mesh1D};
use crate::linalg::BorderedFactor;
use crate::material::MaterialPhase;
use crate::newmark::{acceleration, KinematicHistory, NewmarkParams};

/// How the RVE is kept from drifting as a rigid body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// `⟨ũ⟩ = 0` through one Lagrange multiplier.
    #[serde(rename = "volume")]
    VolumeConstraint,
    /// `ũ = 0` at both end nodes.
    FixedCorners,
}

/// How `⟨F⟩ = F̄` is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FLinkMode {
    #[serde(rename = "periodic")]
    PeriodicBc,
    #[serde(rename = "volume_avg")]
    VolumeAverageF,
}

impl std::fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintMode::VolumeConstraint => f.write_str("volume"),
            ConstraintMode::FixedCorners => f.write_str("fixed_corners"),
        }
    }
}

impl std::fmt::Display for FLinkMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FLinkMode::PeriodicBc => f.write_str("periodic"),
            FLinkMode::VolumeAverageF => f.write_str("volume_avg"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroControls {
    /// Converged once `|ΔD*| < tol · max(1, |D*|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MicroControls {
    fn default() -> Self {
        MicroControls {
            tol: 1e-10,
            max_iter: 25,
        }
    }
}

/// Macroscopic input of one micro solve. `ū` itself never enters the micro
/// problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroLoad {
    pub f_bar: f64,
    pub f_bar_ddot: f64,
    pub u_bar_ddot: f64,
}

impl MicroLoad {
    pub fn new(f_bar: f64, f_bar_ddot: f64, u_bar_ddot: f64) -> Self {
        MicroLoad {
            f_bar,
            f_bar_ddot,
            u_bar_ddot,
        }
    }

    /// No imposed deformation, used when the fluctuation is the full
    /// displacement (single-scale problems).
    pub fn identity() -> Self {
        MicroLoad::new(1.0, 0.0, 0.0)
    }
}

#[derive(Clone, Debug)]
pub struct RveModel {
    pub mesh: Mesh1D,
    pub phases: Vec<MaterialPhase>,
    pub constraint_mode: ConstraintMode,
    pub f_link_mode: FLinkMode,
    pub params: NewmarkParams,
    pub controls: MicroControls,
    dof_of_node: Vec<Option<usize>>,
    n_free: usize,
    volume: f64,
}

impl RveModel {
    pub fn new(
        mesh: Mesh1D,
        phases: Vec<MaterialPhase>,
        constraint_mode: ConstraintMode,
        f_link_mode: FLinkMode,
        params: NewmarkParams,
        controls: MicroControls,
    ) -> Result<Self> {
        mesh.validate()?;
        if let Some(&p) = mesh.phase_of_element.iter().find(|&&p| p >= phases.len()) {
            return Err(Fe2Error::config(format!("mesh refers to unknown phase {p}")));
        }
        if mesh.first_moment().abs() > 1e-12 * mesh.length() * mesh.length() {
            return Err(Fe2Error::config("RVE coordinates must be centered on the centroid"));
        }
        if constraint_mode == ConstraintMode::FixedCorners && f_link_mode == FLinkMode::VolumeAverageF
        {
            return Err(Fe2Error::config(
                "fixed corners already pin <F>; the volume-averaged F constraint would be redundant",
            ));
        }
        let n = mesh.n_nodes();
        let last = n - 1;
        let dof_of_node: Vec<Option<usize>> = match (constraint_mode, f_link_mode) {
            (ConstraintMode::FixedCorners, _) => (0..n)
                .map(|i| (i != 0 && i != last).then(|| i - 1))
                .collect(),
            (_, FLinkMode::PeriodicBc) => (0..n).map(|i| Some(if i == last { 0 } else { i })).collect(),
            (_, FLinkMode::VolumeAverageF) => (0..n).map(Some).collect(),
        };
        let n_free = dof_of_node.iter().flatten().max().map_or(0, |m| m + 1);
        let volume = mesh.length();
        Ok(RveModel {
            mesh,
            phases,
            constraint_mode,
            f_link_mode,
            params,
            controls,
            dof_of_node,
            n_free,
            volume,
        })
    }

    /// RVE volume (length times unit cross-section).
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Number of independent fluctuation unknowns after periodic ties and
    /// Dirichlet conditions.
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn has_volume_multiplier(&self) -> bool {
        self.constraint_mode == ConstraintMode::VolumeConstraint
    }

    pub fn has_f_multiplier(&self) -> bool {
        self.f_link_mode == FLinkMode::VolumeAverageF
    }

    pub fn n_multipliers(&self) -> usize {
        usize::from(self.has_volume_multiplier()) + usize::from(self.has_f_multiplier())
    }

    /// Size of the bordered system.
    pub fn n_system(&self) -> usize {
        self.n_free + self.n_multipliers()
    }

    pub fn dof_of_node(&self) -> &[Option<usize>] {
        &self.dof_of_node
    }

    pub fn element_dofs(&self, e: usize) -> DofMap {
        let [a, b] = self.mesh.elements[e];
        [self.dof_of_node[a], self.dof_of_node[b]]
    }

    fn phase(&self, e: usize) -> &MaterialPhase {
        &self.phases[self.mesh.phase_of_element[e]]
    }

    /// Condensed vector of nodal values.
    pub fn gather(&self, nodal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (i, dof) in self.dof_of_node.iter().enumerate() {
            if let Some(k) = *dof {
                out[k] = nodal[i];
            }
        }
        out
    }

    /// Nodal values from a condensed vector (eliminated nodes get zero).
    pub fn scatter(&self, dofs: &[f64]) -> Vec<f64> {
        self.dof_of_node
            .iter()
            .map(|d| d.map_or(0.0, |k| dofs[k]))
            .collect()
    }

    /// Assembled `G = ∫ N dV` over the condensed DOFs.
    pub fn volume_constraint_vector(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_free];
        for e in 0..self.mesh.n_elements() {
            let basis = self.mesh.basis(e);
            let ge = integrate(&basis, |q, a| basis.shape_values[q][a]);
            assemble_vector(&mut g, &self.element_dofs(e), &ge).expect("dof map in range");
        }
        g
    }

    /// Assembled `G_⟨F⟩ = ∫ B dV`, the border of the volume-averaged
    /// deformation-gradient constraint.
    pub fn apply_constraint_f_volume(&self) -> Result<Vec<f64>> {
        if self.f_link_mode != FLinkMode::VolumeAverageF {
            return Err(Fe2Error::config(
                "volume-averaged F constraint requested while periodic ties are active",
            ));
        }
        let mut g = vec![0.0; self.n_free];
        for e in 0..self.mesh.n_elements() {
            let basis = self.mesh.basis(e);
            let ge = integrate(&basis, |q, a| basis.shape_gradients[q][a]);
            assemble_vector(&mut g, &self.element_dofs(e), &ge)?;
        }
        Ok(g)
    }

    /// Nodes with prescribed zero fluctuation.
    pub fn fixed_corner_mode(&self) -> Vec<usize> {
        self.dof_of_node
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.is_none().then_some(i))
            .collect()
    }
}

fn integrate(basis: &ElementBasis, f: impl Fn(usize, usize) -> f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    for q in 0..2 {
        for (a, o) in out.iter_mut().enumerate() {
            *o += f(q, a) * basis.dv(q);
        }
    }
    out
}

/// Element matrices of the dynamic micro problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroElement {
    /// `k + (α₁/dt²) m`
    pub k_hat: [[f64; 2]; 2],
    /// `∫ Bᵀ 𝔸 B dV`
    pub k: [[f64; 2]; 2],
    /// `∫ N ρ₀ Nᵀ dV`
    pub m: [[f64; 2]; 2],
    /// `∫ Bᵀ P + N ρ₀ ü dV`
    pub r: [f64; 2],
    /// `∫ N dV`
    pub g: [f64; 2],
}

/// Evaluates one element at nodal fluctuations `d` and fluctuation
/// accelerations `acc`.
pub(crate) fn element_terms(
    basis: &ElementBasis,
    phase: &MaterialPhase,
    load: &MicroLoad,
    d: [f64; 2],
    acc: [f64; 2],
    mass_factor: f64,
) -> Result<MicroElement> {
    let rho = phase.density;
    let mut out = MicroElement {
        k_hat: [[0.0; 2]; 2],
        k: [[0.0; 2]; 2],
        m: [[0.0; 2]; 2],
        r: [0.0; 2],
        g: [0.0; 2],
    };
    for q in 0..2 {
        let n = basis.shape_values[q];
        let b = basis.shape_gradients[q];
        let dv = basis.dv(q);
        let f = load.f_bar + basis.gradient(q, d);
        let (p, tangent) = phase.response(f)?;
        let udd = load.u_bar_ddot + load.f_bar_ddot * basis.x[q] + basis.interpolate(q, acc);
        for a in 0..2 {
            out.r[a] += (b[a] * p + n[a] * rho * udd) * dv;
            out.g[a] += n[a] * dv;
            for c in 0..2 {
                out.k[a][c] += b[a] * tangent * b[c] * dv;
                out.m[a][c] += n[a] * rho * n[c] * dv;
            }
        }
    }
    for a in 0..2 {
        for c in 0..2 {
            out.k_hat[a][c] = out.k[a][c] + mass_factor * out.m[a][c];
        }
    }
    Ok(out)
}

/// Fluctuation state of one RVE.
#[derive(Clone, Debug)]
pub struct RveState {
    /// Nodal fluctuations `D̃` (tied nodes carry the master value).
    pub fluct: Vec<f64>,
    /// Multipliers: `λ` first (volume constraint), then the `⟨F⟩` multiplier.
    pub lambda: Vec<f64>,
    /// Newmark history of the nodal fluctuations at the last committed step.
    pub hist: KinematicHistory,
    pub last_load: Option<MicroLoad>,
    /// Update norms of the most recent micro Newton solve.
    pub trace: Vec<f64>,
    /// Nodal fluctuation part of the first Newton update of that solve.
    pub newton_direction: Vec<f64>,
    factor: Option<BorderedFactor>,
}

impl RveState {
    pub fn at_rest(model: &RveModel) -> Self {
        let n = model.mesh.n_nodes();
        RveState {
            fluct: vec![0.0; n],
            lambda: vec![0.0; model.n_multipliers()],
            hist: KinematicHistory::zeros(n),
            last_load: None,
            trace: Vec::new(),
            newton_direction: vec![0.0; n],
            factor: None,
        }
    }

    /// The volume-constraint multiplier `λ`, if present.
    pub fn volume_multiplier(&self, model: &RveModel) -> Option<f64> {
        model.has_volume_multiplier().then(|| self.lambda[0])
    }

    /// `[D̃; λ]` in condensed coordinates.
    pub fn unknowns(&self, model: &RveModel) -> Vec<f64> {
        let mut x = model.gather(&self.fluct);
        x.extend_from_slice(&self.lambda);
        x
    }

    /// Nodal fluctuation accelerations from the Newmark update.
    pub fn fluct_acceleration(&self, model: &RveModel) -> Vec<f64> {
        acceleration(&self.fluct, &self.hist, &model.params)
    }

    /// Factorization of `K*` from the final micro iteration.
    pub fn factor(&self) -> Option<&BorderedFactor> {
        self.factor.as_ref()
    }

    pub fn release_factor(&mut self) {
        self.factor = None;
    }

    /// Advances the fluctuation history after the macro step converged.
    pub fn commit(&mut self, model: &RveModel) {
        let fluct = self.fluct.clone();
        self.hist.commit(&fluct, &model.params);
    }

    /// `⟨ũ⟩ = (1/V) Gᵀ D̃`.
    pub fn mean_fluctuation(&self, model: &RveModel) -> f64 {
        let mut s = 0.0;
        for e in 0..model.mesh.n_elements() {
            let basis = model.mesh.basis(e);
            let [a, b] = model.mesh.elements[e];
            for q in 0..2 {
                s += basis.interpolate(q, [self.fluct[a], self.fluct[b]]) * basis.dv(q);
            }
        }
        s / model.volume()
    }

    /// `⟨F⟩` by Gauss quadrature.
    pub fn mean_deformation_gradient(&self, model: &RveModel, f_bar: f64) -> f64 {
        let mut s = 0.0;
        for e in 0..model.mesh.n_elements() {
            let basis = model.mesh.basis(e);
            let [a, b] = model.mesh.elements[e];
            for q in 0..2 {
                s += (f_bar + basis.gradient(q, [self.fluct[a], self.fluct[b]])) * basis.dv(q);
            }
        }
        s / model.volume()
    }

    fn set_unknowns(&mut self, model: &RveModel, x: &[f64]) {
        let n_free = model.n_free();
        self.fluct = model.scatter(&x[..n_free]);
        self.lambda.copy_from_slice(&x[n_free..]);
    }
}

/// Element contribution at the current state.
pub fn micro_element(
    model: &RveModel,
    e: usize,
    state: &RveState,
    load: &MicroLoad,
) -> Result<MicroElement> {
    let acc = state.fluct_acceleration(model);
    element_at(model, e, state, &acc, load)
}

fn element_at(
    model: &RveModel,
    e: usize,
    state: &RveState,
    acc: &[f64],
    load: &MicroLoad,
) -> Result<MicroElement> {
    let [a, b] = model.mesh.elements[e];
    element_terms(
        &model.mesh.basis(e),
        model.phase(e),
        load,
        [state.fluct[a], state.fluct[b]],
        [acc[a], acc[b]],
        model.params.mass_factor(),
    )
    .map_err(|err| err.in_element(e))
}

/// Bordered tangent `K*` and out-of-balance vector at the current state.
///
/// The vector holds `∫ Bᵀ P + N ρ₀ ü dV + G λ (+ G_⟨F⟩ μ)` in the fluctuation
/// rows and the constraint values `Gᵀ D̃` in the multiplier rows.
pub fn assemble_system(
    model: &RveModel,
    state: &RveState,
    load: &MicroLoad,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n_free = model.n_free();
    let n = model.n_system();
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut r = vec![0.0; n];
    let acc = state.fluct_acceleration(model);
    let mut g = vec![0.0; n_free];
    let mut gf = vec![0.0; n_free];
    for e in 0..model.mesh.n_elements() {
        let dofs = model.element_dofs(e);
        let el = element_at(model, e, state, &acc, load)?;
        assemble_matrix(&mut k, &dofs, &el.k_hat)?;
        assemble_vector(&mut r[..n_free], &dofs, &el.r)?;
        assemble_vector(&mut g, &dofs, &el.g)?;
        if model.has_f_multiplier() {
            let basis = model.mesh.basis(e);
            let ge = integrate(&basis, |q, a| basis.shape_gradients[q][a]);
            assemble_vector(&mut gf, &dofs, &ge)?;
        }
    }
    let d = model.gather(&state.fluct);
    let mut col = n_free;
    let border = |k: &mut DMatrix<f64>, r: &mut Vec<f64>, gv: &[f64], mult: f64, col: usize| {
        let mut c = 0.0;
        for i in 0..n_free {
            k[(i, col)] = gv[i];
            k[(col, i)] = gv[i];
            r[i] += gv[i] * mult;
            c += gv[i] * d[i];
        }
        r[col] = c;
    };
    if model.has_volume_multiplier() {
        border(&mut k, &mut r, &g, state.lambda[0], col);
        col += 1;
    }
    if model.has_f_multiplier() {
        let mult = state.lambda[col - n_free];
        border(&mut k, &mut r, &gf, mult, col);
    }
    Ok((k, r))
}

/// Outcome of one micro Newton solve.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroReport {
    pub iterations: usize,
    /// `|ΔD*|` per iteration.
    pub trace: Vec<f64>,
}

/// Newton iteration on the bordered system until `|ΔD*| < tol·max(1, |D*|)`.
///
/// Starts from the fluctuations and multipliers already in `state`; the
/// history is left untouched. On success the factorization of the last
/// iteration is kept in the state for the sensitivity solves.
pub fn solve_micro(model: &RveModel, state: &mut RveState, load: &MicroLoad) -> Result<MicroReport> {
    let n_free = model.n_free();
    let mut trace = Vec::new();
    state.factor = None;
    for iter in 1..=model.controls.max_iter {
        let (k, r) = assemble_system(model, state, load)?;
        let factor = BorderedFactor::new(k, n_free)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = factor.solve(&rhs)?;
        let mut x = state.unknowns(model);
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
        }
        let step = norm(&delta);
        let size = norm(&x);
        if iter == 1 {
            state.newton_direction = model.scatter(&delta[..n_free]);
        }
        trace.push(step);
        if !step.is_finite() {
            break;
        }
        state.set_unknowns(model, &x);
        if step < model.controls.tol * size.max(1.0) {
            state.factor = Some(factor);
            state.last_load = Some(*load);
            state.trace = trace.clone();
            return Ok(MicroReport {
                iterations: iter,
                trace,
            });
        }
    }
    state.trace = trace.clone();
    Err(Fe2Error::MicroDivergence {
        iterations: trace.len(),
        last: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One row of the per-RVE field dump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RveFieldRow {
    pub x: f64,
    pub u_total: f64,
    pub u_fluct: f64,
    pub acceleration: f64,
}

/// Nodal fields `u = ū + (F̄ - 1) X + ũ` and `ü = ǖ + F̈̄ X + ũ̈`.
pub fn rve_fields(model: &RveModel, state: &RveState, load: &MicroLoad, u_bar: f64) -> Vec<RveFieldRow> {
    let acc = state.fluct_acceleration(model);
    model
        .mesh
        .node_coords
        .iter()
        .enumerate()
        .map(|(i, &x)| RveFieldRow {
            x,
            u_total: u_bar + (load.f_bar - 1.0) * x + state.fluct[i],
            u_fluct: state.fluct[i],
            acceleration: load.u_bar_ddot + load.f_bar_ddot * x + acc[i],
        })
        .collect()
}

/// Writes the field dump as CSV (`node_X,u_total,u_fluct,acceleration`).
pub fn write_rve_fields(path: &Path, rows: &[RveFieldRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Fe2Error::io(path, e))?,
    );
    let mut body = String::from("node_X,u_total,u_fluct,acceleration\n");
    for r in rows {
        body.push_str(&format!(
            "{},{},{},{}\n",
            crate::output::fmt17(r.x),
            crate::output::fmt17(r.u_total),
            crate::output::fmt17(r.u_fluct),
            crate::output::fmt17(r.acceleration)
        ));
    }
    out.write_all(body.as_bytes())
        .map_err(|e| Fe2Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::{build_rve_mesh, UnitCell};
    use crate::material::{density_from_kg_per_m3, Law};
    use approx::assert_relative_eq;

    fn phases(law: Law) -> Vec<MaterialPhase> {
        vec![
            MaterialPhase::new(2e3, density_from_kg_per_m3(1e3), law).unwrap(),
            MaterialPhase::new(2e5, density_from_kg_per_m3(1e5), law).unwrap(),
        ]
    }

    fn homogeneous(law: Law) -> Vec<MaterialPhase> {
        let p = MaterialPhase::new(2e3, density_from_kg_per_m3(1e3), law).unwrap();
        vec![p, p]
    }

    fn model(
        phases: Vec<MaterialPhase>,
        cell: UnitCell,
        cm: ConstraintMode,
        fl: FLinkMode,
    ) -> RveModel {
        RveModel::new(
            build_rve_mesh(cell, 1, 10.0, 0.5).unwrap(),
            phases,
            cm,
            fl,
            NewmarkParams::trapezoidal(5e-5).unwrap(),
            MicroControls::default(),
        )
        .unwrap()
    }

    #[test]
    fn element_mass_and_constraint_vectors() {
        let m = model(
            homogeneous(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::PeriodicBc,
        );
        let s = RveState::at_rest(&m);
        let el = micro_element(&m, 3, &s, &MicroLoad::identity()).unwrap();
        let rho = m.phases[0].density;
        for a in 0..2 {
            assert_relative_eq!(el.m[a][0] + el.m[a][1], rho * 0.25, max_relative = 1e-14);
            assert_relative_eq!(el.g[a], 0.25, max_relative = 1e-14);
        }
    }

    #[test]
    fn uniform_stress_cancels_at_interior_nodes() {
        let m = model(
            homogeneous(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::PeriodicBc,
        );
        let s = RveState::at_rest(&m);
        let (_, r) = assemble_system(&m, &s, &MicroLoad::new(1.05, 0.0, 0.0)).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn rest_state_is_stress_free() {
        let m = model(
            homogeneous(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::PeriodicBc,
        );
        let mut s = RveState::at_rest(&m);
        solve_micro(&m, &mut s, &MicroLoad::identity()).unwrap();
        assert!(s.fluct.iter().all(|v| *v == 0.0));
        assert_eq!(s.lambda, vec![0.0]);
    }

    #[test]
    fn rigid_acceleration_is_carried_by_lambda() {
        let m = model(
            homogeneous(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::PeriodicBc,
        );
        let mut s = RveState::at_rest(&m);
        let a = 3.0e6;
        solve_micro(&m, &mut s, &MicroLoad::new(1.0, 0.0, a)).unwrap();
        let rho = m.phases[0].density;
        assert!(s.fluct.iter().all(|v| v.abs() < 1e-14));
        assert_relative_eq!(s.lambda[0], -rho * a, max_relative = 1e-10);
    }

    #[test]
    fn fixed_corners_show_artificial_fluctuations_under_rigid_acceleration() {
        let m = model(
            homogeneous(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::FixedCorners,
            FLinkMode::PeriodicBc,
        );
        assert_eq!(m.fixed_corner_mode(), vec![0, m.mesh.n_nodes() - 1]);
        let mut s = RveState::at_rest(&m);
        solve_micro(&m, &mut s, &MicroLoad::new(1.0, 0.0, 3.0e6)).unwrap();
        let max = s.fluct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max > 1e-8, "max fluctuation {max}");
        assert_eq!(s.fluct[0], 0.0);
        assert_eq!(*s.fluct.last().unwrap(), 0.0);
    }

    #[test]
    fn fixed_corners_static_homogeneous_is_trivial() {
        let m = model(
            homogeneous(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::FixedCorners,
            FLinkMode::PeriodicBc,
        );
        let mut s = RveState::at_rest(&m);
        solve_micro(&m, &mut s, &MicroLoad::new(1.02, 0.0, 0.0)).unwrap();
        assert!(s.fluct.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn f_volume_constraint_vector_single_element() {
        let mesh = Mesh1D::uniform(-0.5, 1.0, 1, |_| 0).unwrap();
        let m = RveModel::new(
            mesh,
            homogeneous(Law::LinearElastic),
            ConstraintMode::VolumeConstraint,
            FLinkMode::VolumeAverageF,
            NewmarkParams::trapezoidal(1e-3).unwrap(),
            MicroControls::default(),
        )
        .unwrap();
        let g = m.apply_constraint_f_volume().unwrap();
        assert_relative_eq!(g[0], -1.0, max_relative = 1e-14);
        assert_relative_eq!(g[1], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn f_volume_constraint_rejected_with_periodic_ties() {
        let m = model(
            homogeneous(Law::LinearElastic),
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::PeriodicBc,
        );
        assert!(m.apply_constraint_f_volume().is_err());
        let bad = RveModel::new(
            build_rve_mesh(UnitCell::A, 1, 10.0, 0.5).unwrap(),
            homogeneous(Law::LinearElastic),
            ConstraintMode::FixedCorners,
            FLinkMode::VolumeAverageF,
            NewmarkParams::trapezoidal(1e-3).unwrap(),
            MicroControls::default(),
        );
        assert!(matches!(bad, Err(Fe2Error::InvalidConfig(_))));
    }

    #[test]
    fn f_volume_mode_static_solutions() {
        let mut static_phases = phases(Law::StVenantKirchhoff);
        for p in &mut static_phases {
            p.density = 0.0;
        }
        let m = model(
            static_phases,
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::VolumeAverageF,
        );
        let mut s = RveState::at_rest(&m);
        solve_micro(&m, &mut s, &MicroLoad::new(1.01, 0.0, 0.0)).unwrap();
        assert!((s.mean_deformation_gradient(&m, 1.01) - 1.01).abs() < 1e-12);
        assert!(s.mean_fluctuation(&m).abs() < 1e-10 * m.volume());

        let hm = model(
            homogeneous(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::VolumeAverageF,
        );
        let mut hs = RveState::at_rest(&hm);
        solve_micro(&hm, &mut hs, &MicroLoad::new(1.01, 0.0, 0.0)).unwrap();
        assert!(hs.fluct.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn inverted_element_is_reported() {
        let m = model(
            phases(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::PeriodicBc,
        );
        let mut s = RveState::at_rest(&m);
        let err = solve_micro(&m, &mut s, &MicroLoad::new(-0.1, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Fe2Error::InvertedElement { element: Some(0), .. }));
    }

    #[test]
    fn iteration_cap_reports_trace() {
        let mut m = model(
            phases(Law::StVenantKirchhoff),
            UnitCell::A,
            ConstraintMode::VolumeConstraint,
            FLinkMode::PeriodicBc,
        );
        m.controls.max_iter = 1;
        let mut s = RveState::at_rest(&m);
        match solve_micro(&m, &mut s, &MicroLoad::new(1.2, 1e5, 1e6)) {
            Err(Fe2Error::MicroDivergence { iterations, trace, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(trace.len(), 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
