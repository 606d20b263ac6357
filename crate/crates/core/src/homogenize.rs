//! Macroscopic stress, inertia and the four consistent tangent moduli of a
//! converged RVE.
//!
//! With `a = α₁/dt²` (micro) and `ā = ᾱ₁/dt²` (macro):
//!
//! ```text
//! A_PF = ⟨𝔸⟩ + ā⟨ρX²⟩ − (1/V) L*ᵀ K*⁻¹ L̄*      L* = L + a Z,  L̄* = L + ā Z
//! A_Pu = ⟨ρX⟩        − (1/V) L*ᵀ K*⁻¹ W*
//! A_fF = ā⟨ρX⟩       − (1/V) a W*ᵀ K*⁻¹ L̄*
//! A_fu = ⟨ρ⟩         − (1/V) a W*ᵀ K*⁻¹ W*
//! ```
//!
//! Starred vectors are padded with zeros in the multiplier rows.

use nalgebra::DMatrix;

use crate::error::{Fe2Error, Result};
use crate::fe::{assemble_matrix, assemble_vector};
use crate::linalg::BorderedFactor;
use crate::newmark::NewmarkParams;
use crate::rve::{assemble_system, MicroLoad, RveModel, RveState};

/// Assembled sensitivity vectors and volume averages at one micro state.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMatrices {
    /// `∫ Bᵀ 𝔸 dV`
    pub l: Vec<f64>,
    /// `∫ ρ₀ N X dV`
    pub z: Vec<f64>,
    /// `∫ ρ₀ N dV`
    pub w: Vec<f64>,
    /// `∫ N dV`
    pub g: Vec<f64>,
    pub mean_tangent: f64,
    pub mean_density: f64,
    /// `⟨ρ₀ X⟩`
    pub mean_density_x: f64,
    /// `⟨ρ₀ X²⟩`
    pub mean_density_xx: f64,
    pub volume: f64,
    pub n_system: usize,
}

impl SensitivityMatrices {
    pub fn assemble(model: &RveModel, state: &RveState, load: &MicroLoad) -> Result<Self> {
        let n_free = model.n_free();
        let mut out = SensitivityMatrices {
            l: vec![0.0; n_free],
            z: vec![0.0; n_free],
            w: vec![0.0; n_free],
            g: vec![0.0; n_free],
            mean_tangent: 0.0,
            mean_density: 0.0,
            mean_density_x: 0.0,
            mean_density_xx: 0.0,
            volume: model.volume(),
            n_system: model.n_system(),
        };
        for e in 0..model.mesh.n_elements() {
            let basis = model.mesh.basis(e);
            let phase = &model.phases[model.mesh.phase_of_element[e]];
            let rho = phase.density;
            let [na, nb] = model.mesh.elements[e];
            let d = [state.fluct[na], state.fluct[nb]];
            let (mut le, mut ze, mut we, mut ge) = ([0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]);
            for q in 0..2 {
                let dv = basis.dv(q);
                let x = basis.x[q];
                let tangent = phase.tangent(load.f_bar + basis.gradient(q, d))?;
                for a in 0..2 {
                    let n = basis.shape_values[q][a];
                    le[a] += basis.shape_gradients[q][a] * tangent * dv;
                    ze[a] += rho * n * x * dv;
                    we[a] += rho * n * dv;
                    ge[a] += n * dv;
                }
                out.mean_tangent += tangent * dv;
                out.mean_density += rho * dv;
                out.mean_density_x += rho * x * dv;
                out.mean_density_xx += rho * x * x * dv;
            }
            let dofs = model.element_dofs(e);
            assemble_vector(&mut out.l, &dofs, &le)?;
            assemble_vector(&mut out.z, &dofs, &ze)?;
            assemble_vector(&mut out.w, &dofs, &we)?;
            assemble_vector(&mut out.g, &dofs, &ge)?;
        }
        let v = out.volume;
        out.mean_tangent /= v;
        out.mean_density /= v;
        out.mean_density_x /= v;
        out.mean_density_xx /= v;
        Ok(out)
    }

    fn padded(&self, f: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_system];
        for (i, o) in out.iter_mut().take(self.l.len()).enumerate() {
            *o = f(i);
        }
        out
    }

    /// `L + c Z`, zero in the multiplier rows.
    pub fn l_star(&self, mass_factor: f64) -> Vec<f64> {
        self.padded(|i| self.l[i] + mass_factor * self.z[i])
    }

    /// `W`, zero in the multiplier rows.
    pub fn w_star(&self) -> Vec<f64> {
        self.padded(|i| self.w[i])
    }
}

/// Condensed stiffness `K = ∫ Bᵀ𝔸B` and mass `M = ∫ Nρ₀Nᵀ` without
/// constraint rows.
pub fn stiffness_and_mass(
    model: &RveModel,
    state: &RveState,
    load: &MicroLoad,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = model.n_free();
    let mut k = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    for e in 0..model.mesh.n_elements() {
        let el = crate::rve::micro_element(model, e, state, load)?;
        let dofs = model.element_dofs(e);
        assemble_matrix(&mut k, &dofs, &el.k)?;
        assemble_matrix(&mut m, &dofs, &el.m)?;
    }
    Ok((k, m))
}

/// `dD*/dF̄` and `dD*/dǖ` over the bordered unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct Sensitivities {
    pub d_df: Vec<f64>,
    pub d_du: Vec<f64>,
}

/// Solves `K* x = −L̄*` and `K* x = −W*` with an existing factorization.
pub fn sensitivity_solves(
    factor: &BorderedFactor,
    mats: &SensitivityMatrices,
    macro_mass_factor: f64,
) -> Result<Sensitivities> {
    let neg = |v: Vec<f64>| v.into_iter().map(|x| -x).collect::<Vec<_>>();
    Ok(Sensitivities {
        d_df: factor.solve(&neg(mats.l_star(macro_mass_factor)))?,
        d_du: factor.solve(&neg(mats.w_star()))?,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inertia factors of both scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassFactors {
    pub micro: f64,
    pub macro_: f64,
}

impl MassFactors {
    pub fn new(micro: &NewmarkParams, macro_: &NewmarkParams) -> Self {
        MassFactors {
            micro: micro.mass_factor(),
            macro_: macro_.mass_factor(),
        }
    }
}

pub fn tangent_pf(mats: &SensitivityMatrices, sens: &Sensitivities, c: MassFactors) -> f64 {
    mats.mean_tangent
        + c.macro_ * mats.mean_density_xx
        + dot(&mats.l_star(c.micro), &sens.d_df) / mats.volume
}

pub fn tangent_pu(mats: &SensitivityMatrices, sens: &Sensitivities, c: MassFactors) -> f64 {
    mats.mean_density_x + dot(&mats.l_star(c.micro), &sens.d_du) / mats.volume
}

pub fn tangent_ff(mats: &SensitivityMatrices, sens: &Sensitivities, c: MassFactors) -> f64 {
    c.macro_ * mats.mean_density_x + c.micro * dot(&mats.w_star(), &sens.d_df) / mats.volume
}

pub fn tangent_fu(mats: &SensitivityMatrices, sens: &Sensitivities, c: MassFactors) -> f64 {
    mats.mean_density + c.micro * dot(&mats.w_star(), &sens.d_du) / mats.volume
}

/// Homogenized response at one macro Gauss point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TangentSet {
    pub p_bar: f64,
    /// `⟨ρ₀ ü⟩`, entering the macro residual with a plus sign.
    pub f_rho_bar: f64,
    pub a_pf: f64,
    pub a_pu: f64,
    pub a_ff: f64,
    pub a_fu: f64,
}

/// Per-Gauss-point integrand of the averages, evaluated at the current state.
fn for_each_point(
    model: &RveModel,
    state: &RveState,
    load: &MicroLoad,
    mut f: impl FnMut(usize, usize, f64, f64, f64, f64),
) -> Result<()> {
    let acc = state.fluct_acceleration(model);
    for e in 0..model.mesh.n_elements() {
        let basis = model.mesh.basis(e);
        let phase = &model.phases[model.mesh.phase_of_element[e]];
        let [a, b] = model.mesh.elements[e];
        for q in 0..2 {
            let x = basis.x[q];
            let fgrad = load.f_bar + basis.gradient(q, [state.fluct[a], state.fluct[b]]);
            let p = phase.stress(fgrad)?;
            let udd = load.u_bar_ddot + load.f_bar_ddot * x + basis.interpolate(q, [acc[a], acc[b]]);
            f(e, q, basis.dv(q), x, p, phase.density * udd);
        }
    }
    Ok(())
}

/// `P̄ = ⟨P + ρ₀ ü X⟩`.
pub fn macro_stress(model: &RveModel, state: &RveState, load: &MicroLoad) -> Result<f64> {
    let mut s = 0.0;
    for_each_point(model, state, load, |_, _, dv, x, p, rho_udd| {
        s += (p + rho_udd * x) * dv;
    })?;
    Ok(s / model.volume())
}

/// `f̄ρ = ⟨ρ₀ ü⟩`.
pub fn macro_inertia(model: &RveModel, state: &RveState, load: &MicroLoad) -> Result<f64> {
    let mut s = 0.0;
    for_each_point(model, state, load, |_, _, dv, _, _, rho_udd| {
        s += rho_udd * dv;
    })?;
    Ok(s / model.volume())
}

/// Averages, sensitivity solves and moduli at a converged state.
///
/// Reuses the factorization kept by the last micro Newton iteration; when the
/// state carries none, `K*` is assembled and factorized afresh.
pub fn homogenize(
    model: &RveModel,
    state: &RveState,
    load: &MicroLoad,
    macro_params: &NewmarkParams,
) -> Result<TangentSet> {
    let mats = SensitivityMatrices::assemble(model, state, load)?;
    let c = MassFactors::new(&model.params, macro_params);
    let fresh;
    let factor = match state.factor() {
        Some(f) => f,
        None => {
            let (k, _) = assemble_system(model, state, load)?;
            fresh = BorderedFactor::new(k, model.n_free())?;
            &fresh
        }
    };
    let sens = sensitivity_solves(factor, &mats, c.macro_)?;
    Ok(TangentSet {
        p_bar: macro_stress(model, state, load)?,
        f_rho_bar: macro_inertia(model, state, load)?,
        a_pf: tangent_pf(&mats, &sens, c),
        a_pu: tangent_pu(&mats, &sens, c),
        a_ff: tangent_ff(&mats, &sens, c),
        a_fu: tangent_fu(&mats, &sens, c),
    })
}

/// Virtual fields for the multiscale virtual-power balance.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualFields {
    pub d_f_bar: f64,
    pub d_u_bar: f64,
    /// Nodal virtual fluctuations; must be admissible (tied and `Gᵀ δD̃ = 0`).
    pub d_fluct: Vec<f64>,
}

impl VirtualFields {
    /// The three probes of the virtual-power check: a unit `δF̄`, a unit
    /// `δū`, and the first Newton direction of the latest micro solve.
    pub fn probes(model: &RveModel, state: &RveState) -> [VirtualFields; 3] {
        let n = model.mesh.n_nodes();
        [
            VirtualFields {
                d_f_bar: 1.0,
                d_u_bar: 0.0,
                d_fluct: vec![0.0; n],
            },
            VirtualFields {
                d_f_bar: 0.0,
                d_u_bar: 1.0,
                d_fluct: vec![0.0; n],
            },
            VirtualFields {
                d_f_bar: 0.0,
                d_u_bar: 0.0,
                d_fluct: state.newton_direction.clone(),
            },
        ]
    }
}

/// Normalized gap `|P̄ δF̄ + f̄ρ δū − ⟨P δF + ρ₀ ü δu⟩|` divided by the sum of
/// the magnitudes of all terms.
pub fn hill_mandel_check(
    model: &RveModel,
    state: &RveState,
    load: &MicroLoad,
    p_bar: f64,
    f_rho_bar: f64,
    probe: &VirtualFields,
) -> Result<f64> {
    if probe.d_fluct.len() != model.mesh.n_nodes() {
        return Err(Fe2Error::Internal("virtual fluctuation has wrong length".into()));
    }
    let macro_power = p_bar * probe.d_f_bar + f_rho_bar * probe.d_u_bar;
    let mut micro = 0.0;
    let mut magnitude = 0.0;
    for_each_point(model, state, load, |e, q, dv, x, p, rho_udd| {
        let basis = model.mesh.basis(e);
        let [a, b] = model.mesh.elements[e];
        let nodal = [probe.d_fluct[a], probe.d_fluct[b]];
        let d_f = probe.d_f_bar + basis.gradient(q, nodal);
        let d_u = probe.d_u_bar + probe.d_f_bar * x + basis.interpolate(q, nodal);
        micro += (p * d_f + rho_udd * d_u) * dv;
        magnitude += ((p * d_f).abs() + (rho_udd * d_u).abs()) * dv;
    })?;
    micro /= model.volume();
    magnitude /= model.volume();
    let scale = magnitude + macro_power.abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((macro_power - micro).abs() / scale)
}
