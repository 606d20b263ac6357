//! Single-scale reference: the whole bar meshed at layer resolution and
//! integrated with the same element kernel, material laws and Newmark rule
//! as the RVEs, without any constraint machinery.

use crate::error::{Fe2Error, Result};
use crate::fe::{assemble_matrix, assemble_vector, Mesh1D};
use crate::linalg::BandedMatrix;
use crate::macroscale::{ImpactLoad, NewtonControls, RunFailure};
use crate::material::MaterialPhase;
use crate::newmark::{acceleration, KinematicHistory, NewmarkParams};
use crate::rve::{element_terms, norm, MicroLoad};

#[derive(Clone, Debug)]
pub struct DnsModel {
    pub mesh: Mesh1D,
    pub phases: Vec<MaterialPhase>,
    pub params: NewmarkParams,
    pub load: ImpactLoad,
    pub controls: NewtonControls,
}

impl DnsModel {
    pub fn new(
        mesh: Mesh1D,
        phases: Vec<MaterialPhase>,
        params: NewmarkParams,
        load: ImpactLoad,
        controls: NewtonControls,
    ) -> Result<Self> {
        mesh.validate()?;
        if let Some(&p) = mesh.phase_of_element.iter().find(|&&p| p >= phases.len()) {
            return Err(Fe2Error::config(format!("mesh refers to unknown phase {p}")));
        }
        Ok(DnsModel {
            mesh,
            phases,
            params,
            load,
            controls,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DnsState {
    pub step: usize,
    pub u: Vec<f64>,
    pub hist: KinematicHistory,
}

impl DnsState {
    pub fn at_rest(model: &DnsModel) -> Self {
        let n = model.mesh.n_nodes();
        DnsState {
            step: 0,
            u: vec![0.0; n],
            hist: KinematicHistory::zeros(n),
        }
    }

    /// Discrete energy `½ vᵀMv + Σ ∫ W(F) dV` of the committed state.
    pub fn energy(&self, model: &DnsModel) -> Result<f64> {
        let mut e = 0.0;
        for el in 0..model.mesh.n_elements() {
            let basis = model.mesh.basis(el);
            let phase = &model.phases[model.mesh.phase_of_element[el]];
            let [a, b] = model.mesh.elements[el];
            for q in 0..2 {
                let f = 1.0 + basis.gradient(q, [self.hist.u[a], self.hist.u[b]]);
                let v = basis.interpolate(q, [self.hist.v[a], self.hist.v[b]]);
                let strain_energy = phase.energy(f)?;
                e += (0.5 * phase.density * v * v + strain_energy) * basis.dv(q);
            }
        }
        Ok(e)
    }
}

/// Newton iterations of one step; returns the update norms.
pub fn dns_step(model: &DnsModel, state: &mut DnsState) -> Result<Vec<f64>> {
    let step_index = state.step + 1;
    let t = step_index as f64 * model.params.dt;
    let n = model.mesh.n_nodes();
    let last = n - 1;
    // The boundary increment enters through the first linear solve, so a
    // fast-retracting end cannot invert the element next to it.
    let mut u = state.hist.u.clone();
    let targets = [(0, 0.0), (last, model.load.displacement(t))];
    let fail = |reason: String| Fe2Error::StepFailure {
        step: step_index,
        reason,
    };
    let identity = MicroLoad::identity();
    let c = model.params.mass_factor();
    let mut deltas = Vec::new();
    for _ in 0..model.controls.max_iter {
        let acc = acceleration(&u, &state.hist, &model.params);
        let mut k = BandedMatrix::zeros(n, 1, 1);
        let mut r = vec![0.0; n];
        for e in 0..model.mesh.n_elements() {
            let [a, b] = model.mesh.elements[e];
            let el = element_terms(
                &model.mesh.basis(e),
                &model.phases[model.mesh.phase_of_element[e]],
                &identity,
                [u[a], u[b]],
                [acc[a], acc[b]],
                c,
            )
            .map_err(|err| fail(err.in_element(e).to_string()))?;
            let dofs = [Some(a), Some(b)];
            assemble_matrix(&mut k, &dofs, &el.k_hat)?;
            assemble_vector(&mut r, &dofs, &el.r)?;
        }
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        for (i, value) in targets {
            k.apply_dirichlet(i, value - u[i], &mut rhs);
        }
        let delta = k.factorize().map_err(|e| fail(e.to_string()))?.solve(&rhs);
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui += di;
        }
        let size = norm(&delta);
        deltas.push(size);
        if size < model.controls.tol {
            state.u = u;
            return Ok(deltas);
        }
        if !size.is_finite() {
            break;
        }
    }
    Err(fail(format!(
        "Newton did not converge in {} iterations",
        deltas.len()
    )))
}

pub fn dns_commit(model: &DnsModel, state: &mut DnsState) {
    let u = state.u.clone();
    state.hist.commit(&u, &model.params);
    state.step += 1;
}

#[derive(Clone, Debug, PartialEq)]
pub struct DnsOutcome {
    pub completed_steps: usize,
    pub failure: Option<RunFailure>,
    /// Newton update norms per completed step.
    pub deltas: Vec<Vec<f64>>,
}

/// Runs `n_steps` steps from rest; `observer(step, time, u)` sees every
/// committed displacement field.
pub fn run_dns(
    model: &DnsModel,
    n_steps: usize,
    mut observer: impl FnMut(usize, f64, &[f64]),
) -> DnsOutcome {
    let mut state = DnsState::at_rest(model);
    let mut deltas = Vec::with_capacity(n_steps);
    let mut failure = None;
    for _ in 0..n_steps {
        match dns_step(model, &mut state) {
            Ok(d) => {
                dns_commit(model, &mut state);
                observer(state.step, state.step as f64 * model.params.dt, &state.u);
                deltas.push(d);
            }
            Err(err) => {
                log::warn!("dns stopped at step {}: {err}", state.step + 1);
                failure = Some(RunFailure {
                    step: state.step + 1,
                    message: err.to_string(),
                });
                break;
            }
        }
    }
    DnsOutcome {
        completed_steps: state.step,
        failure,
        deltas,
    }
}

/// Mean of the piecewise-linear nodal field over `[center − w/2, center + w/2]`.
pub fn dns_window_average(node_x: &[f64], values: &[f64], center: f64, window: f64) -> Result<f64> {
    let (lo, hi) = (center - 0.5 * window, center + 0.5 * window);
    let (first, last) = match (node_x.first(), node_x.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Fe2Error::InvalidComparison("empty field".into())),
    };
    let slack = 1e-9 * (last - first).abs().max(1.0);
    if !(window > 0.0) || lo < first - slack || hi > last + slack {
        return Err(Fe2Error::InvalidComparison(format!(
            "window [{lo}, {hi}] outside the field [{first}, {last}]"
        )));
    }
    let mut integral = 0.0;
    for i in 0..node_x.len() - 1 {
        let (x0, x1) = (node_x[i], node_x[i + 1]);
        let a = x0.max(lo);
        let b = x1.min(hi);
        if b <= a {
            continue;
        }
        let at = |x: f64| values[i] + (values[i + 1] - values[i]) * (x - x0) / (x1 - x0);
        integral += 0.5 * (at(a) + at(b)) * (b - a);
    }
    Ok(integral / (hi.min(last) - lo.max(first)))
}

/// First time the sampled signal reaches `level`, linearly interpolated
/// between samples.
pub fn crossing_time(times: &[f64], signal: &[f64], level: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for (&t, &s) in times.iter().zip(signal) {
        if s >= level {
            return Some(match prev {
                Some((t0, s0)) if s > s0 => t0 + (level - s0) * (t - t0) / (s - s0),
                _ => t,
            });
        }
        prev = Some((t, s));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::build_bar_mesh;
    use crate::material::{density_from_kg_per_m3, Law};
    use approx::assert_relative_eq;

    fn homogeneous_bar(u_max: f64, duration: f64, dt: f64) -> DnsModel {
        let p = MaterialPhase::new(2e3, density_from_kg_per_m3(1e3), Law::StVenantKirchhoff).unwrap();
        DnsModel::new(
            build_bar_mesh(100.0, 10.0, 2.0).unwrap(),
            vec![p, p],
            NewmarkParams::trapezoidal(dt).unwrap(),
            ImpactLoad { u_max, duration },
            NewtonControls::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_load_stays_at_rest() {
        let m = homogeneous_bar(0.0, 1e-3, 1e-5);
        let mut max = 0.0f64;
        let out = run_dns(&m, 20, |_, _, u| max = u.iter().fold(max, |a, v| a.max(v.abs())));
        assert!(out.finished_ok());
        assert_eq!(max, 0.0);
    }

    #[test]
    fn quasi_static_ramp_is_linear() {
        // c ≈ 1.4e6 mm/s, so L/c ≈ 7e-5 s ≪ T.
        let m = homogeneous_bar(1.0, 10.0, 0.05);
        let mut last = Vec::new();
        run_dns(&m, 40, |_, _, u| last = u.to_vec());
        let tip = m.load.displacement(2.0);
        for (x, u) in m.mesh.node_coords.iter().zip(&last) {
            assert_relative_eq!(*u, tip * x / 100.0, epsilon = 1e-6 * tip);
        }
    }

    #[test]
    fn window_average_of_linear_field() {
        let x: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let u: Vec<f64> = x.iter().map(|v| 0.3 * v).collect();
        assert_relative_eq!(dns_window_average(&x, &u, 4.3, 3.0).unwrap(), 0.3 * 4.3, max_relative = 1e-14);
        let c = vec![2.5; 11];
        assert_relative_eq!(dns_window_average(&x, &c, 5.0, 2.0).unwrap(), 2.5, max_relative = 1e-14);
        assert!(dns_window_average(&x, &u, 9.5, 3.0).is_err());
    }

    #[test]
    fn crossing_is_interpolated() {
        let t = [0.0, 1.0, 2.0];
        let s = [0.0, 0.5, 1.5];
        assert_relative_eq!(crossing_time(&t, &s, 1.0).unwrap(), 1.5);
        assert!(crossing_time(&t, &s, 2.0).is_none());
    }

    impl DnsOutcome {
        fn finished_ok(&self) -> bool {
            self.failure.is_none()
        }
    }
}
