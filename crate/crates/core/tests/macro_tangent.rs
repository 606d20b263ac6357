//! The assembled macro stiffness against central differences of the
//! assembled macro residual, with every RVE re-converged at each probe.

use fe2_core::fe::{assemble_matrix, assemble_vector};
use fe2_core::homogenize::homogenize;
use fe2_core::linalg::BandedMatrix;
use fe2_core::macroscale::{
    macro_element, macro_gp_kinematics, macro_residual, run_fe2, step, MacroModel, MacroState,
};
use fe2_core::rve::solve_micro;
use fe2_core::verification::DeskScenarios;

/// Residual and stiffness at trial displacements `d`, histories frozen.
fn linearize(model: &MacroModel, state: &MacroState, d: &[f64]) -> (Vec<f64>, BandedMatrix) {
    let n = model.mesh.n_nodes();
    let mut gps = state.gps.clone();
    for gp in gps.iter_mut() {
        gp.load = macro_gp_kinematics(model, d, &state.hist, gp);
        solve_micro(&model.rve, &mut gp.rve, &gp.load).unwrap();
        gp.tangents = homogenize(&model.rve, &gp.rve, &gp.load, &model.params).unwrap();
    }
    let mut r = vec![0.0; n];
    let mut k = BandedMatrix::zeros(n, 1, 1);
    for e in 0..model.mesh.n_elements() {
        let basis = model.mesh.basis(e);
        let (g0, g1) = (&gps[2 * e].tangents, &gps[2 * e + 1].tangents);
        let dofs = model.mesh.elements[e].map(Some);
        assemble_matrix(&mut k, &dofs, &macro_element([g0, g1], &basis, &model.params)).unwrap();
        assemble_vector(
            &mut r,
            &dofs,
            &macro_residual([(g0.p_bar, g0.f_rho_bar), (g1.p_bar, g1.f_rho_bar)], &basis),
        )
        .unwrap();
    }
    (r, k)
}

#[test]
fn macro_stiffness_is_the_derivative_of_the_macro_residual() {
    let mut cfg = DeskScenarios::embedded().unwrap().impact;
    cfg.time.n_steps = 30;
    let model = cfg.macro_model().unwrap();
    let (state, outcome) = run_fe2(&model, 30, |_, _| {});
    assert!(outcome.finished());

    // Linearize about the converged solution of the next step, where the
    // pulse front is well inside the bar.
    let mut probe = state.clone();
    step(&model, &mut probe).unwrap();
    let d = probe.d.clone();
    let (_, k) = linearize(&model, &state, &d);

    let n = d.len();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for j in (n - 8)..n {
        let mut plus = d.clone();
        let mut minus = d.clone();
        plus[j] += h;
        minus[j] -= h;
        let (rp, _) = linearize(&model, &state, &plus);
        let (rm, _) = linearize(&model, &state, &minus);
        let scale = k.get(j, j).abs();
        for i in j.saturating_sub(1)..=(j + 1).min(n - 1) {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            worst = worst.max((fd - k.get(i, j)).abs() / scale);
        }
    }
    println!("worst relative stiffness mismatch {worst:e}");
    assert!(worst < 1e-6, "macro stiffness off by {worst:e}");
}
