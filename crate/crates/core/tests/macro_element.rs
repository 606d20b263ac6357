//! Macro element kernels and the Newmark rule against closed forms.

use approx::assert_relative_eq;
use fe2_core::fe::ElementBasis;
use fe2_core::homogenize::TangentSet;
use fe2_core::macroscale::{impact_displacement, macro_element, macro_residual};
use fe2_core::newmark::{NewmarkParams, ScalarHistory};
use proptest::prelude::*;

fn constant(a_pf: f64, a_pu: f64, a_ff: f64, a_fu: f64) -> TangentSet {
    TangentSet {
        a_pf,
        a_pu,
        a_ff,
        a_fu,
        ..TangentSet::default()
    }
}

proptest! {
    /// With the same moduli at both points the integrals are exact:
    /// ∫B·B = [1,-1;-1,1]/h, ∫B·N = [-1,-1;1,1]/2, ∫N·N = h[2,1;1,2]/6.
    #[test]
    fn constant_moduli_give_closed_form(
        x0 in -100.0f64..100.0,
        h in 0.1f64..50.0,
        a_pf in 1.0f64..1e5,
        a_pu in -1e-3f64..1e-3,
        a_ff in -1e-3f64..1e-3,
        a_fu in 1e-10f64..1e-6,
        dt in 1e-6f64..1e-3,
    ) {
        let basis = ElementBasis::new(x0, h);
        let params = NewmarkParams::trapezoidal(dt).unwrap();
        let c = params.mass_factor();
        let t = constant(a_pf, a_pu, a_ff, a_fu);
        let k = macro_element([&t, &t], &basis, &params);
        let bb = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        let bn = [[-0.5, -0.5], [0.5, 0.5]];
        let nn = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                let expected = a_pf * bb[i][j]
                    + c * a_pu * bn[i][j]
                    + a_ff * bn[j][i]
                    + c * a_fu * nn[i][j];
                let scale = a_pf / h + c * (a_pu.abs() + a_fu * h) + a_ff.abs();
                prop_assert!((k[i][j] - expected).abs() < 1e-12 * scale);
            }
        }
    }

    /// Point-wise moduli: two-point Gauss rule written out by hand.
    #[test]
    fn varying_moduli_match_hand_quadrature(
        h in 0.5f64..5.0,
        m in proptest::collection::vec(-10.0f64..10.0, 8),
        dt in 1e-3f64..1e-1,
    ) {
        let basis = ElementBasis::new(0.0, h);
        let params = NewmarkParams::trapezoidal(dt).unwrap();
        let c = 4.0 / (dt * dt);
        let t0 = constant(m[0], m[1], m[2], m[3]);
        let t1 = constant(m[4], m[5], m[6], m[7]);
        let k = macro_element([&t0, &t1], &basis, &params);
        let g = 1.0 / 3f64.sqrt();
        let xi = [-g, g];
        let mut expected = [[0.0; 2]; 2];
        for (q, t) in [t0, t1].iter().enumerate() {
            let n = [(1.0 - xi[q]) / 2.0, (1.0 + xi[q]) / 2.0];
            let b = [-1.0 / h, 1.0 / h];
            let w = h / 2.0;
            for i in 0..2 {
                for j in 0..2 {
                    expected[i][j] += w
                        * (b[i] * t.a_pf * b[j]
                            + c * b[i] * t.a_pu * n[j]
                            + n[i] * t.a_ff * b[j]
                            + c * n[i] * t.a_fu * n[j]);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((k[i][j] - expected[i][j]).abs() < 1e-10 * (1.0 + expected[i][j].abs()));
            }
        }
    }

    #[test]
    fn residual_of_constant_fields(
        h in 0.1f64..10.0,
        p in -1e3f64..1e3,
        f in -1e-3f64..1e-3,
    ) {
        let basis = ElementBasis::new(3.0, h);
        let r = macro_residual([(p, f), (p, f)], &basis);
        prop_assert!((r[0] - (-p + f * h / 2.0)).abs() < 1e-12 * (p.abs() + 1.0));
        prop_assert!((r[1] - (p + f * h / 2.0)).abs() < 1e-12 * (p.abs() + 1.0));
    }

    /// The element matrix is the derivative of the residual when the Gauss
    /// values respond linearly to the nodal displacements.
    #[test]
    fn element_matrix_differentiates_linear_residual(
        h in 0.5f64..5.0,
        m in proptest::collection::vec(-10.0f64..10.0, 8),
        d in proptest::collection::vec(-1.0f64..1.0, 2),
        dt in 0.1f64..1.0,
    ) {
        let basis = ElementBasis::new(0.0, h);
        let params = NewmarkParams::trapezoidal(dt).unwrap();
        let c = params.mass_factor();
        let ts = [constant(m[0], m[1], m[2], m[3]), constant(m[4], m[5], m[6], m[7])];
        // P = A_PF F + A_Pu c u, f = A_fF F + A_fu c u (history terms drop out).
        let values = |d: [f64; 2]| {
            let mut v = [(0.0, 0.0); 2];
            for q in 0..2 {
                let f = basis.gradient(q, d);
                let u = basis.interpolate(q, d);
                v[q] = (
                    ts[q].a_pf * f + ts[q].a_pu * c * u,
                    ts[q].a_ff * f + ts[q].a_fu * c * u,
                );
            }
            v
        };
        let k = macro_element([&ts[0], &ts[1]], &basis, &params);
        let r0 = macro_residual(values([d[0], d[1]]), &basis);
        for j in 0..2 {
            let mut dj = [d[0], d[1]];
            dj[j] += 1.0;
            let r1 = macro_residual(values(dj), &basis);
            for i in 0..2 {
                prop_assert!((r1[i] - r0[i] - k[i][j]).abs() < 1e-9 * (1.0 + k[i][j].abs()));
            }
        }
    }

    /// The average-acceleration rule integrates quadratic motion exactly.
    #[test]
    fn newmark_exact_for_quadratic_motion(
        u0 in -1.0f64..1.0,
        v0 in -10.0f64..10.0,
        a in -100.0f64..100.0,
        dt in 1e-4f64..1e-1,
    ) {
        let params = NewmarkParams::trapezoidal(dt).unwrap();
        let exact = |t: f64| u0 + v0 * t + 0.5 * a * t * t;
        let mut h = ScalarHistory { value: u0, rate: v0, accel: a };
        for k in 1..=20 {
            let t = k as f64 * dt;
            let acc = h.acceleration(exact(t), &params);
            prop_assert!((acc - a).abs() < 1e-6 * (1.0 + a.abs()));
            h.commit(exact(t), &params);
            prop_assert!((h.rate - (v0 + a * t)).abs() < 1e-6 * (1.0 + v0.abs() + a.abs()));
        }
    }
}

#[test]
fn newmark_rejects_bad_parameters() {
    assert!(NewmarkParams::new(0.0, 0.5, 1e-3).is_err());
    assert!(NewmarkParams::new(0.25, 0.4, 1e-3).is_err());
    assert!(NewmarkParams::new(0.25, 0.5, 0.0).is_err());
    assert_eq!(NewmarkParams::trapezoidal(0.5).unwrap().mass_factor(), 16.0);
}

#[test]
fn impact_pulse_shape() {
    let (u_max, t_end) = (100.0, 0.01);
    assert_eq!(impact_displacement(0.0, u_max, t_end), 0.0);
    assert_relative_eq!(impact_displacement(0.005, u_max, t_end), u_max, max_relative = 1e-14);
    assert_eq!(impact_displacement(t_end, u_max, t_end), 0.0);
    assert_eq!(impact_displacement(2.0 * t_end, u_max, t_end), 0.0);
    // 256 s⁴(s-1)⁴ is symmetric about the midpoint.
    let a = impact_displacement(0.002, u_max, t_end);
    let b = impact_displacement(0.008, u_max, t_end);
    assert_relative_eq!(a, b, max_relative = 1e-12);
}
