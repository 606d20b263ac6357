//! Whole-bar behaviour: energy, scale effects, reproducibility.

use fe2_core::config::ScenarioConfig;
use fe2_core::dns::{dns_commit, dns_step, DnsState};
use fe2_core::scenario::fe2_command;
use fe2_core::verification::{homogeneous_deviation, EquivalenceSetup};

fn tiny(law: &str, n_steps: usize, dt: f64) -> ScenarioConfig {
    ScenarioConfig::from_toml(&format!(
        r#"
[geometry]
L = 100.0
l_M = 2.0
l_E = 0.5
l_macro_E = 10.0

[phases]
E1 = 2e3
E2 = 2e5
rho1 = 1e3
rho2 = 1e5
law = "{law}"

[load]
u_max = 0.05
T = 2e-4

[time]
dt = {dt:e}
n_steps = {n_steps}

[outputs]
snapshot_times = [1e-4]
"#
    ))
    .unwrap()
}

#[test]
fn linear_dns_conserves_energy_once_the_pulse_ends() {
    let cfg = tiny("linear_elastic", 200, 2e-6);
    let model = cfg.dns_model().unwrap();
    let mut state = DnsState::at_rest(&model);
    let pulse_steps = (cfg.load.duration / cfg.time.dt).round() as usize;
    let mut after = Vec::new();
    for k in 1..=cfg.time.n_steps {
        dns_step(&model, &mut state).unwrap();
        dns_commit(&model, &mut state);
        if k > pulse_steps {
            after.push(state.energy(&model).unwrap());
        }
    }
    let e0 = after[0];
    assert!(e0 > 0.0);
    for e in &after {
        assert!(((e - e0) / e0).abs() < 1e-9, "energy drifted from {e0:e} to {e:e}");
    }
}

#[test]
fn homogeneous_deviation_shrinks_with_the_square_of_the_cell() {
    let at = |l_m: f64| {
        homogeneous_deviation(&EquivalenceSetup {
            l_m,
            ..EquivalenceSetup::default()
        })
        .unwrap()
    };
    let (coarse, fine) = (at(1.0), at(0.5));
    let ratio = coarse / fine;
    assert!(
        (3.5..4.5).contains(&ratio),
        "deviation {coarse:e} at l = 1, {fine:e} at l = 0.5 (ratio {ratio})"
    );
}

#[test]
fn fe2_runs_are_reproducible() {
    let cfg = tiny("neo_hookean", 12, 2e-5);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = fe2_command(&cfg, a.path()).unwrap();
    let sb = fe2_command(&cfg, b.path()).unwrap();
    assert!(sa.failure.is_none());
    assert_eq!(sa, sb);
    for name in [
        "fe2_field.csv",
        "fe2_history.csv",
        "fe2_convergence.csv",
        "fe2_constraints.csv",
        "manifest.toml",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name} is empty");
        assert_eq!(x, y, "{name} differs between identical runs");
    }
}
