//! Orchestration of complete runs and their on-disk artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::audit::{audit_tangents, TangentAudit};
use crate::config::ScenarioConfig;
use crate::dns::{dns_window_average, run_dns, DnsOutcome};
use crate::error::{Fe2Error, Result};
use crate::fe::UnitCell;
use crate::homogenize::homogenize;
use crate::macroscale::{commit, run_fe2, step, MacroModel, MacroState, RunFailure, RunOutcome};
use crate::metrics::{
    epsilon_series, epsilon_time, resample, robustness_tally, ConstraintModeKey, FieldSeries,
    RobustnessTable, RunRecord, SweepKey,
};
use crate::output::{
    fmt17, write_constraint_csv, write_convergence_csv, write_epsilon_csv, write_field_csv,
    write_history_csv, write_manifest, write_table, write_tangent_audit_csv, write_text,
    write_timing_csv, AuditRow,
};
use crate::rve::{rve_fields, write_rve_fields, ConstraintMode};

/// Step indices (1-based) closest to the requested times; the last step when
/// none are requested.
pub fn snapshot_steps(times: &[f64], dt: f64, n_steps: usize) -> Vec<usize> {
    if times.is_empty() {
        return vec![n_steps];
    }
    let mut steps: Vec<usize> = times
        .iter()
        .map(|t| ((t / dt).round() as usize).clamp(1, n_steps))
        .collect();
    steps.dedup();
    steps
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Fe2Error::io(out, e))
}

/// A finished (or crashed) FE² run held in memory.
#[derive(Clone, Debug)]
pub struct Fe2Run {
    pub outcome: RunOutcome,
    /// Macro nodal displacements after every committed step.
    pub history: FieldSeries,
    pub state: MacroState,
}

/// Runs FE² for the configured number of steps. When `dump_dir` is given and
/// the config requests RVE dumps, the chosen RVE is written at those steps.
pub fn simulate_fe2(cfg: &ScenarioConfig, model: &MacroModel, dump_dir: Option<&Path>) -> Result<Fe2Run> {
    let mut history = FieldSeries::new(model.mesh.node_coords.clone(), "fe2");
    let dump_steps = snapshot_steps(&cfg.outputs.rve_dump_times, cfg.time.dt, cfg.time.n_steps);
    let dump_gp = cfg.outputs.rve_dump_x.map(|x| nearest_gp(model, x));
    let pattern = cfg
        .outputs
        .rve_dump_pattern
        .clone()
        .unwrap_or_else(|| "rve_gp{gp}_step{step}.csv".into());
    let mut io_error = None;
    let (state, outcome) = run_fe2(model, cfg.time.n_steps, |state, report| {
        if let Err(e) = history.push(report.time, state.d.clone()) {
            io_error.get_or_insert(e);
        }
        if let (Some(dir), Some(g)) = (dump_dir, dump_gp) {
            if !cfg.outputs.rve_dump_times.is_empty() && dump_steps.contains(&report.step) {
                let gp = &state.gps[g];
                let rows = rve_fields(&model.rve, &gp.rve, &gp.load, state.displacement_at(model, gp));
                let name = pattern
                    .replace("{gp}", &g.to_string())
                    .replace("{step}", &report.step.to_string());
                if let Err(e) = write_rve_fields(&dir.join(name), &rows) {
                    io_error.get_or_insert(e);
                }
            }
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    Ok(Fe2Run {
        outcome,
        history,
        state,
    })
}

fn nearest_gp(model: &MacroModel, x: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for e in 0..model.mesh.n_elements() {
        let basis = model.mesh.basis(e);
        for q in 0..2 {
            let d = (basis.x[q] - x).abs();
            if d < dist {
                dist = d;
                best = 2 * e + q;
            }
        }
    }
    best
}

/// A single-scale run sampled on a coarser grid.
#[derive(Clone, Debug)]
pub struct DnsRun {
    pub outcome: DnsOutcome,
    /// Displacements interpolated onto `targets` after every step.
    pub history: FieldSeries,
    /// Full-resolution fields at the snapshot steps.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// Window averages and window fields at the RVE dump steps.
    pub windows: Vec<DnsWindow>,
    pub node_x: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DnsWindow {
    pub step: usize,
    pub time: f64,
    pub mean: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn simulate_dns(cfg: &ScenarioConfig, targets: &[f64]) -> Result<DnsRun> {
    let model = cfg.dns_model()?;
    let node_x = model.mesh.node_coords.clone();
    let snap_steps = snapshot_steps(&cfg.outputs.snapshot_times, cfg.time.dt, cfg.time.n_steps);
    let dump_steps = snapshot_steps(&cfg.outputs.rve_dump_times, cfg.time.dt, cfg.time.n_steps);
    let window = cfg.outputs.rve_dump_x.map(|x| (x, cfg.rve_length()));
    let mut history = FieldSeries::new(targets.to_vec(), "dns");
    let mut snapshots = Vec::new();
    let mut windows = Vec::new();
    let mut err = None;
    let outcome = run_dns(&model, cfg.time.n_steps, |step, t, u| {
        match resample(&node_x, u, targets).and_then(|v| history.push(t, v)) {
            Ok(()) => {}
            Err(e) => {
                err.get_or_insert(e);
            }
        }
        if snap_steps.contains(&step) {
            snapshots.push((t, u.to_vec()));
        }
        if let Some((center, width)) = window {
            if !cfg.outputs.rve_dump_times.is_empty() && dump_steps.contains(&step) {
                let (lo, hi) = (center - 0.5 * width, center + 0.5 * width);
                let (x, v): (Vec<f64>, Vec<f64>) = node_x
                    .iter()
                    .zip(u)
                    .filter(|(x, _)| **x >= lo - 1e-9 && **x <= hi + 1e-9)
                    .map(|(x, v)| (*x, *v))
                    .unzip();
                match dns_window_average(&node_x, u, center, width) {
                    Ok(mean) => windows.push(DnsWindow {
                        step,
                        time: t,
                        mean,
                        x,
                        u: v,
                    }),
                    Err(e) => {
                        err.get_or_insert(e);
                    }
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(DnsRun {
        outcome,
        history,
        snapshots,
        windows,
        node_x,
    })
}

fn snapshots_from(history: &FieldSeries, steps: &[usize]) -> Vec<(f64, Vec<f64>)> {
    steps
        .iter()
        .filter_map(|&s| Some((*history.times.get(s - 1)?, history.values.get(s - 1)?.clone())))
        .collect()
}

fn failure_line(f: &Option<RunFailure>) -> String {
    match f {
        Some(f) => format!("failed at step {}: {}", f.step, f.message),
        None => "completed".into(),
    }
}

/// Result of one CLI command.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandSummary {
    pub text: String,
    pub failure: Option<RunFailure>,
}

fn write_fe2_artifacts(cfg: &ScenarioConfig, out: &Path, model: &MacroModel, run: &Fe2Run) -> Result<()> {
    let steps = snapshot_steps(&cfg.outputs.snapshot_times, cfg.time.dt, cfg.time.n_steps);
    write_field_csv(&out.join("fe2_field.csv"), &model.mesh.node_coords, &snapshots_from(&run.history, &steps))?;
    write_history_csv(&out.join("fe2_history.csv"), &run.history)?;
    write_convergence_csv(
        &out.join("fe2_convergence.csv"),
        run.outcome.reports.iter().map(|r| (r.step, r.time, r.deltas.as_slice())),
    )?;
    write_timing_csv(&out.join("fe2_timing.csv"), &run.outcome.reports)?;
    write_constraint_csv(&out.join("fe2_constraints.csv"), &run.outcome.reports)?;
    Ok(())
}

pub fn fe2_command(cfg: &ScenarioConfig, out: &Path) -> Result<CommandSummary> {
    ensure_dir(out)?;
    write_manifest(&out.join("manifest.toml"), "fe2", cfg)?;
    let model = cfg.macro_model()?;
    let run = simulate_fe2(cfg, &model, Some(out))?;
    write_fe2_artifacts(cfg, out, &model, &run)?;
    let iters: usize = run.outcome.reports.iter().map(|r| r.iterations()).sum();
    let max_fluct = run
        .outcome
        .reports
        .iter()
        .map(|r| r.max_mean_fluctuation)
        .fold(0.0, f64::max);
    let text = format!(
        "# FE² run\n\n- macro elements: {}\n- RVE: type {} x {} ({}, {})\n- steps: {} of {} ({})\n- Newton iterations: {iters}\n- max |<u~>|/V: {:e}\n",
        model.mesh.n_elements(),
        cfg.rve.unit_cell,
        cfg.rve.n_cells,
        cfg.rve.constraint,
        cfg.rve.f_link,
        run.outcome.completed_steps,
        cfg.time.n_steps,
        failure_line(&run.outcome.failure),
        max_fluct,
    );
    write_text(&out.join("summary.md"), &text)?;
    Ok(CommandSummary {
        text,
        failure: run.outcome.failure,
    })
}

fn write_dns_artifacts(cfg: &ScenarioConfig, out: &Path, run: &DnsRun) -> Result<()> {
    write_field_csv(&out.join("dns_field.csv"), &run.node_x, &run.snapshots)?;
    write_history_csv(&out.join("dns_history_macro_nodes.csv"), &run.history)?;
    write_convergence_csv(
        &out.join("dns_convergence.csv"),
        run.outcome
            .deltas
            .iter()
            .enumerate()
            .map(|(k, d)| (k + 1, (k + 1) as f64 * cfg.time.dt, d.as_slice())),
    )?;
    for w in &run.windows {
        let rows = w.x.iter().zip(&w.u).map(|(x, u)| {
            let normalized = if w.mean.abs() < 1e-9 * cfg.load.u_max.abs() {
                String::new()
            } else {
                fmt17(u / w.mean)
            };
            vec![fmt17(*x), fmt17(*u), fmt17(w.mean), normalized]
        });
        write_table(
            &out.join(format!("dns_window_step{}.csv", w.step)),
            &["node_X".into(), "u".into(), "u_window_mean".into(), "u_over_mean".into()],
            rows,
        )?;
    }
    Ok(())
}

pub fn dns_command(cfg: &ScenarioConfig, out: &Path) -> Result<CommandSummary> {
    ensure_dir(out)?;
    write_manifest(&out.join("manifest.toml"), "dns", cfg)?;
    let targets = cfg.macro_mesh()?.node_coords;
    let run = simulate_dns(cfg, &targets)?;
    write_dns_artifacts(cfg, out, &run)?;
    let text = format!(
        "# DNS run\n\n- elements: {}\n- steps: {} of {} ({})\n",
        run.node_x.len() - 1,
        run.outcome.completed_steps,
        cfg.time.n_steps,
        failure_line(&run.outcome.failure),
    );
    write_text(&out.join("summary.md"), &text)?;
    Ok(CommandSummary {
        text,
        failure: run.outcome.failure,
    })
}

pub fn compare_command(cfg: &ScenarioConfig, out: &Path) -> Result<CommandSummary> {
    ensure_dir(out)?;
    write_manifest(&out.join("manifest.toml"), "compare", cfg)?;
    let model = cfg.macro_model()?;
    let fe2 = simulate_fe2(cfg, &model, Some(out))?;
    write_fe2_artifacts(cfg, out, &model, &fe2)?;
    let dns = simulate_dns(cfg, &model.mesh.node_coords)?;
    write_dns_artifacts(cfg, out, &dns)?;
    let series = epsilon_series(&fe2.history, &dns.history)?;
    write_epsilon_csv(&out.join("epsilon.csv"), &series)?;
    let eps_time = epsilon_time(&fe2.history, &dns.history)?;
    let text = format!(
        "# FE² vs DNS\n\n- FE²: {} steps ({})\n- DNS: {} steps ({})\n- eps_time: {}\n- eps_time / u_max: {}\n",
        fe2.outcome.completed_steps,
        failure_line(&fe2.outcome.failure),
        dns.outcome.completed_steps,
        failure_line(&dns.outcome.failure),
        fmt17(eps_time),
        fmt17(eps_time / cfg.load.u_max),
    );
    write_text(&out.join("summary.md"), &text)?;
    Ok(CommandSummary {
        text,
        failure: fe2.outcome.failure.or(dns.outcome.failure),
    })
}

/// Runs to the audit step and compares the moduli of every `stride`-th Gauss
/// point against finite differences before that step is committed.
pub fn audit_run(cfg: &ScenarioConfig, model: &MacroModel) -> Result<Vec<AuditRow>> {
    let target = cfg.solver.audit_step.unwrap_or(cfg.time.n_steps.div_ceil(2));
    let mut state = MacroState::at_rest(model);
    for _ in 1..target {
        step(model, &mut state)?;
        commit(model, &mut state);
    }
    let report = step(model, &mut state)?;
    let c = model.params.mass_factor();
    state
        .gps
        .par_iter()
        .enumerate()
        .filter(|(i, _)| i % cfg.solver.audit_stride == 0)
        .map(|(i, gp)| {
            let analytic = homogenize(&model.rve, &gp.rve, &gp.load, &model.params)?;
            let audit: TangentAudit = audit_tangents(&model.rve, &gp.rve, &gp.load, c, &analytic)?;
            Ok(AuditRow {
                time: report.time,
                gp_id: i,
                audit,
            })
        })
        .collect()
}

pub fn check_tangents_command(cfg: &ScenarioConfig, out: &Path) -> Result<CommandSummary> {
    ensure_dir(out)?;
    write_manifest(&out.join("manifest.toml"), "check-tangents", cfg)?;
    let model = cfg.macro_model()?;
    let rows = audit_run(cfg, &model)?;
    write_tangent_audit_csv(&out.join("tangent_audit.csv"), &rows)?;
    let worst = |f: fn(&TangentAudit) -> f64| rows.iter().map(|r| f(&r.audit)).fold(0.0, f64::max);
    let text = format!(
        "# Tangent audit\n\n- Gauss points audited: {}\n- max rel. error A_PF: {:e}\n- max rel. error A_Pu: {:e}\n- max rel. error A_fF: {:e}\n- max rel. error A_fu: {:e}\n",
        rows.len(),
        worst(|a| a.a_pf.rel_err),
        worst(|a| a.a_pu.rel_err),
        worst(|a| a.a_ff.rel_err),
        worst(|a| a.a_fu.rel_err),
    );
    write_text(&out.join("summary.md"), &text)?;
    Ok(CommandSummary { text, failure: None })
}

/// Outcome of an RVE sweep.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub runs: BTreeMap<SweepKey, Fe2Run>,
    /// `ε_time` between unit cells A and B per (constraint, n_cells).
    pub eps_ab: BTreeMap<(ConstraintModeKey, usize), f64>,
    /// `ε_time` against the single-scale reference per configuration.
    pub eps_dns: BTreeMap<SweepKey, f64>,
    pub robustness: RobustnessTable,
}

pub fn sweep(cfg: &ScenarioConfig) -> Result<SweepResult> {
    let mut keys = Vec::new();
    for &cell in &cfg.sweep.unit_cells {
        for &constraint in &cfg.sweep.constraints {
            for &n in &cfg.sweep.n_cells {
                keys.push((cell, constraint, n));
            }
        }
    }
    let runs: Vec<(SweepKey, Fe2Run)> = keys
        .par_iter()
        .map(|&(cell, constraint, n)| {
            let model = cfg.macro_model_with(cfg.rve_model_with(cell, n, constraint)?)?;
            let run = simulate_fe2(cfg, &model, None)?;
            log::info!(
                "sweep {cell} x{n} {constraint}: {} steps",
                run.outcome.completed_steps
            );
            Ok((
                SweepKey {
                    unit_cell: cell,
                    constraint: constraint.into(),
                    n_cells: n,
                },
                run,
            ))
        })
        .collect::<Result<_>>()?;
    let runs: BTreeMap<SweepKey, Fe2Run> = runs.into_iter().collect();

    let mut eps_ab = BTreeMap::new();
    for (key, run) in &runs {
        if key.unit_cell != UnitCell::A {
            continue;
        }
        let other = SweepKey {
            unit_cell: UnitCell::B,
            ..*key
        };
        if let Some(b) = runs.get(&other) {
            if let Ok(e) = epsilon_time(&run.history, &b.history) {
                eps_ab.insert((key.constraint, key.n_cells), e);
            }
        }
    }

    let mut eps_dns = BTreeMap::new();
    if cfg.sweep.against_dns {
        let dns = simulate_dns(cfg, &cfg.macro_mesh()?.node_coords)?;
        for (key, run) in &runs {
            if let Ok(e) = epsilon_time(&run.history, &dns.history) {
                eps_dns.insert(*key, e);
            }
        }
    }

    let records: Vec<RunRecord> = runs
        .iter()
        .map(|(key, run)| RunRecord {
            key: *key,
            completed_steps: run.outcome.completed_steps,
            failed_at: run.outcome.failure.as_ref().map(|f| f.step),
        })
        .collect();
    Ok(SweepResult {
        runs,
        eps_ab,
        eps_dns,
        robustness: robustness_tally(&records),
    })
}

pub fn sweep_rve_command(cfg: &ScenarioConfig, out: &Path) -> Result<CommandSummary> {
    ensure_dir(out)?;
    write_manifest(&out.join("manifest.toml"), "sweep-rve", cfg)?;
    let result = sweep(cfg)?;
    write_table(
        &out.join("sweep_eps_ab.csv"),
        &["constraint".into(), "n_cells".into(), "eps_time".into()],
        result
            .eps_ab
            .iter()
            .map(|((c, n), e)| vec![c.to_string(), n.to_string(), fmt17(*e)]),
    )?;
    write_table(
        &out.join("sweep_runs.csv"),
        &[
            "unit_cell".into(),
            "constraint".into(),
            "n_cells".into(),
            "completed_steps".into(),
            "failed_at".into(),
            "eps_time_vs_dns".into(),
        ],
        result.runs.iter().map(|(k, run)| {
            vec![
                k.unit_cell.to_string(),
                k.constraint.to_string(),
                k.n_cells.to_string(),
                run.outcome.completed_steps.to_string(),
                run.outcome
                    .failure
                    .as_ref()
                    .map_or(String::new(), |f| f.step.to_string()),
                result.eps_dns.get(k).map_or(String::new(), |e| fmt17(*e)),
            ]
        }),
    )?;
    for (k, run) in &result.runs {
        let dir: PathBuf = out.join(format!("{}_{}_{}", k.unit_cell, k.constraint, k.n_cells));
        ensure_dir(&dir)?;
        write_history_csv(&dir.join("fe2_history.csv"), &run.history)?;
        write_convergence_csv(
            &dir.join("fe2_convergence.csv"),
            run.outcome.reports.iter().map(|r| (r.step, r.time, r.deltas.as_slice())),
        )?;
    }
    let mut text = String::from("# RVE sweep\n\n## eps_time between unit cells A and B\n\n| constraint | n_cells | eps_time |\n|---|---|---|\n");
    for ((c, n), e) in &result.eps_ab {
        text.push_str(&format!("| {c} | {n} | {e:.6e} |\n"));
    }
    if !result.eps_dns.is_empty() {
        text.push_str("\n## eps_time against the single-scale reference\n\n| unit cell | constraint | n_cells | eps_time |\n|---|---|---|---|\n");
        for (k, e) in &result.eps_dns {
            text.push_str(&format!("| {} | {} | {} | {e:.6e} |\n", k.unit_cell, k.constraint, k.n_cells));
        }
    }
    text.push_str("\n## Completed time steps\n\n");
    text.push_str(&result.robustness.to_markdown());
    write_text(&out.join("summary.md"), &text)?;
    write_text(&out.join("robustness.md"), &result.robustness.to_markdown())?;
    if result.runs.values().any(|r| r.outcome.failure.is_some()) {
        log::warn!("some sweep runs stopped early; see robustness.md");
    }
    // Crashed sweep members are data, not a failure of the command.
    Ok(CommandSummary { text, failure: None })
}

/// Convenience for tests: the constraint enum of a sweep key.
pub fn constraint_of(key: ConstraintModeKey) -> ConstraintMode {
    match key {
        ConstraintModeKey::Volume => ConstraintMode::VolumeConstraint,
        ConstraintModeKey::FixedCorners => ConstraintMode::FixedCorners,
    }
}
