//! CSV and manifest writers. Every float is written with 17 significant
//! digits so that repeated runs can be compared byte for byte.

use std::path::Path;

use crate::audit::TangentAudit;
use crate::config::ScenarioConfig;
use crate::error::{Fe2Error, Result};
use crate::macroscale::StepReport;
use crate::metrics::FieldSeries;

pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header and rows of preformatted cells.
pub fn write_table<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Fe2Error::io(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// `node_X_mm` followed by one column per snapshot.
pub fn write_field_csv(path: &Path, node_x: &[f64], snapshots: &[(f64, Vec<f64>)]) -> Result<()> {
    let mut header = vec!["node_X_mm".to_string()];
    header.extend(snapshots.iter().map(|(t, _)| format!("u_mm_t{t}")));
    let rows = node_x.iter().enumerate().map(|(i, x)| {
        let mut row = vec![fmt17(*x)];
        row.extend(snapshots.iter().map(|(_, v)| fmt17(v[i])));
        row
    });
    write_table(path, &header, rows)
}

/// Full history, one row per time: `time_s` then one column per node.
pub fn write_history_csv(path: &Path, series: &FieldSeries) -> Result<()> {
    let mut header = vec!["time_s".to_string()];
    header.extend(series.node_x.iter().map(|x| format!("X{x}")));
    let rows = series.times.iter().zip(&series.values).map(|(t, v)| {
        let mut row = vec![fmt17(*t)];
        row.extend(v.iter().map(|u| fmt17(*u)));
        row
    });
    write_table(path, &header, rows)
}

/// Reads a file written by [`write_history_csv`].
pub fn read_history_csv(path: &Path, source: &str) -> Result<FieldSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Fe2Error::InvalidComparison(format!("{}: {e}", path.display())))
    };
    let node_x = header
        .iter()
        .skip(1)
        .map(|h| parse(h.trim_start_matches('X')))
        .collect::<Result<Vec<_>>>()?;
    let mut series = FieldSeries::new(node_x, source);
    for rec in r.records() {
        let rec = rec?;
        let mut it = rec.iter();
        let t = parse(it.next().unwrap_or(""))?;
        series.push(t, it.map(parse).collect::<Result<Vec<_>>>()?)?;
    }
    Ok(series)
}

/// One row per Newton iteration: `step,time_s,iter,delta_norm`.
pub fn write_convergence_csv<'a>(
    path: &Path,
    steps: impl IntoIterator<Item = (usize, f64, &'a [f64])>,
) -> Result<()> {
    let mut rows = Vec::new();
    for (step, t, deltas) in steps {
        for (k, d) in deltas.iter().enumerate() {
            rows.push(vec![step.to_string(), fmt17(t), (k + 1).to_string(), fmt17(*d)]);
        }
    }
    write_table(path, &strings(&["step", "time_s", "iter", "delta_norm"]), rows)
}

/// Wall-clock timings, kept apart from the deterministic outputs.
pub fn write_timing_csv(path: &Path, reports: &[StepReport]) -> Result<()> {
    let rows = reports.iter().map(|r| {
        vec![
            r.step.to_string(),
            fmt17(r.time),
            r.iterations().to_string(),
            r.micro_solves.to_string(),
            r.micro_iterations_max.to_string(),
            format!("{:.6}", r.wall_seconds),
        ]
    });
    write_table(
        path,
        &strings(&[
            "step",
            "time_s",
            "newton_iters",
            "micro_solves",
            "micro_iters_max",
            "wall_time_s",
        ]),
        rows,
    )
}

/// Constraint diagnostics per step.
pub fn write_constraint_csv(path: &Path, reports: &[StepReport]) -> Result<()> {
    let rows = reports.iter().map(|r| {
        vec![
            r.step.to_string(),
            fmt17(r.time),
            fmt17(r.max_mean_fluctuation),
            fmt17(r.max_f_mismatch),
        ]
    });
    write_table(
        path,
        &strings(&["step", "time_s", "max_mean_fluct_over_V", "max_F_mismatch"]),
        rows,
    )
}

pub fn write_epsilon_csv(path: &Path, series: &[(f64, f64)]) -> Result<()> {
    let rows = series.iter().map(|(t, e)| vec![fmt17(*t), fmt17(*e)]);
    write_table(path, &strings(&["time_s", "epsilon"]), rows)
}

/// One audited Gauss point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditRow {
    pub time: f64,
    pub gp_id: usize,
    pub audit: TangentAudit,
}

pub fn write_tangent_audit_csv(path: &Path, rows: &[AuditRow]) -> Result<()> {
    let mut header = strings(&["time", "gp_id", "A_PF", "A_Pu", "A_fF", "A_fu"]);
    header.extend(strings(&["fd_A_PF", "fd_A_Pu", "fd_A_fF", "fd_A_fu"]));
    header.extend(strings(&["rel_err_PF", "rel_err_Pu", "rel_err_fF", "rel_err_fu"]));
    let body = rows.iter().map(|r| {
        let m = [r.audit.a_pf, r.audit.a_pu, r.audit.a_ff, r.audit.a_fu];
        let mut row = vec![fmt17(r.time), r.gp_id.to_string()];
        row.extend(m.iter().map(|x| fmt17(x.analytic)));
        row.extend(m.iter().map(|x| fmt17(x.fd)));
        row.extend(m.iter().map(|x| fmt17(x.rel_err)));
        row
    });
    write_table(path, &header, body)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Fe2Error::io(path, e))
}

/// `manifest.toml`: command, version, tolerances and the materialized config.
pub fn write_manifest(path: &Path, command: &str, cfg: &ScenarioConfig) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("command = \"{command}\"\n"));
    text.push_str(&format!("version = \"{}\"\n", env!("CARGO_PKG_VERSION")));
    text.push_str("\n[tolerances]\n");
    text.push_str(&format!("micro = {:e}\n", cfg.solver.micro_tol));
    text.push_str(&format!("macro = {:e}\n", cfg.solver.macro_tol));
    text.push_str(&format!("micro_max_iter = {}\n", cfg.solver.micro_max_iter));
    text.push_str(&format!("macro_max_iter = {}\n", cfg.solver.macro_max_iter));
    text.push_str("\n# configuration as run\n");
    let echoed = cfg.to_toml();
    for line in echoed.lines() {
        if line.starts_with('[') && !line.starts_with("[[") {
            text.push_str(&format!("[config.{}\n", &line[1..]));
        } else {
            text.push_str(line);
            text.push('\n');
        }
    }
    write_text(path, &text)
}
