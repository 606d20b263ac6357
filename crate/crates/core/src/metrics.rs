//! Error measures between displacement histories, convergence-order
//! estimates and the crash tally of RVE sweeps.

use std::collections::BTreeMap;

use crate::error::{Fe2Error, Result};
use crate::fe::UnitCell;
use crate::rve::ConstraintMode;

/// Nodal displacement history: `values[j][i]` is node `i` at `times[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSeries {
    pub times: Vec<f64>,
    pub node_x: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub source: String,
}

impl FieldSeries {
    pub fn new(node_x: Vec<f64>, source: impl Into<String>) -> Self {
        FieldSeries {
            times: Vec::new(),
            node_x,
            values: Vec::new(),
            source: source.into(),
        }
    }

    pub fn push(&mut self, time: f64, values: Vec<f64>) -> Result<()> {
        if values.len() != self.node_x.len() {
            return Err(Fe2Error::InvalidComparison(format!(
                "row of {} values for {} nodes",
                values.len(),
                self.node_x.len()
            )));
        }
        if self.times.last().is_some_and(|&t| t >= time) {
            return Err(Fe2Error::InvalidComparison("times must increase".into()));
        }
        self.times.push(time);
        self.values.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Piecewise-linear interpolation of a nodal field at `targets`.
///
/// Targets must lie inside the source nodes (up to a relative slack of 1e-9).
pub fn resample(node_x: &[f64], values: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    let (first, last) = match (node_x.first(), node_x.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Fe2Error::InvalidComparison("empty source grid".into())),
    };
    let slack = 1e-9 * (last - first).abs().max(1.0);
    let mut out = Vec::with_capacity(targets.len());
    let mut i = 0;
    for &x in targets {
        if x < first - slack || x > last + slack {
            return Err(Fe2Error::InvalidComparison(format!(
                "node {x} outside the support [{first}, {last}]"
            )));
        }
        if node_x.len() == 1 {
            out.push(values[0]);
            continue;
        }
        // Targets are usually sorted; restart the scan otherwise.
        if x < node_x[i] {
            i = 0;
        }
        while i + 2 < node_x.len() && node_x[i + 1] < x {
            i += 1;
        }
        let (x0, x1) = (node_x[i], node_x[i + 1]);
        let s = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        out.push(values[i] + s * (values[i + 1] - values[i]));
    }
    Ok(out)
}

/// Mean absolute nodal difference of two fields on `a`'s grid.
pub fn epsilon_fields(a_x: &[f64], a: &[f64], b_x: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Fe2Error::InvalidComparison("empty field".into()));
    }
    let same_grid = a_x.len() == b_x.len() && a_x.iter().zip(b_x).all(|(p, q)| p == q);
    let b_on_a;
    let b = if same_grid {
        b
    } else {
        b_on_a = resample(b_x, b, a_x)?;
        &b_on_a
    };
    Ok(a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64)
}

/// `ε` at time index `j` of `a` against the sample of `b` at the same time.
pub fn epsilon(a: &FieldSeries, b: &FieldSeries, t_index: usize) -> Result<f64> {
    let t = *a
        .times
        .get(t_index)
        .ok_or_else(|| Fe2Error::InvalidComparison(format!("no time index {t_index}")))?;
    let k = find_time(&b.times, t)
        .ok_or_else(|| Fe2Error::InvalidComparison(format!("time {t} missing in {}", b.source)))?;
    epsilon_fields(&a.node_x, &a.values[t_index], &b.node_x, &b.values[k])
}

fn same_time(p: f64, q: f64) -> bool {
    (p - q).abs() <= 1e-9 * p.abs().max(q.abs()).max(1e-300)
}

fn find_time(times: &[f64], t: f64) -> Option<usize> {
    let k = times.partition_point(|&s| s < t && !same_time(s, t));
    (k < times.len() && same_time(times[k], t)).then_some(k)
}

/// `(time, ε)` at every time present in both series.
pub fn epsilon_series(a: &FieldSeries, b: &FieldSeries) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (j, &t) in a.times.iter().enumerate() {
        if let Some(k) = find_time(&b.times, t) {
            out.push((t, epsilon_fields(&a.node_x, &a.values[j], &b.node_x, &b.values[k])?));
        }
    }
    Ok(out)
}

/// Time average of `ε` over the shared time grid.
pub fn epsilon_time(a: &FieldSeries, b: &FieldSeries) -> Result<f64> {
    let series = epsilon_series(a, b)?;
    if series.is_empty() {
        return Err(Fe2Error::InvalidComparison(format!(
            "{} and {} share no time instants",
            a.source, b.source
        )));
    }
    Ok(series.iter().map(|(_, e)| e).sum::<f64>() / series.len() as f64)
}

/// Order `p` fitted to the final three iterates above `floor`:
/// `p = log(r₃/r₂) / log(r₂/r₁)`. Entries at or below `floor` are round-off
/// and carry no information about the contraction rate. `None` when fewer
/// than three usable, strictly decreasing entries remain.
pub fn convergence_order(residuals: &[f64], floor: f64) -> Option<f64> {
    let usable: Vec<f64> = residuals
        .iter()
        .copied()
        .filter(|r| r.is_finite() && *r > floor && *r > 0.0)
        .collect();
    if usable.len() < 3 {
        return None;
    }
    let [r1, r2, r3] = [usable[usable.len() - 3], usable[usable.len() - 2], usable[usable.len() - 1]];
    if !(r2 < r1 && r3 < r2) {
        return None;
    }
    Some((r3 / r2).ln() / (r2 / r1).ln())
}

/// Key of one sweep configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SweepKey {
    pub unit_cell: UnitCell,
    pub constraint: ConstraintModeKey,
    pub n_cells: usize,
}

/// Orderable wrapper of [`ConstraintMode`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintModeKey {
    Volume,
    FixedCorners,
}

impl From<ConstraintMode> for ConstraintModeKey {
    fn from(m: ConstraintMode) -> Self {
        match m {
            ConstraintMode::VolumeConstraint => ConstraintModeKey::Volume,
            ConstraintMode::FixedCorners => ConstraintModeKey::FixedCorners,
        }
    }
}

impl std::fmt::Display for ConstraintModeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintModeKey::Volume => "volume",
            ConstraintModeKey::FixedCorners => "fixed_corners",
        })
    }
}

/// Completed steps of one run; `failed_at` is the step that crashed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunRecord {
    pub key: SweepKey,
    pub completed_steps: usize,
    pub failed_at: Option<usize>,
}

/// Completed-step counts per (unit cell, constraint) row and cell count column.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RobustnessTable {
    pub n_cells: Vec<usize>,
    pub rows: BTreeMap<(UnitCell, ConstraintModeKey), BTreeMap<usize, usize>>,
}

impl RobustnessTable {
    pub fn get(&self, cell: UnitCell, constraint: ConstraintModeKey, n_cells: usize) -> Option<usize> {
        self.rows.get(&(cell, constraint))?.get(&n_cells).copied()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| unit cell | link |");
        for n in &self.n_cells {
            s.push_str(&format!(" {n} |"));
        }
        s.push_str("\n|---|---|");
        for _ in &self.n_cells {
            s.push_str("---|");
        }
        s.push('\n');
        for ((cell, c), cols) in &self.rows {
            s.push_str(&format!("| {cell} | {c} |"));
            for n in &self.n_cells {
                match cols.get(n) {
                    Some(v) => s.push_str(&format!(" {v} |")),
                    None => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Number of completed steps of every run, keyed like the sweep.
pub fn robustness_tally(runs: &[RunRecord]) -> RobustnessTable {
    let mut table = RobustnessTable::default();
    for r in runs {
        if !table.n_cells.contains(&r.key.n_cells) {
            table.n_cells.push(r.key.n_cells);
        }
        table
            .rows
            .entry((r.key.unit_cell, r.key.constraint))
            .or_default()
            .insert(r.key.n_cells, r.completed_steps);
    }
    table.n_cells.sort_unstable();
    table
}

/// `u / ū` with instants where `|ū| < 1e-9 u_max` masked as `None`.
pub fn normalized_field(u: &[f64], u_bar: f64, u_max: f64) -> Vec<Option<f64>> {
    if u_bar.abs() < 1e-9 * u_max.abs() {
        return vec![None; u.len()];
    }
    u.iter().map(|v| Some(v / u_bar)).collect()
}

/// Mean absolute difference of two normalized micro fields over the
/// unmasked entries.
pub fn normalized_deviation(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter_map(|(p, q)| Some((p.as_ref()? - q.as_ref()?).abs()))
        .collect();
    (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(x: Vec<f64>, rows: Vec<(f64, Vec<f64>)>) -> FieldSeries {
        let mut s = FieldSeries::new(x, "test");
        for (t, v) in rows {
            s.push(t, v).unwrap();
        }
        s
    }

    #[test]
    fn epsilon_examples() {
        let x = vec![0.0, 1.0, 2.0];
        let a = series(x.clone(), vec![(1.0, vec![0.0, 1.0, 2.0])]);
        let b = series(x.clone(), vec![(1.0, vec![0.0, 0.0, 0.0])]);
        assert_relative_eq!(epsilon(&a, &b, 0).unwrap(), 1.0);
        assert_eq!(epsilon(&a, &a, 0).unwrap(), 0.0);
        let c = series(x.clone(), vec![(1.0, vec![-0.5, 0.5, 1.5])]);
        assert_relative_eq!(epsilon(&a, &c, 0).unwrap(), 0.5);
    }

    #[test]
    fn epsilon_time_mean() {
        let x = vec![0.0, 1.0];
        let a = series(x.clone(), vec![(1.0, vec![1.0, 1.0]), (2.0, vec![3.0, 3.0])]);
        let b = series(x, vec![(1.0, vec![0.0, 0.0]), (2.0, vec![0.0, 0.0])]);
        assert_relative_eq!(epsilon_time(&a, &b).unwrap(), 2.0);
        assert_eq!(epsilon_time(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_supports_are_rejected() {
        let a = series(vec![0.0, 1.0], vec![(1.0, vec![0.0, 0.0])]);
        let b = series(vec![5.0, 6.0], vec![(1.0, vec![0.0, 0.0])]);
        assert!(matches!(epsilon(&a, &b, 0), Err(Fe2Error::InvalidComparison(_))));
    }

    #[test]
    fn order_estimates() {
        assert_relative_eq!(convergence_order(&[1e-2, 1e-4, 1e-8], 0.0).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(convergence_order(&[1e-1, 1e-2, 1e-3], 0.0).unwrap(), 1.0, max_relative = 1e-12);
        assert!(convergence_order(&[1e-3, 1e-9], 0.0).is_none());
        assert_relative_eq!(convergence_order(&[1.0, 1e-2, 1e-6, 1e-15], 1e-12).unwrap(), 2.0, max_relative = 1e-12);
        assert!(convergence_order(&[1e-3, 1e-3, 1e-3], 0.0).is_none());
    }

    #[test]
    fn tally_bookkeeping() {
        let k = |cell, c, n| SweepKey {
            unit_cell: cell,
            constraint: c,
            n_cells: n,
        };
        let runs = [
            RunRecord {
                key: k(UnitCell::B, ConstraintModeKey::FixedCorners, 5),
                completed_steps: 191,
                failed_at: Some(192),
            },
            RunRecord {
                key: k(UnitCell::A, ConstraintModeKey::Volume, 1),
                completed_steps: 1000,
                failed_at: None,
            },
        ];
        let t = robustness_tally(&runs);
        assert_eq!(t.get(UnitCell::B, ConstraintModeKey::FixedCorners, 5), Some(191));
        assert_eq!(t.get(UnitCell::A, ConstraintModeKey::Volume, 1), Some(1000));
        assert_eq!(t.n_cells, vec![1, 5]);
        assert!(t.to_markdown().contains("| B | fixed_corners | - | 191 |"));
    }

    #[test]
    fn normalization_masks_small_reference() {
        assert_eq!(normalized_field(&[1.0], 1e-12, 100.0), vec![None]);
        assert_eq!(normalized_field(&[1.0, 2.0], 2.0, 100.0), vec![Some(0.5), Some(1.0)]);
        assert_eq!(normalized_deviation(&[Some(1.0), None], &[Some(0.5), Some(3.0)]), Some(0.5));
    }

    proptest! {
        #[test]
        fn resampling_is_exact_for_linear_fields(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            n in 2usize..20,
            targets in proptest::collection::vec(0.0f64..1.0, 1..30),
        ) {
            let x: Vec<f64> = (0..n).map(|i| (i as f64 / (n - 1) as f64).powf(1.3)).collect();
            let u: Vec<f64> = x.iter().map(|v| a + b * v).collect();
            let r = resample(&x, &u, &targets).unwrap();
            for (t, v) in targets.iter().zip(r) {
                prop_assert!((v - (a + b * t)).abs() < 1e-12);
            }
        }

        #[test]
        fn epsilon_is_a_seminorm(
            u in proptest::collection::vec(-1.0f64..1.0, 5),
            v in proptest::collection::vec(-1.0f64..1.0, 5),
            w in proptest::collection::vec(-1.0f64..1.0, 5),
        ) {
            let x: Vec<f64> = (0..5).map(|i| i as f64).collect();
            let e = |p: &[f64], q: &[f64]| epsilon_fields(&x, p, &x, q).unwrap();
            prop_assert_eq!(e(&u, &v), e(&v, &u));
            prop_assert!(e(&u, &w) <= e(&u, &v) + e(&v, &w) + 1e-15);
            prop_assert_eq!(e(&u, &u), 0.0);
        }
    }
}
