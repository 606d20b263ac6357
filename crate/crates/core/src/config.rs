//! Scenario files (TOML).
//!
//! Lengths in mm, moduli in N/mm², densities in kg/m³ (converted to t/mm³ on
//! load), times in s. Unknown keys are rejected; the time step has no default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dns::DnsModel;
use crate::error::{Fe2Error, Result};
use crate::fe::{build_bar_mesh, build_rve_mesh, Mesh1D, UnitCell};
use crate::macroscale::{ImpactLoad, MacroModel, NewtonControls};
use crate::material::{density_from_kg_per_m3, Law, MaterialPhase};
use crate::newmark::NewmarkParams;
use crate::rve::{ConstraintMode, FLinkMode, MicroControls, RveModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Bar length.
    #[serde(rename = "L")]
    pub length: f64,
    /// Layer thickness; a unit cell spans `2 l_M`.
    #[serde(rename = "l_M")]
    pub l_m: f64,
    /// Element length of the layer-resolving meshes (RVE and DNS).
    #[serde(rename = "l_E", default, skip_serializing_if = "Option::is_none")]
    pub l_e: Option<f64>,
    #[serde(rename = "l_macro_E")]
    pub l_macro_e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phases {
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
    /// kg/m³
    pub rho1: f64,
    /// kg/m³
    pub rho2: f64,
    #[serde(default)]
    pub law: Law,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub u_max: f64,
    #[serde(rename = "T")]
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub n_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RveConfig {
    pub unit_cell: UnitCell,
    pub n_cells: usize,
    pub constraint: ConstraintMode,
    pub f_link: FLinkMode,
}

impl Default for RveConfig {
    fn default() -> Self {
        RveConfig {
            unit_cell: UnitCell::A,
            n_cells: 1,
            constraint: ConstraintMode::VolumeConstraint,
            f_link: FLinkMode::PeriodicBc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewmarkConfig {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for NewmarkConfig {
    fn default() -> Self {
        NewmarkConfig {
            beta: 0.25,
            gamma: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Times (s) written as columns of the field CSVs; the final step when empty.
    pub snapshot_times: Vec<f64>,
    /// Macro coordinate of the Gauss point whose RVE fields are dumped (the
    /// nearest Gauss point is used).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rve_dump_x: Option<f64>,
    /// Times (s) of the RVE dumps.
    pub rve_dump_times: Vec<f64>,
    /// File name pattern of RVE dumps; `{gp}` and `{step}` are substituted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rve_dump_pattern: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub micro_tol: f64,
    pub micro_max_iter: usize,
    pub macro_tol: f64,
    pub macro_max_iter: usize,
    /// Step at which `check-tangents` audits the moduli; mid-run when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_step: Option<usize>,
    /// Audit every n-th Gauss point.
    pub audit_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            micro_tol: 1e-10,
            micro_max_iter: 25,
            macro_tol: 1e-8,
            macro_max_iter: 20,
            audit_step: None,
            audit_stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_cells: Vec<usize>,
    pub unit_cells: Vec<UnitCell>,
    pub constraints: Vec<ConstraintMode>,
    /// Also run the single-scale reference and report errors against it.
    pub against_dns: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_cells: vec![1, 3, 5, 7],
            unit_cells: vec![UnitCell::A, UnitCell::B],
            constraints: vec![ConstraintMode::VolumeConstraint, ConstraintMode::FixedCorners],
            against_dns: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: Geometry,
    pub phases: Phases,
    pub load: LoadConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub rve: RveConfig,
    #[serde(default)]
    pub newmark: NewmarkConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Fe2Error::io(path, e))?;
    ScenarioConfig::from_toml(&text)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Fe2Error::config(format!("{name} must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    /// Parses, materializes defaults and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Fe2Error::config(e.to_string()))?;
        if cfg.geometry.l_e.is_none() {
            cfg.geometry.l_e = Some(cfg.geometry.l_m / 20.0);
        }
        cfg.validate()?;
        for w in cfg.warnings() {
            log::warn!("{w}");
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        positive("L", g.length)?;
        positive("l_M", g.l_m)?;
        positive("l_E", self.l_e())?;
        positive("l_macro_E", g.l_macro_e)?;
        let ratio = g.length / g.l_macro_e;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Fe2Error::config(format!(
                "L = {} is not a multiple of l_macro_E = {}",
                g.length, g.l_macro_e
            )));
        }
        positive("E1", self.phases.e1)?;
        positive("E2", self.phases.e2)?;
        if !(self.phases.rho1 >= 0.0 && self.phases.rho2 >= 0.0) {
            return Err(Fe2Error::config("densities must be non-negative"));
        }
        positive("T", self.load.duration)?;
        if !self.load.u_max.is_finite() {
            return Err(Fe2Error::config("u_max must be finite"));
        }
        positive("dt", self.time.dt)?;
        if self.time.n_steps == 0 {
            return Err(Fe2Error::config("n_steps must be at least 1"));
        }
        if self.rve.n_cells == 0 {
            return Err(Fe2Error::config("rve.n_cells must be at least 1"));
        }
        if self.rve.constraint == ConstraintMode::FixedCorners
            && self.rve.f_link == FLinkMode::VolumeAverageF
        {
            return Err(Fe2Error::config(
                "fixed_corners cannot be combined with f_link = volume_avg",
            ));
        }
        self.newmark()?;
        positive("solver.micro_tol", self.solver.micro_tol)?;
        positive("solver.macro_tol", self.solver.macro_tol)?;
        if self.solver.micro_max_iter == 0 || self.solver.macro_max_iter == 0 {
            return Err(Fe2Error::config("iteration limits must be at least 1"));
        }
        if self.solver.audit_stride == 0 {
            return Err(Fe2Error::config("solver.audit_stride must be at least 1"));
        }
        if let Some(s) = self.solver.audit_step {
            if s == 0 || s > self.time.n_steps {
                return Err(Fe2Error::config(format!(
                    "solver.audit_step must lie in 1..={}",
                    self.time.n_steps
                )));
            }
        }
        for &t in self.outputs.snapshot_times.iter().chain(&self.outputs.rve_dump_times) {
            if !(t >= 0.0) {
                return Err(Fe2Error::config(format!("output time {t} must be non-negative")));
            }
        }
        if self.sweep.n_cells.contains(&0) {
            return Err(Fe2Error::config("sweep.n_cells entries must be at least 1"));
        }
        Ok(())
    }

    /// Scale-separation diagnostics.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rve_length() > self.geometry.l_macro_e {
            out.push(format!(
                "RVE length {} mm exceeds the macro element length {} mm; scale separation is violated",
                self.rve_length(),
                self.geometry.l_macro_e
            ));
        }
        out
    }

    pub fn l_e(&self) -> f64 {
        self.geometry.l_e.unwrap_or(self.geometry.l_m / 20.0)
    }

    pub fn rve_length(&self) -> f64 {
        2.0 * self.geometry.l_m * self.rve.n_cells as f64
    }

    pub fn n_macro_elements(&self) -> usize {
        (self.geometry.length / self.geometry.l_macro_e).round() as usize
    }

    pub fn phases(&self) -> Result<Vec<MaterialPhase>> {
        let p = &self.phases;
        Ok(vec![
            MaterialPhase::new(p.e1, density_from_kg_per_m3(p.rho1), p.law)?,
            MaterialPhase::new(p.e2, density_from_kg_per_m3(p.rho2), p.law)?,
        ])
    }

    pub fn newmark(&self) -> Result<NewmarkParams> {
        NewmarkParams::new(self.newmark.beta, self.newmark.gamma, self.time.dt)
    }

    pub fn impact(&self) -> ImpactLoad {
        ImpactLoad {
            u_max: self.load.u_max,
            duration: self.load.duration,
        }
    }

    pub fn micro_controls(&self) -> MicroControls {
        MicroControls {
            tol: self.solver.micro_tol,
            max_iter: self.solver.micro_max_iter,
        }
    }

    pub fn macro_controls(&self) -> NewtonControls {
        NewtonControls {
            tol: self.solver.macro_tol,
            max_iter: self.solver.macro_max_iter,
        }
    }

    /// RVE of the configured unit cell, cell count and constraints.
    pub fn rve_model(&self) -> Result<RveModel> {
        self.rve_model_with(self.rve.unit_cell, self.rve.n_cells, self.rve.constraint)
    }

    pub fn rve_model_with(
        &self,
        cell: UnitCell,
        n_cells: usize,
        constraint: ConstraintMode,
    ) -> Result<RveModel> {
        RveModel::new(
            build_rve_mesh(cell, n_cells, self.geometry.l_m, self.l_e())?,
            self.phases()?,
            constraint,
            self.rve.f_link,
            self.newmark()?,
            self.micro_controls(),
        )
    }

    pub fn macro_mesh(&self) -> Result<Mesh1D> {
        Mesh1D::uniform(0.0, self.geometry.length, self.n_macro_elements(), |_| 0)
    }

    pub fn macro_model(&self) -> Result<MacroModel> {
        self.macro_model_with(self.rve_model()?)
    }

    pub fn macro_model_with(&self, rve: RveModel) -> Result<MacroModel> {
        MacroModel::new(
            self.macro_mesh()?,
            self.newmark()?,
            self.impact(),
            rve,
            self.macro_controls(),
        )
    }

    pub fn dns_model(&self) -> Result<DnsModel> {
        DnsModel::new(
            build_bar_mesh(self.geometry.length, self.geometry.l_m, self.l_e())?,
            self.phases()?,
            self.newmark()?,
            self.impact(),
            self.macro_controls(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IMPACT: &str = r#"
[geometry]
L = 10000.0
l_M = 10.0
l_macro_E = 33.333333333333336

[phases]
E1 = 2e3
E2 = 2e5
rho1 = 1e3
rho2 = 1e5

[load]
u_max = 100.0
T = 0.01

[time]
dt = 5e-5
n_steps = 1000
"#;

    #[test]
    fn defaults_are_materialized() {
        let c = ScenarioConfig::from_toml(IMPACT).unwrap();
        assert_eq!(c.geometry.l_e, Some(0.5));
        assert_eq!(c.n_macro_elements(), 300);
        assert_eq!(c.rve.unit_cell, UnitCell::A);
        assert_eq!(c.rve.n_cells, 1);
        assert_eq!(c.newmark.beta, 0.25);
        assert_eq!(c.phases.law, Law::StVenantKirchhoff);
        let echoed = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(echoed, c);
    }

    #[test]
    fn dt_is_required() {
        let text = IMPACT.replace("dt = 5e-5\n", "");
        assert!(matches!(ScenarioConfig::from_toml(&text), Err(Fe2Error::InvalidConfig(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = IMPACT.replace("u_max = 100.0", "u_max = 100.0\nspeed = 3.0");
        let err = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("speed"), "{err}");
    }

    #[test]
    fn incommensurate_macro_mesh_is_rejected() {
        let text = IMPACT.replace("33.333333333333336", "33.33");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn large_rve_warns() {
        let text = IMPACT.replace("l_macro_E = 33.333333333333336", "l_macro_E = 10.0")
            + "\n[rve]\nn_cells = 3\n";
        let c = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(c.warnings().len(), 1);
    }

    #[test]
    fn redundant_links_are_rejected() {
        let text = format!("{IMPACT}\n[rve]\nconstraint = \"fixed_corners\"\nf_link = \"volume_avg\"\n");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn densities_are_converted() {
        let c = ScenarioConfig::from_toml(IMPACT).unwrap();
        let p = c.phases().unwrap();
        assert!((p[0].density - 1e-9).abs() < 1e-24);
        assert!((p[1].density - 1e-7).abs() < 1e-22);
    }
}
