//! Uniaxial finite-strain constitutive laws.
//!
//! Units are mm, N, s throughout, so mass is carried in tonnes and densities
//! in t/mm³. Densities given in kg/m³ are converted once with
//! [`density_from_kg_per_m3`].

use serde::{Deserialize, Serialize};

use crate::error::{Fe2Error, Result};

/// kg/m³ → t/mm³.
pub const KG_PER_M3: f64 = 1.0e-12;

pub fn density_from_kg_per_m3(rho: f64) -> f64 {
    rho * KG_PER_M3
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// `P = E F (F² - 1) / 2`
    #[default]
    StVenantKirchhoff,
    /// `P = E (F - 1)`
    LinearElastic,
    /// Compressible neo-Hookean with vanishing Poisson ratio,
    /// `P = E (F - 1/F) / 2`. Unlike St. Venant–Kirchhoff it stiffens without
    /// bound in compression.
    NeoHookean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialPhase {
    /// Young's modulus, N/mm².
    pub youngs_modulus: f64,
    /// Reference density, t/mm³.
    pub density: f64,
    pub law: Law,
}

impl MaterialPhase {
    pub fn new(youngs_modulus: f64, density: f64, law: Law) -> Result<Self> {
        if !(youngs_modulus > 0.0) || !(density >= 0.0) {
            return Err(Fe2Error::config(format!(
                "phase needs E > 0 and rho >= 0 (E = {youngs_modulus}, rho = {density})"
            )));
        }
        Ok(MaterialPhase {
            youngs_modulus,
            density,
            law,
        })
    }

    /// First Piola-Kirchhoff stress.
    pub fn stress(&self, f: f64) -> Result<f64> {
        check_orientation(f)?;
        let e = self.youngs_modulus;
        Ok(match self.law {
            Law::StVenantKirchhoff => 0.5 * e * f * (f * f - 1.0),
            Law::LinearElastic => e * (f - 1.0),
            Law::NeoHookean => 0.5 * e * (f - 1.0 / f),
        })
    }

    /// `dP/dF`.
    pub fn tangent(&self, f: f64) -> Result<f64> {
        check_orientation(f)?;
        let e = self.youngs_modulus;
        Ok(match self.law {
            Law::StVenantKirchhoff => 0.5 * e * (3.0 * f * f - 1.0),
            Law::LinearElastic => e,
            Law::NeoHookean => 0.5 * e * (1.0 + 1.0 / (f * f)),
        })
    }

    /// Strain energy density `W(F)` with `W(1) = 0`.
    pub fn energy(&self, f: f64) -> Result<f64> {
        check_orientation(f)?;
        let e = self.youngs_modulus;
        Ok(match self.law {
            Law::StVenantKirchhoff => {
                let g = 0.5 * (f * f - 1.0);
                0.5 * e * g * g
            }
            Law::LinearElastic => 0.5 * e * (f - 1.0).powi(2),
            Law::NeoHookean => 0.25 * e * (f * f - 1.0) - 0.5 * e * f.ln(),
        })
    }

    /// Stress and tangent in one call.
    pub fn response(&self, f: f64) -> Result<(f64, f64)> {
        Ok((self.stress(f)?, self.tangent(f)?))
    }
}

fn check_orientation(f: f64) -> Result<()> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Fe2Error::InvertedElement {
            element: None,
            deformation_gradient: f,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn svk(e: f64) -> MaterialPhase {
        MaterialPhase::new(e, 0.0, Law::StVenantKirchhoff).unwrap()
    }

    #[test]
    fn svk_values() {
        assert_eq!(svk(2e3).stress(1.0).unwrap(), 0.0);
        assert_relative_eq!(svk(2e3).stress(1.1).unwrap(), 231.0, max_relative = 1e-13);
        assert_relative_eq!(svk(2e5).stress(0.9).unwrap(), -17100.0, max_relative = 1e-13);
        assert_eq!(svk(2e3).tangent(1.0).unwrap(), 2e3);
        assert_relative_eq!(svk(2e3).tangent(1.1).unwrap(), 2630.0, max_relative = 1e-13);
    }

    #[test]
    fn linear_law() {
        let p = MaterialPhase::new(2e3, 0.0, Law::LinearElastic).unwrap();
        assert_eq!(p.stress(1.0).unwrap(), 0.0);
        assert_relative_eq!(p.stress(1.01).unwrap(), 20.0, max_relative = 1e-12);
        assert_eq!(p.tangent(0.7).unwrap(), 2e3);
    }

    #[test]
    fn neo_hookean_values() {
        let p = MaterialPhase::new(2e3, 0.0, Law::NeoHookean).unwrap();
        assert_eq!(p.stress(1.0).unwrap(), 0.0);
        assert_eq!(p.tangent(1.0).unwrap(), 2e3);
        assert_relative_eq!(p.stress(2.0).unwrap(), 1500.0, max_relative = 1e-13);
        assert_relative_eq!(p.stress(0.5).unwrap(), -1500.0, max_relative = 1e-13);
    }

    #[test]
    fn inverted_states_are_rejected() {
        assert!(matches!(
            svk(1.0).stress(0.0),
            Err(Fe2Error::InvertedElement { .. })
        ));
        assert!(svk(1.0).tangent(-0.2).is_err());
        assert!(svk(1.0).stress(f64::NAN).is_err());
    }

    #[test]
    fn invalid_phase() {
        assert!(MaterialPhase::new(0.0, 1.0, Law::LinearElastic).is_err());
        assert!(MaterialPhase::new(1.0, -1.0, Law::LinearElastic).is_err());
    }

    #[test]
    fn density_conversion() {
        assert_relative_eq!(density_from_kg_per_m3(1e3), 1e-9, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn tangent_matches_central_differences(
            f in 0.8f64..1.2,
            e in 1e3f64..1e6,
            which in 0usize..3,
        ) {
            let law = [Law::LinearElastic, Law::StVenantKirchhoff, Law::NeoHookean][which];
            let p = MaterialPhase::new(e, 0.0, law).unwrap();
            let h = 1e-6;
            let fd = (p.stress(f + h).unwrap() - p.stress(f - h).unwrap()) / (2.0 * h);
            let a = p.tangent(f).unwrap();
            prop_assert!(((fd - a) / a).abs() < 1e-8);
            let dw = (p.energy(f + h).unwrap() - p.energy(f - h).unwrap()) / (2.0 * h);
            let s = p.stress(f).unwrap();
            prop_assert!((dw - s).abs() < 1e-6 * e);
        }

        #[test]
        fn svk_monotone_above_critical_stretch(f in 0.6f64..3.0) {
            let p = svk(1.0);
            prop_assert!(p.tangent(f).unwrap() > 0.0);
            prop_assert!(p.stress(f + 1e-3).unwrap() > p.stress(f).unwrap());
        }

        #[test]
        fn neo_hookean_monotone(f in 0.05f64..5.0) {
            let p = MaterialPhase::new(1.0, 0.0, Law::NeoHookean).unwrap();
            prop_assert!(p.tangent(f).unwrap() > 0.0);
            prop_assert!(p.stress(f + 1e-3).unwrap() > p.stress(f).unwrap());
        }
    }
}
