//! Two-scale (FE²) implicit dynamic homogenization of heterogeneous 1D bars.
//!
//! Every macroscopic Gauss point owns a microscale RVE that is solved with
//! full inertia; the homogenized stress, inertia force and four consistent
//! tangent moduli drive a Newmark–Newton macro solver. A single-scale solver
//! resolving every layer serves as the reference.

pub mod audit;
pub mod config;
pub mod dns;
pub mod error;
pub mod fe;
pub mod homogenize;
pub mod linalg;
pub mod macroscale;
pub mod material;
pub mod metrics;
pub mod newmark;
pub mod output;
pub mod rve;
pub mod scenario;
pub mod verification;

pub use error::{Fe2Error, Result};
