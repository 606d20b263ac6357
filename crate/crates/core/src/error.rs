use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Fe2Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Fe2Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Deformation gradient left the admissible range `F > 0`.
    #[error("inverted element{}: F = {deformation_gradient:e}", at_element(element))]
    InvertedElement {
        element: Option<usize>,
        deformation_gradient: f64,
    },

    /// Micro Newton failed; `trace` holds the update norms of every iteration.
    #[error("micro Newton did not converge after {iterations} iterations (last |dD*| = {last:e})")]
    MicroDivergence {
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },

    #[error("Newton failed at step {step}: {reason}")]
    StepFailure { step: usize, reason: String },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn at_element(element: &Option<usize>) -> String {
    element.map(|e| format!(" {e}")).unwrap_or_default()
}

impl Fe2Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Fe2Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches an element index to an [`Fe2Error::InvertedElement`].
    pub(crate) fn in_element(self, e: usize) -> Self {
        match self {
            Fe2Error::InvertedElement {
                deformation_gradient,
                ..
            } => Fe2Error::InvertedElement {
                element: Some(e),
                deformation_gradient,
            },
            other => other,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Fe2Error::InvalidConfig(msg.into())
    }
}
