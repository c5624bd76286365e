use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// The variants split into two families: caller mistakes (`Input`, `Parse`,
/// `Domain`, `Degenerate`, `Hypothesis`, `Resource`) and numerical trouble
/// (`StepLimit`, `NonFinite`, `Precision`, `NonConvergence`). The CLI maps the
/// first family to exit code 2 and the second to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("energy {energy} is outside the admissible band interior: {reason}")]
    Domain { energy: f64, reason: String },

    #[error("degenerate solution: {0}")]
    Degenerate(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("step budget of {max_steps} exhausted at x = {x_reached}")]
    StepLimit { max_steps: usize, x_reached: f64 },

    #[error("non-finite value encountered at x = {x}")]
    NonFinite { x: f64 },

    #[error("insufficient precision: {0}")]
    Precision(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),
}

impl SpectraError {
    /// True for errors caused by bad caller input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            SpectraError::Input(_)
                | SpectraError::Parse(_)
                | SpectraError::Domain { .. }
                | SpectraError::Degenerate(_)
                | SpectraError::Hypothesis(_)
                | SpectraError::Resource(_)
        )
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        SpectraError::Input(msg.into())
    }

    pub(crate) fn domain(energy: f64, reason: impl Into<String>) -> Self {
        SpectraError::Domain {
            energy,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SpectraError>;
