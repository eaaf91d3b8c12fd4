use thiserror::Error;

/// Errors raised by the formation model, its analysis and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormationError {
    /// A vector that must be normalized is (numerically) zero, i.e. two agents coincide.
    #[error("degenerate vector: norm {norm:e} is not above {threshold:e}")]
    DegenerateVector { norm: f64, threshold: f64 },

    /// An error vector whose implied link lengths `e_k + d_k` are not all positive.
    #[error("invalid error vector: link {link} has length {length} (must be > 0)")]
    InvalidErrorVec { link: usize, length: f64 },

    #[error("singular angle: {0}")]
    SingularAngle(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid formation spec: {0}")]
    InvalidSpec(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("integration produced a non-finite state")]
    NonFiniteState,

    #[error("random sampling failed after {attempts} attempts")]
    SamplingFailed { attempts: usize },
}

pub type Result<T, E = FormationError> = std::result::Result<T, E>;
