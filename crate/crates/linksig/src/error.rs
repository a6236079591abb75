use thiserror::Error;

use crate::corrmodel::CorrelationResult;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Quadrature did not reach the requested tolerance; the partial
    /// estimate and its error bound are carried along.
    #[error("quadrature did not converge: |error| = {} after {} nodes", partial.estimated_abs_error, partial.quadrature_nodes)]
    NonConvergentQuadrature { partial: Box<CorrelationResult> },

    /// The indoor integrand factor vanished inside the integration domain.
    #[error("singular integrand inside the integration domain: {0}")]
    IntegrandSingular(String),

    #[error("quantization undefined: all taps are zero")]
    AllZeroCir,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("distance underflow: {0}")]
    DistanceUnderflow(String),

    #[error("all path delays fall outside the {tap_count}-tap window (max delay {max_delay_s:.3e} s)")]
    DelayWindowExceeded { tap_count: usize, max_delay_s: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty training set: {0}")]
    EmptyTrainingSet(String),

    #[error("singular normal system: {0}")]
    SingularSystem(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// A helper's measured channel has no tap above the division floor.
    #[error("helper {helper}: every tap is below the division floor {floor:.1e}")]
    GuardedDivision { helper: usize, floor: f64 },

    #[error("infeasible node placement: {0}")]
    InfeasiblePlacement(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
