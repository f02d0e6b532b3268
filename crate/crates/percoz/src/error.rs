use std::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A point lies outside the box it is used with.
    OutOfBox { point: Vec<i64> },
    /// A site violates the required distance from the box shell.
    MarginViolation { point: Vec<i64>, margin: i64 },
    /// The cluster touches the box shell, so its fill is not determined
    /// by the finite window.
    IndeterminateFill,
    /// Enumeration exceeded its node budget; results are partial.
    BudgetExceeded { scanned: u64, budget: u64 },
    /// Exhaustive configuration enumeration refused: too many edges.
    EdgeBudget { edges: usize, max: usize },
    /// A kernel violated one of its contracts (conventions, support).
    KernelContract(String),
    /// Total kernel mass at s = 0 is >= 1; no tilt boundary exists.
    KernelMass { mass: f64 },
    /// The tilt ray never crosses {F = 1} within the overflow cap.
    RayDoesNotCross,
    /// Covariance matrix is singular (degenerate kernel support).
    SingularCovariance,
    /// A tilted sum exceeded the floating-point magnitude cap.
    Overflow,
    /// A conditional estimator had too few conditioning events.
    InsufficientStatistics { hits: u64, required: u64 },
    /// Not enough data points for the requested fit.
    InsufficientPoints { have: usize, need: usize },
    /// Local surface fit is ill conditioned.
    InsufficientAngularResolution,
    /// Invalid argument or construction.
    Invalid(String),
    /// Experiment spec validation failures, one message per field.
    Validation(Vec<String>),
    /// I/O or serialization failure.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::OutOfBox { point } => write!(f, "point {:?} is outside the box", point),
            Error::MarginViolation { point, margin } => {
                write!(f, "point {:?} is closer than {} to the box shell", point, margin)
            }
            Error::IndeterminateFill => {
                write!(f, "cluster touches the box shell; fill is indeterminate in this window")
            }
            Error::BudgetExceeded { scanned, budget } => {
                write!(f, "enumeration budget exceeded ({} nodes scanned, budget {})", scanned, budget)
            }
            Error::EdgeBudget { edges, max } => {
                write!(f, "box has {} edges, exhaustive enumeration capped at {}", edges, max)
            }
            Error::KernelContract(msg) => write!(f, "kernel contract violation: {}", msg),
            Error::KernelMass { mass } => {
                write!(f, "kernel mass {} >= 1 at s = 0; tilt boundary undefined", mass)
            }
            Error::RayDoesNotCross => write!(f, "tilt ray does not cross {{F = 1}} within the cap"),
            Error::SingularCovariance => write!(f, "covariance matrix is singular"),
            Error::Overflow => write!(f, "tilted sum exceeds magnitude cap"),
            Error::InsufficientStatistics { hits, required } => {
                write!(f, "insufficient statistics: {} conditioning hits, {} required", hits, required)
            }
            Error::InsufficientPoints { have, need } => {
                write!(f, "insufficient points: have {}, need {}", have, need)
            }
            Error::InsufficientAngularResolution => {
                write!(f, "insufficient angular resolution for local surface fit")
            }
            Error::Invalid(msg) => write!(f, "{}", msg),
            Error::Validation(msgs) => {
                write!(f, "invalid experiment spec:")?;
                for m in msgs {
                    write!(f, "\n  - {}", m)?;
                }
                Ok(())
            }
            Error::Io(msg) => write!(f, "{}", msg),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
