use thiserror::Error;

/// Failure modes surfaced across the crate. Numerical tolerances are part of
/// the message payloads so CLI reports can echo them verbatim.
#[derive(Error, Debug)]
pub enum CoreError {
    #[error("configuration error: {0}")]
    Config(String),

    /// A quadrature or grid cannot resolve the requested object; carries the
    /// node count that would.
    #[error("resolution error: {msg} (required nodes: {required})")]
    Resolution { msg: String, required: usize },

    #[error("representation mismatch: expected {expected} field")]
    Representation { expected: &'static str },

    #[error("vacuum proximity: min(1 + eps*a) = {min_density:.6e}")]
    Vacuum { min_density: f64 },

    /// Eigenvector labeling is ill-posed at this frequency.
    #[error("degenerate spectrum at xi = ({0:.6e}, {1:.6e}, {2:.6e})")]
    Degenerate(f64, f64, f64),

    /// The symbol is singular where a closed form divides by eta+- .
    #[error("singular point: xi = ({0:.6e}, {1:.6e}, {2:.6e})")]
    SingularPoint(f64, f64, f64),

    #[error("degenerate quadrature: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("snapshot format: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
