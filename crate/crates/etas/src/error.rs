use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by the failure class they represent; the CLI maps these
/// onto its exit codes (config -> 2, data -> 3, numerical -> 4, timeout -> 5).
#[derive(Debug, Error)]
pub enum EtasError {
    /// Invalid model parameters (non-finite, out of domain, p <= 1, ...).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A catalog violated its invariants (unsorted times, magnitudes below M0, ...).
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    /// Simulation exceeded the configured event cap; no partial data is returned.
    #[error("simulation truncated at {n_events} events (max_events = {max_events}); \
             parameters are likely super- or near-critical")]
    Truncated { n_events: usize, max_events: usize },

    /// Rejection or resampling loop exhausted its attempt budget.
    #[error("rejection budget exhausted: {0}")]
    RejectionExhausted(String),

    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Mismatched dimensions between two objects that must agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Summary vectors built under different configurations were combined.
    #[error("summary config fingerprint mismatch: {expected:#018x} vs {found:#018x}")]
    FingerprintMismatch { expected: u64, found: u64 },

    /// Problem with a run configuration file or an override.
    #[error("config error: {0}")]
    Config(String),

    /// Problem with input data files (catalogs, sample sets, raw feeds).
    #[error("data error: {0}")]
    Data(String),

    /// A configured wall-clock budget was exceeded.
    #[error("timeout: {0}")]
    Timeout(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EtasError>;

impl EtasError {
    /// Process exit code for the CLI (`0` is success and never produced here).
    pub fn exit_code(&self) -> i32 {
        match self {
            EtasError::Config(_) => 2,
            EtasError::InvalidCatalog(_) | EtasError::Data(_) | EtasError::Io(_) => 3,
            EtasError::Timeout(_) => 5,
            _ => 4,
        }
    }

    /// Short machine-parsable tag used as the first token of CLI error lines.
    pub fn tag(&self) -> &'static str {
        match self {
            EtasError::Config(_) => "E_CONFIG",
            EtasError::InvalidCatalog(_) | EtasError::Data(_) | EtasError::Io(_) => "E_DATA",
            EtasError::Timeout(_) => "E_TIMEOUT",
            _ => "E_NUMERIC",
        }
    }
}
