use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bad exponent {value}: {reason}")]
    BadExponent { value: f64, reason: &'static str },

    #[error("coefficient field is not uniformly elliptic (min eigenvalue {min_eigenvalue:e} at cell {cell})")]
    NotElliptic { min_eigenvalue: f64, cell: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at cell {cell}")]
    NonFinite { cell: usize },

    #[error("CFL violation at step {step}: dt = {dt:e} exceeds the stable bound; use dt <= {suggested_dt:e}")]
    CflViolation {
        step: usize,
        dt: f64,
        suggested_dt: f64,
    },

    #[error("linear solve failed at step {step}: relative residual {residual:e}")]
    LinearSolveFailure { step: usize, residual: f64 },

    #[error("negative density {min:e} at step {step} (positivity limiter disabled)")]
    NegativeDensity { step: usize, min: f64 },

    #[error("singular Hamiltonian gradient at |p| = {norm:e} with gamma < 2")]
    SingularGradient { norm: f64 },

    #[error("no bound constant up to {limit:e} satisfies the structural inequalities")]
    CertificateFailed { limit: f64 },

    #[error("dimension {0} unsupported for this operation")]
    DimensionUnsupported(usize),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("adjoint sweep missing or empty")]
    MissingSweep,

    #[error("discrete second derivatives exceed the spike threshold ({max:e} > {threshold:e})")]
    RoughData { max: f64, threshold: f64 },

    #[error("gamma = {0} outside the admissible range for this construction")]
    BadGamma(f64),

    #[error("ODE profile blew up at y = {y} (|U| = {value:e})")]
    BlowUp { y: f64, value: f64 },

    #[error("profile requested at y = {y} beyond the tabulated range {y_max}")]
    TableRange { y: f64, y_max: f64 },

    #[error("quadrature budget of {budget} evaluations exceeded")]
    QuadratureBudgetExceeded { budget: u64 },

    #[error("report requested on an empty ledger")]
    EmptyLedger,

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{} configuration errors: {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Error>),

    #[error("at time index {index}: {source}")]
    AtStep {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in ledger rows.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::BadExponent { .. } => "BadExponent",
            Error::NotElliptic { .. } => "NotElliptic",
            Error::GridMismatch(_) => "GridMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::CflViolation { .. } => "CFLViolation",
            Error::LinearSolveFailure { .. } => "LinearSolveFailure",
            Error::NegativeDensity { .. } => "NegativeDensity",
            Error::SingularGradient { .. } => "SingularGradient",
            Error::CertificateFailed { .. } => "CertificateFailed",
            Error::DimensionUnsupported(_) => "DimensionUnsupported",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::MissingSweep => "MissingSweep",
            Error::RoughData { .. } => "RoughData",
            Error::BadGamma(_) => "BadGamma",
            Error::BlowUp { .. } => "BlowUp",
            Error::TableRange { .. } => "TableRange",
            Error::QuadratureBudgetExceeded { .. } => "QuadratureBudgetExceeded",
            Error::EmptyLedger => "EmptyLedger",
            Error::Parse { .. } => "ParseError",
            Error::Validation { .. } | Error::Invalid(_) => "ValidationError",
            Error::AtStep { source, .. } => source.tag(),
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation { .. }
                | Error::Invalid(_)
                | Error::InvalidInput(_)
                | Error::BadExponent { .. }
                | Error::BadGamma(_)
                | Error::GridMismatch(_)
                | Error::DimensionUnsupported(_)
        ) || matches!(self, Error::AtStep { source, .. } if source.is_validation())
    }

    pub(crate) fn at_step(self, index: usize) -> Error {
        Error::AtStep {
            index,
            source: Box::new(self),
        }
    }
}
