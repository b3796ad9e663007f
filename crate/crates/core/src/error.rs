use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("non-finite field")]
    NonFiniteField,

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("inverse not available")]
    InverseUnavailable,

    #[error("jacobian not available")]
    JacobianUnavailable,

    #[error("open case uses compact support, not normalization")]
    NormalizeOnDisc,

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("time step too coarse for unwrapping (step displacement {0:.3e})")]
    StepTooCoarse(f64),

    #[error("time index {index} out of range for {nt} samples")]
    TimeIndex { index: usize, nt: usize },

    #[error("calculus identity violated: composed {composed:.6e} vs direct {direct:.6e}")]
    CalculusIdentity { composed: f64, direct: f64 },

    #[error("reparameterization bound violated: lhs {lhs:.6e} > rhs {rhs:.6e}")]
    ReparamBound { lhs: f64, rhs: f64 },

    #[error("invalid reparameterization: {0}")]
    InvalidReparam(String),

    #[error("refine time grid: {0}")]
    RefineTimeGrid(String),

    #[error("flatten inputs first: {0}")]
    FlattenInputsFirst(String),

    #[error("path is not the flow of its Hamiltonian (relative velocity residual {0:.3e})")]
    PathAudit(f64),

    #[error("not C0-Cauchy at tolerance {tau:.3e} (tail modulus {modulus:.3e})")]
    NotCauchy { tau: f64, modulus: f64 },

    #[error("profile singular at 0; set mollify_n")]
    ProfileSingular,

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("band width below grid resolution: {0}")]
    BandBelowResolution(String),

    #[error("refine time sampling: {0}")]
    RefineTimeSampling(String),

    #[error("unwrapping invalid: {0}")]
    Unwrapping(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Exit status and short label for every error kind. Code 2 is left to
/// command-line usage errors.
pub const EXIT_CODES: [(i32, &str); 24] = [
    (3, "file parse error"),
    (4, "i/o error"),
    (5, "invalid configuration"),
    (6, "invalid domain"),
    (7, "domain mismatch"),
    (8, "non-finite field"),
    (9, "inverse not available"),
    (10, "jacobian not available"),
    (11, "normalization requested on the disc"),
    (12, "support violation"),
    (13, "time step too coarse"),
    (14, "time index out of range"),
    (15, "calculus identity violated"),
    (16, "reparameterization bound violated"),
    (17, "invalid reparameterization"),
    (18, "refine time grid"),
    (19, "flatten inputs first"),
    (20, "path audit failed"),
    (21, "not Cauchy"),
    (22, "profile singular"),
    (23, "invalid profile"),
    (24, "band below grid resolution"),
    (25, "refine time sampling"),
    (26, "unwrapping invalid"),
];

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 3,
            Error::Io(_) => 4,
            Error::Config(_) => 5,
            Error::InvalidDomain(_) => 6,
            Error::DomainMismatch(_) => 7,
            Error::NonFiniteField => 8,
            Error::InverseUnavailable => 9,
            Error::JacobianUnavailable => 10,
            Error::NormalizeOnDisc => 11,
            Error::SupportViolation(_) => 12,
            Error::StepTooCoarse(_) => 13,
            Error::TimeIndex { .. } => 14,
            Error::CalculusIdentity { .. } => 15,
            Error::ReparamBound { .. } => 16,
            Error::InvalidReparam(_) => 17,
            Error::RefineTimeGrid(_) => 18,
            Error::FlattenInputsFirst(_) => 19,
            Error::PathAudit(_) => 20,
            Error::NotCauchy { .. } => 21,
            Error::ProfileSingular => 22,
            Error::InvalidProfile(_) => 23,
            Error::BandBelowResolution(_) => 24,
            Error::RefineTimeSampling(_) => 25,
            Error::Unwrapping(_) => 26,
        }
    }
}
