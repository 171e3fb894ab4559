use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("region too tight: {0}")]
    RegionTooTight(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("kernel too wide: {0}")]
    KernelTooWide(String),
    #[error("grid spec mismatch")]
    SpecMismatch,
    #[error("compatibility condition violated: {0}")]
    NotCompatible(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("input field is not conservative: {0}")]
    NotConservativeInput(String),
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),
    #[error("no contraction: {0}")]
    NoContraction(String),
    #[error("degenerate map: {0}")]
    DegenerateMap(String),
    #[error("not a diffeomorphism: {0}")]
    NotDiffeo(String),
    #[error("twist condition fails: {0}")]
    NoTwist(String),
    #[error("blend lost the twist condition: {0}")]
    TwistLost(String),
    #[error("newton failure: {0}")]
    NewtonFailure(String),
    #[error("format error: {0}")]
    FormatError(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
