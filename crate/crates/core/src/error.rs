use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expected 3 phases, got {0}")]
    WrongPhaseCount(usize),
    #[error("phase {phase} has {len} samples, expected {expected}")]
    WrongLength {
        phase: usize,
        len: usize,
        expected: usize,
    },
    #[error("fundamental component vanishes (|X1| = {magnitude:e})")]
    ZeroFundamental { magnitude: f64 },
    #[error("invalid Savitzky-Golay window {window} for order {order}")]
    InvalidWindow { window: usize, order: usize },
    #[error("section length {section_len} exceeds signal length {signal_len}")]
    SectionOverflow {
        section_len: usize,
        signal_len: usize,
    },
    #[error("need at least {k} distinct waveforms, found {distinct}")]
    DegenerateInput { k: usize, distinct: usize },
    #[error("cluster {0} has no member waveforms")]
    ClusterEmpty(usize),
    #[error("label class {0} is absent from the training set")]
    EmptyClass(u8),
    #[error("minority class has {0} rows, need at least 2")]
    TooFewMinority(usize),
    #[error("feature manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("truncated input at frame {frame}")]
    Truncated { frame: usize },
    #[error("missing phase: {0}")]
    MissingPhase(String),
    #[error("conflicting labels for {0}")]
    LabelConflict(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable variant name for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::WrongPhaseCount(_) => "WrongPhaseCount",
            Error::WrongLength { .. } => "WrongLength",
            Error::ZeroFundamental { .. } => "ZeroFundamental",
            Error::InvalidWindow { .. } => "InvalidWindow",
            Error::SectionOverflow { .. } => "SectionOverflow",
            Error::DegenerateInput { .. } => "DegenerateInput",
            Error::ClusterEmpty(_) => "ClusterEmpty",
            Error::EmptyClass(_) => "EmptyClass",
            Error::TooFewMinority(_) => "TooFewMinority",
            Error::ManifestMismatch(_) => "ManifestMismatch",
            Error::Config(_) => "Config",
            Error::BadMagic { .. } => "BadMagic",
            Error::BadVersion(_) => "BadVersion",
            Error::Truncated { .. } => "Truncated",
            Error::MissingPhase(_) => "MissingPhase",
            Error::LabelConflict(_) => "LabelConflict",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
