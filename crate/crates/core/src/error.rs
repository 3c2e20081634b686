use thiserror::Error;

/// Everything that can go wrong while describing, simulating or reporting on a chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate drive: {0}")]
    DegenerateDrive(String),

    #[error("eigensolver failed at t = {t:e} s")]
    Eigensolver { t: f64 },

    #[error("adiabatic frame breakdown at t = {t:e} s (column overlap {overlap:.3})")]
    FrameBreakdown { t: f64, overlap: f64 },

    #[error("finite-difference step too large for nonadiabatic coupling (antisymmetry defect {defect:e})")]
    RefineStep { defect: f64 },

    #[error("step size underflow at t = {t:e} s (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("tolerance not achieved within {steps} steps (stopped at t = {t:e} s)")]
    MaxSteps { t: f64, steps: usize },

    #[error("non-finite state at t = {t:e} s")]
    NonFinite { t: f64 },

    #[error("hermiticity drift {drift:e} exceeds limit")]
    HermiticityDrift { drift: f64 },

    #[error("{0}")]
    AllRunsFailed(String),

    #[error("no counterintuitive overlap between pump and Stokes envelopes")]
    NoOverlap,

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI: 1 config, 2 integration, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Eigensolver { .. }
            | Error::FrameBreakdown { .. }
            | Error::RefineStep { .. }
            | Error::StepUnderflow { .. }
            | Error::MaxSteps { .. }
            | Error::NonFinite { .. }
            | Error::HermiticityDrift { .. }
            | Error::AllRunsFailed(_) => 2,
            _ => 1,
        }
    }

    /// True for failures raised by the integrator or the adiabatic frame machinery.
    pub fn is_integration_failure(&self) -> bool {
        self.exit_code() == 2
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
