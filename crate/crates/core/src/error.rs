use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("total energy {energy} lies within {eps:e} of the threshold of channel {channel}")]
    Threshold {
        energy: f64,
        channel: usize,
        eps: f64,
    },

    #[error("singular matching system at interface {interface} (energy {energy})")]
    SingularInterface { interface: usize, energy: f64 },

    #[error("no open channel at total energy {0}")]
    NoOpenChannel(f64),

    #[error("outgoing channel {channel} is closed at kinetic energy {kinetic}")]
    ChannelClosed { channel: usize, kinetic: f64 },

    #[error("energy coverage gap: {0}")]
    Coverage(String),

    #[error("grid captures only {captured} of the wavepacket norm")]
    GridTruncation { captured: f64 },

    #[error("positivity violated: minimum eigenvalue {min_eigenvalue:e} (allowed {tolerance:e}){context}")]
    Positivity {
        min_eigenvalue: f64,
        tolerance: f64,
        context: String,
    },

    #[error("horizon violation: {0}")]
    Horizon(String),

    #[error("grid of {requested} nodes exceeds the oracle limit {limit}")]
    MemoryGuard { requested: usize, limit: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
