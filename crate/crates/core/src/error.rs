use thiserror::Error;

/// Errors surfaced by the alignment engine.
#[derive(Debug, Error)]
pub enum TkgaError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("unknown label '{label}' in {side} graph")]
    Resolution { label: String, side: String },
    #[error("lookup error: no name vector for label '{0}'")]
    NameLookup(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("empty walk: entity {0} has no neighbors")]
    EmptyWalk(u32),
    #[error("state error: {0}")]
    State(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("config error: key '{key}': {msg}")]
    Config { key: String, msg: String },
    #[error("reasoner transport error: {0}")]
    ReasonerTransport(String),
    #[error("round {round} aborted: {msg}")]
    RoundAborted { round: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, TkgaError>;

impl TkgaError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        TkgaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        TkgaError::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
