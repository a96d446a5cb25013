use std::path::PathBuf;

/// Errors produced anywhere in the core crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("activation cache does not match network: {0}")]
    Cache(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("episode exhausted: step called at timestep {timestep} with episode length {episode_length}")]
    EpisodeExhausted { timestep: usize, episode_length: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("run aborted at episode {episode}: {source}")]
    RunAborted {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep cell method={method} seed={seed} failed: {source}")]
    SweepCell {
        method: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
