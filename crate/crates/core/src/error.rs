use thiserror::Error;

/// A single invalid configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("stage {stage} outside 1..={horizon}")]
    StageOutOfRange { stage: usize, horizon: usize },

    #[error("state {0} lies outside the declared state space")]
    StateOutsideSpace(f64),

    #[error("action {0} lies outside the declared action space")]
    ActionOutsideSpace(f64),

    #[error("{0} requires a finite (enumerated) space")]
    NotFinite(&'static str),

    #[error("noise law is not enumerable")]
    NoiseNotEnumerable,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("pathwise action tree has {nodes} nodes, cap is {cap}; coarsen the action grid or reduce the horizon")]
    NodeCapExceeded { nodes: u128, cap: u128 },

    #[error("penalty family is not zero-mean: |E[penalty]| = {deviation:e} at stage {stage}")]
    NotZeroMean { stage: usize, deviation: f64 },

    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<FieldError>),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
