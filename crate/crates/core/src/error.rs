use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate correspondence set")]
    DegenerateCorrespondences,

    #[error("descriptor dim too small: {0} < {min}", min = crate::features::MIN_DESCRIPTOR_DIM)]
    DescriptorDimTooSmall(usize),

    #[error("constraints infeasible at these dims: D_proxy = {d_proxy} < N_h * D_emb = {required}")]
    InfeasibleProxyDims { d_proxy: usize, required: usize },

    #[error("no correspondences survived matching")]
    NoMatch,

    #[error("pose graph is disconnected; components: {0:?}")]
    DisconnectedGraph(Vec<Vec<usize>>),

    #[error("fracture generation failed: {0}")]
    Generation(String),

    #[error("memory cap exceeded: need {required} bytes, cap is {cap} bytes")]
    MemoryCap { required: u64, cap: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
