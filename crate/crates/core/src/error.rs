use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A failure raised while evaluating or validating a specific node.
    #[error("node `{node}`: {source}")]
    AtNode {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("graph validation failed: {0}")]
    Validation(String),

    #[error("model format: {0}")]
    Format(String),

    #[error("blob `{blob}` out of range: bytes {start}..{end} exceed weights file of {file_len} bytes")]
    BlobRange {
        blob: String,
        start: u64,
        end: u64,
        file_len: u64,
    },

    #[error("unknown tap `{0}`")]
    UnknownTap(String),

    #[error("image: {0}")]
    Image(String),

    #[error("resource limit: execution needs about {needed} bytes, budget is {budget}")]
    ResourceLimit { needed: u64, budget: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_node(node: &str, source: Error) -> Self {
        Error::AtNode {
            node: node.to_string(),
            source: Box::new(source),
        }
    }

    /// The innermost error, with node context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtNode { source, .. } => source.root(),
            other => other,
        }
    }
}
