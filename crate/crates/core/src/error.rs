use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("thread {thread_id}: reply graph contains a cycle through post {post_id}")]
    CyclicThread { thread_id: String, post_id: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("sequence of {len} tokens exceeds backend context window of {max_len}")]
    ContextOverflow { len: usize, max_len: usize },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("backend does not support {0}")]
    Unsupported(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },

    #[error("expected a window of {expected} utterances, got {got}")]
    WindowLength { expected: usize, got: usize },

    #[error("cannot select {n} indices from a sequence of length {length}")]
    IndexCount { n: usize, length: usize },

    #[error("non-finite log-probability in sequence {sequence}")]
    NonFiniteLogprob { sequence: usize },

    #[error("zero-norm embedding for {side} token {index}")]
    ZeroNorm { side: &'static str, index: usize },

    #[error("conversation {conversation} ({origin}), utterance {utterance}: {source}")]
    Augment {
        conversation: usize,
        origin: String,
        utterance: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("decode error: {0}")]
    Decode(Box<Error>),

    #[error("no baseline record for size {0}")]
    MissingBaseline(String),
}
