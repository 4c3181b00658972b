//! Conversation dataset construction, masked-LM token-replacement augmentation,
//! beam-search response generation and evaluation.
//!
//! The pipeline runs ingest → split → window → augment → merge → generate → eval.
//! All model work goes through the [`backend::LmBackend`] contract, so the whole
//! pipeline runs deterministically against [`backend::MockBackend`] and against
//! any HTTP service speaking the same wire protocol.

pub mod ablation;
pub mod augment;
pub mod backend;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod ingest;
pub mod jsonl;
pub mod metrics;
pub mod pipeline;
pub mod text;

mod hashing;

pub use augment::{AugmentationConfig, AugmentMode, Provenance, TaggedConversation};
pub use backend::{BackendMeta, LmBackend, MaskCandidate, MaskQuery, MockBackend, NextTokenDist};
pub use dataset::{DatasetBundle, SplitConfig, WindowConfig};
pub use decoder::{DecodeConfig, DecodeOutput};
pub use error::{Error, Result};
pub use ingest::{Conversation, RawPost, ThreadTree, Utterance};
pub use metrics::{EvalReport, MatchScore, WordClassCounts};

/// Default end-of-sequence sentinel shared by windowing, decoding and the wire protocol.
pub const DEFAULT_EOS: &str = "<|endoftext|>";
/// Default mask sentinel.
pub const DEFAULT_MASK: &str = "<mask>";
