//! The language-model capability contract and its implementations.
//!
//! Every neural capability the pipeline needs (mask filling, token scoring,
//! next-token distributions and token embeddings) goes through
//! [`LmBackend`]. [`MockBackend`] is a deterministic stand-in used by tests
//! and desk-scale runs, [`HttpBackend`] talks to any service implementing
//! the wire protocol in [`protocol`], and [`serve`] exposes any backend
//! over that protocol.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod bigram;
mod http;
mod mock;
pub mod protocol;
mod server;

pub use bigram::BigramBackend;
pub use http::HttpBackend;
pub use mock::{EmbeddingModel, MaskFallback, MaskRule, MockBackend, MockConfig, NextTokenModel};
pub use server::{serve, ServerHandle};

/// Handshake metadata. `scores_first_token` declares the log-probability
/// factorization: when false, `token_logprobs` returns one value fewer than
/// its input (position 0 has no prefix to condition on).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackendMeta {
    pub embed_dim: usize,
    pub max_len: usize,
    pub scores_first_token: bool,
    pub eos: String,
    pub mask: String,
}

impl BackendMeta {
    /// Number of values `token_logprobs` returns for a sequence of `len` tokens.
    pub fn scored_len(&self, len: usize) -> usize {
        if self.scores_first_token {
            len
        } else {
            len.saturating_sub(1)
        }
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len > self.max_len {
            return Err(Error::ContextOverflow { len, max_len: self.max_len });
        }
        Ok(())
    }
}

/// A token sequence with exactly one mask sentinel at `mask_index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskQuery {
    pub tokens: Vec<String>,
    pub mask_index: usize,
}

impl MaskQuery {
    /// Copies `tokens` with position `index` replaced by `mask`.
    pub fn masking(tokens: &[String], index: usize, mask: &str) -> Result<Self> {
        if index >= tokens.len() {
            return Err(Error::Protocol(format!("mask index {index} out of bounds for {} tokens", tokens.len())));
        }
        let mut masked = tokens.to_vec();
        masked[index] = mask.to_string();
        let q = Self { tokens: masked, mask_index: index };
        q.validate(mask)?;
        Ok(q)
    }

    pub fn validate(&self, mask: &str) -> Result<()> {
        let count = self.tokens.iter().filter(|t| *t == mask).count();
        if count != 1 {
            return Err(Error::Protocol(format!("expected exactly one {mask} sentinel, found {count}")));
        }
        if self.tokens.get(self.mask_index).map(String::as_str) != Some(mask) {
            return Err(Error::Protocol(format!("mask_index {} does not point at the sentinel", self.mask_index)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskCandidate {
    pub token: String,
    pub score: f64,
}

impl MaskCandidate {
    pub fn new(token: impl Into<String>, score: f64) -> Self {
        Self { token: token.into(), score }
    }
}

/// Orders candidates by descending score, ties by token.
pub fn sort_candidates(candidates: &mut [MaskCandidate]) {
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
}

/// A (possibly truncated) next-token distribution as parallel lists,
/// sorted by descending log-probability.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NextTokenDist {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

impl NextTokenDist {
    /// Builds a sorted distribution from (token, probability) pairs,
    /// keeping the `top_k` most likely (all when `top_k` is 0).
    pub fn from_probs(mut pairs: Vec<(String, f64)>, top_k: usize) -> Self {
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if top_k > 0 {
            pairs.truncate(top_k);
        }
        let (tokens, probs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Self { tokens, logprobs: probs.into_iter().map(f64::ln).collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.tokens.iter().map(String::as_str).zip(self.logprobs.iter().copied())
    }

    pub fn total_prob(&self) -> f64 {
        self.logprobs.iter().map(|l| l.exp()).sum()
    }
}

/// Capabilities the pipeline needs from a language model.
pub trait LmBackend: Send + Sync {
    fn meta(&self) -> Result<BackendMeta>;

    /// At most `top_k` candidates for the masked position, best first.
    fn mask_fill(&self, query: &MaskQuery, top_k: usize) -> Result<Vec<MaskCandidate>>;

    /// Natural-log probability of each scored token (see [`BackendMeta::scored_len`]).
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>>;

    /// Distribution of the token following `tokens`; `top_k == 0` asks for the full vocabulary.
    fn next_token(&self, tokens: &[String], top_k: usize) -> Result<NextTokenDist>;

    /// One vector per input token, all of dimension `meta().embed_dim`.
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>>;
}

impl<B: LmBackend + ?Sized> LmBackend for Arc<B> {
    fn meta(&self) -> Result<BackendMeta> {
        (**self).meta()
    }
    fn mask_fill(&self, query: &MaskQuery, top_k: usize) -> Result<Vec<MaskCandidate>> {
        (**self).mask_fill(query, top_k)
    }
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        (**self).token_logprobs(tokens)
    }
    fn next_token(&self, tokens: &[String], top_k: usize) -> Result<NextTokenDist> {
        (**self).next_token(tokens, top_k)
    }
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        (**self).embed(tokens)
    }
}

/// Resolves a backend locator: `mock`, `mock:<config.json>` or an `http(s)://` base URL.
pub fn open_backend(locator: &str) -> Result<Arc<dyn LmBackend>> {
    if locator == "mock" {
        return Ok(Arc::new(MockBackend::new(MockConfig::default())?));
    }
    if let Some(path) = locator.strip_prefix("mock:") {
        let cfg: MockConfig = serde_json::from_slice(&std::fs::read(Path::new(path))?)?;
        return Ok(Arc::new(MockBackend::new(cfg)?));
    }
    if locator.starts_with("http://") || locator.starts_with("https://") {
        return Ok(Arc::new(HttpBackend::new(locator)));
    }
    Err(Error::InvalidConfig(format!("unrecognised backend locator {locator:?}")))
}
