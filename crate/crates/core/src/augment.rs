//! Synthetic utterances by percentage-controlled masked-token replacement.
//!
//! For an utterance of `len` surface tokens, `ceil(p * len)` positions are
//! drawn without replacement from a per-utterance random stream. Each
//! position is masked and sent to the backend, and the best-scoring
//! candidate replaces the original token. In [`AugmentMode::Independent`]
//! every query sees the original sequence and the predictions are merged
//! at the end; in [`AugmentMode::Cascading`] each query sees the earlier
//! replacements.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{LmBackend, MaskCandidate, MaskQuery};
use crate::error::{Error, Result};
use crate::hashing::hash_tokens;
use crate::ingest::{Conversation, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    #[default]
    Independent,
    Cascading,
}

impl FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Self::Independent),
            "cascading" => Ok(Self::Cascading),
            other => Err(Error::InvalidConfig(format!("unknown augmentation mode {other:?}"))),
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Independent => "independent",
            Self::Cascading => "cascading",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Fraction of each utterance's tokens to replace, in [0, 1].
    pub percentage: f64,
    pub master_seed: u64,
    pub mode: AugmentMode,
    /// Candidates requested per mask.
    pub top_k: usize,
    /// Take the best candidate that differs from the original token.
    pub forbid_identity: bool,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    /// Pass an utterance through unchanged when the backend keeps failing.
    pub skip_on_error: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            percentage: 0.10,
            master_seed: 42,
            mode: AugmentMode::Independent,
            top_k: 5,
            forbid_identity: false,
            retries: 2,
            skip_on_error: false,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.percentage) {
            return Err(Error::InvalidConfig(format!("percentage {} is outside [0, 1]", self.percentage)));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// `ceil(p * length)`, clamped to `length`. Products within 1e-9 of an
/// integer count as that integer, so `0.3 * 10` gives 3 and not 4.
pub fn replacement_count(p: f64, length: usize) -> usize {
    if length == 0 || p <= 0.0 {
        return 0;
    }
    let x = p * length as f64;
    let nearest = x.round();
    let n = if (x - nearest).abs() <= 1e-9 * x.max(1.0) { nearest } else { x.ceil() };
    (n as usize).min(length)
}

/// `n` distinct positions in `0..length`, in sampling order.
pub fn select_indices(length: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n > length {
        return Err(Error::IndexCount { n, length });
    }
    Ok(index::sample(rng, length, n).into_vec())
}

/// The random stream for one utterance, independent of every other item.
pub fn utterance_rng(master_seed: u64, conversation: usize, utterance: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(hash_tokens(master_seed, &[conversation.to_string(), utterance.to_string()]));
    rng
}

/// Highest score wins, ties go to the lexicographically smaller token.
/// `None` when every candidate is excluded.
pub fn choose_candidate(candidates: &[MaskCandidate], original: &str, forbid_identity: bool) -> Option<String> {
    candidates
        .iter()
        .filter(|c| !(forbid_identity && c.token == original))
        .min_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)))
        .map(|c| c.token.clone())
}

struct Augmenter<'a> {
    backend: &'a dyn LmBackend,
    cfg: &'a AugmentationConfig,
    mask: String,
}

impl<'a> Augmenter<'a> {
    fn new(backend: &'a dyn LmBackend, cfg: &'a AugmentationConfig) -> Result<Self> {
        cfg.validate()?;
        let mask = backend.meta()?.mask;
        Ok(Self { backend, cfg, mask })
    }

    fn fill(&self, tokens: &[String], index: usize) -> Result<Option<String>> {
        let query = MaskQuery::masking(tokens, index, &self.mask)?;
        let mut attempt = 0;
        let candidates = loop {
            match self.backend.mask_fill(&query, self.cfg.top_k) {
                Ok(c) => break c,
                Err(Error::Backend(_) | Error::Io(_)) if attempt < self.cfg.retries => attempt += 1,
                Err(e) => return Err(e),
            }
        };
        Ok(choose_candidate(&candidates, &tokens[index], self.cfg.forbid_identity))
    }

    fn replace_at(&self, utterance: &Utterance, indices: &[usize]) -> Result<Utterance> {
        let original = utterance.surface();
        let mut out = utterance.tokens.clone();
        match self.cfg.mode {
            AugmentMode::Independent => {
                let predictions = indices
                    .iter()
                    .map(|&i| self.fill(&original, i).map(|p| (i, p)))
                    .collect::<Result<Vec<_>>>()?;
                for (i, p) in predictions {
                    if let Some(tok) = p {
                        out[i].text = tok;
                    }
                }
            }
            AugmentMode::Cascading => {
                let mut current = original;
                for &i in indices {
                    if let Some(tok) = self.fill(&current, i)? {
                        current[i] = tok.clone();
                        out[i].text = tok;
                    }
                }
            }
        }
        Ok(Utterance::from_tokens(out))
    }

    fn utterance(&self, utterance: &Utterance, rng: &mut ChaCha8Rng) -> Result<Utterance> {
        let len = utterance.tokens.len();
        let n = replacement_count(self.cfg.percentage, len);
        if n == 0 {
            return Ok(utterance.clone());
        }
        let indices = select_indices(len, n, rng)?;
        self.replace_at(utterance, &indices)
    }

    fn conversation(&self, index: usize, conversation: &Conversation) -> Result<Conversation> {
        let mut utterances = Vec::with_capacity(conversation.len());
        for (j, u) in conversation.utterances.iter().enumerate() {
            let mut rng = utterance_rng(self.cfg.master_seed, index, j);
            match self.utterance(u, &mut rng) {
                Ok(a) => utterances.push(a),
                Err(_) if self.cfg.skip_on_error => utterances.push(u.clone()),
                Err(e) => {
                    return Err(Error::Augment {
                        conversation: index,
                        origin: conversation.origin.clone(),
                        utterance: j,
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(Conversation::new(conversation.origin.clone(), utterances))
    }
}

/// Augments one utterance with an explicit random stream.
pub fn augment_utterance(
    utterance: &Utterance,
    cfg: &AugmentationConfig,
    backend: &dyn LmBackend,
    rng: &mut ChaCha8Rng,
) -> Result<Utterance> {
    Augmenter::new(backend, cfg)?.utterance(utterance, rng)
}

/// Replaces exactly the given positions, processed in the given order.
pub fn augment_at_indices(
    utterance: &Utterance,
    indices: &[usize],
    cfg: &AugmentationConfig,
    backend: &dyn LmBackend,
) -> Result<Utterance> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= utterance.tokens.len()) {
        return Err(Error::IndexCount { n: bad + 1, length: utterance.tokens.len() });
    }
    Augmenter::new(backend, cfg)?.replace_at(utterance, indices)
}

/// One synthetic conversation per input, same shape, in input order.
/// Runs on the global rayon pool.
pub fn augment_corpus(
    conversations: &[Conversation],
    cfg: &AugmentationConfig,
    backend: &dyn LmBackend,
) -> Result<Vec<Conversation>> {
    let aug = Augmenter::new(backend, cfg)?;
    conversations
        .par_iter()
        .enumerate()
        .map(|(i, c)| aug.conversation(i, c))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// [`augment_corpus`] on a dedicated pool of `workers` threads.
pub fn augment_corpus_with_workers(
    conversations: &[Conversation],
    cfg: &AugmentationConfig,
    backend: &dyn LmBackend,
    workers: usize,
) -> Result<Vec<Conversation>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
    pool.install(|| augment_corpus(conversations, cfg, backend))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

/// A conversation with its origin in the merged corpus. `pct` is the
/// replacement percentage that produced it (0 for real data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedConversation {
    #[serde(flatten)]
    pub conversation: Conversation,
    pub provenance: Provenance,
    pub pct: f64,
}

impl TaggedConversation {
    pub fn real(conversation: Conversation) -> Self {
        Self { conversation, provenance: Provenance::Real, pct: 0.0 }
    }

    pub fn synthetic(conversation: Conversation, pct: f64) -> Self {
        Self { conversation, provenance: Provenance::Synthetic, pct }
    }
}

/// Originals first, then synthetic conversations, each tagged.
pub fn merge_corpora(original: &[Conversation], synthetic: &[Conversation], pct: f64) -> Vec<TaggedConversation> {
    original
        .iter()
        .cloned()
        .map(TaggedConversation::real)
        .chain(synthetic.iter().cloned().map(|c| TaggedConversation::synthetic(c, pct)))
        .collect()
}
