use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sort_candidates, BackendMeta, LmBackend, MaskCandidate, MaskQuery, NextTokenDist};
use crate::error::{Error, Result};
use crate::hashing::{hash_tokens, unit_interval};
use crate::{DEFAULT_EOS, DEFAULT_MASK};

/// Next-token behaviour of the mock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextTokenModel {
    /// Uniform over the vocabulary; every scored token gets `ln(1/|V|)`.
    Uniform,
    /// Probability 1 on `chain[last token]` (key `""` for an empty prefix),
    /// EOS when absent; every scored token gets 0.
    Certain { chain: BTreeMap<String, String> },
    /// Distribution conditioned on the last token (key `""` for an empty
    /// prefix); uniform for unknown keys. Rows are normalized on load.
    Bigram { table: BTreeMap<String, Vec<(String, f64)>> },
    /// Pseudo-random distribution keyed on the full prefix:
    /// `p(t) ∝ exp(sharpness · u(seed, prefix, t))` with `u` uniform in [0, 1).
    Hashed { seed: u64, sharpness: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskFallback {
    /// The same candidate list for every query.
    Constant { candidates: Vec<MaskCandidate> },
    /// Vocabulary tokens scored by a hash of (seed, left neighbour, right neighbour, token).
    Hashed { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingModel {
    /// Unit vector on the token's vocabulary index; zero vector for unknown tokens.
    OneHot,
    /// Hash-seeded unit vectors of dimension `dim`.
    Hashed { dim: usize, seed: u64 },
}

/// `pattern` is a space-separated token pattern with `_` at the mask
/// position, e.g. `"b _ d"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRule {
    pub pattern: String,
    pub candidates: Vec<MaskCandidate>,
}

impl MaskRule {
    pub fn new(pattern: impl Into<String>, candidates: Vec<MaskCandidate>) -> Self {
        Self { pattern: pattern.into(), candidates }
    }

    fn matches(&self, query: &MaskQuery) -> bool {
        let parts: Vec<&str> = self.pattern.split_whitespace().collect();
        let Some(hole) = parts.iter().position(|p| *p == "_") else {
            return false;
        };
        let Some(start) = query.mask_index.checked_sub(hole) else {
            return false;
        };
        if start + parts.len() > query.tokens.len() {
            return false;
        }
        parts.iter().enumerate().all(|(j, p)| j == hole || query.tokens[start + j] == *p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub vocab: Vec<String>,
    pub eos: String,
    pub mask: String,
    pub max_len: usize,
    pub scores_first_token: bool,
    pub mask_rules: Vec<MaskRule>,
    pub mask_fallback: MaskFallback,
    pub next_token: NextTokenModel,
    pub embedding: EmbeddingModel,
    /// Log-probability given to tokens the next-token model assigns no mass.
    pub oov_logprob: f64,
}

const DEFAULT_VOCAB: &[&str] = &[
    "ang", "ng", "sa", "na", "ay", "mga", "ko", "mo", "ka", "ako", "siya", "kami", "po", "oo", "hindi",
    "talaga", "masarap", "maganda", "bahay", "pagkain", "kumain", "luto", "salamat", "kaibigan",
    "lugar", "bakasyon", "sobrang", "gusto", "pwede", "subukan", "ganda", "tingnan", ".", "?", ",", "!",
];

impl Default for MockConfig {
    fn default() -> Self {
        let mut vocab: Vec<String> = DEFAULT_VOCAB.iter().map(|s| s.to_string()).collect();
        vocab.push(DEFAULT_EOS.to_string());
        Self {
            vocab,
            eos: DEFAULT_EOS.to_string(),
            mask: DEFAULT_MASK.to_string(),
            max_len: 1024,
            scores_first_token: false,
            mask_rules: Vec::new(),
            mask_fallback: MaskFallback::Hashed { seed: 11 },
            next_token: NextTokenModel::Hashed { seed: 7, sharpness: 6.0 },
            embedding: EmbeddingModel::Hashed { dim: 32, seed: 13 },
            oov_logprob: (1e-6f64).ln(),
        }
    }
}

impl MockConfig {
    /// A config over `vocab` (EOS appended when missing) with the given next-token model.
    pub fn with_vocab<S: AsRef<str>>(vocab: &[S], next_token: NextTokenModel) -> Self {
        let mut cfg = Self { next_token, ..Self::default() };
        cfg.vocab = vocab.iter().map(|s| s.as_ref().to_string()).collect();
        if !cfg.vocab.contains(&cfg.eos) {
            cfg.vocab.push(cfg.eos.clone());
        }
        cfg
    }
}

/// Deterministic, stateless backend driven by a [`MockConfig`]. Answers are
/// pure functions of the query, so they agree across calls, threads and processes.
#[derive(Debug, Clone)]
pub struct MockBackend {
    cfg: MockConfig,
    index: BTreeMap<String, usize>,
}

impl MockBackend {
    pub fn new(mut cfg: MockConfig) -> Result<Self> {
        if cfg.vocab.is_empty() {
            return Err(Error::InvalidConfig("mock vocabulary is empty".into()));
        }
        let mut index = BTreeMap::new();
        for (i, t) in cfg.vocab.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary token {t:?}")));
            }
        }
        if let NextTokenModel::Bigram { table } = &mut cfg.next_token {
            for (key, row) in table.iter_mut() {
                let total: f64 = row.iter().map(|(_, p)| *p).sum();
                if total.is_nan() || total <= 0.0 || row.iter().any(|(_, p)| *p < 0.0) {
                    return Err(Error::InvalidConfig(format!("bigram row {key:?} is not a distribution")));
                }
                if let Some((t, _)) = row.iter().find(|(t, _)| !index.contains_key(t)) {
                    return Err(Error::InvalidConfig(format!("bigram token {t:?} not in vocabulary")));
                }
                for (_, p) in row.iter_mut() {
                    *p /= total;
                }
            }
        }
        if let EmbeddingModel::Hashed { dim: 0, .. } = cfg.embedding {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        Ok(Self { cfg, index })
    }

    pub fn config(&self) -> &MockConfig {
        &self.cfg
    }

    fn embed_dim(&self) -> usize {
        match self.cfg.embedding {
            EmbeddingModel::OneHot => self.cfg.vocab.len(),
            EmbeddingModel::Hashed { dim, .. } => dim,
        }
    }

    /// Full next-token distribution as (token, probability), zero-mass tokens omitted.
    fn distribution(&self, prefix: &[String]) -> Vec<(String, f64)> {
        let vocab = &self.cfg.vocab;
        let uniform = || {
            let p = 1.0 / vocab.len() as f64;
            vocab.iter().map(|t| (t.clone(), p)).collect()
        };
        match &self.cfg.next_token {
            NextTokenModel::Uniform => uniform(),
            NextTokenModel::Certain { chain } => {
                let key = prefix.last().map(String::as_str).unwrap_or("");
                let next = chain.get(key).cloned().unwrap_or_else(|| self.cfg.eos.clone());
                vec![(next, 1.0)]
            }
            NextTokenModel::Bigram { table } => {
                let key = prefix.last().map(String::as_str).unwrap_or("");
                match table.get(key) {
                    Some(row) => row.iter().filter(|(_, p)| *p > 0.0).cloned().collect(),
                    None => uniform(),
                }
            }
            NextTokenModel::Hashed { seed, sharpness } => {
                let h = hash_tokens(*seed, prefix);
                let logits: Vec<f64> =
                    vocab.iter().map(|t| sharpness * unit_interval(hash_tokens(h, &[t]))).collect();
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = weights.iter().sum();
                vocab.iter().cloned().zip(weights.into_iter().map(|w| w / z)).collect()
            }
        }
    }

    fn hashed_unit_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_tokens(seed, &[token]));
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl LmBackend for MockBackend {
    fn meta(&self) -> Result<BackendMeta> {
        Ok(BackendMeta {
            embed_dim: self.embed_dim(),
            max_len: self.cfg.max_len,
            scores_first_token: self.cfg.scores_first_token,
            eos: self.cfg.eos.clone(),
            mask: self.cfg.mask.clone(),
        })
    }

    fn mask_fill(&self, query: &MaskQuery, top_k: usize) -> Result<Vec<MaskCandidate>> {
        self.meta()?.check_len(query.tokens.len())?;
        query.validate(&self.cfg.mask)?;
        let mut candidates = match self.cfg.mask_rules.iter().find(|r| r.matches(query)) {
            Some(rule) => rule.candidates.clone(),
            None => match &self.cfg.mask_fallback {
                MaskFallback::Constant { candidates } => candidates.clone(),
                MaskFallback::Hashed { seed } => {
                    let i = query.mask_index;
                    let left = if i > 0 { query.tokens[i - 1].as_str() } else { "" };
                    let right = query.tokens.get(i + 1).map(String::as_str).unwrap_or("");
                    let h = hash_tokens(*seed, &[left, right]);
                    self.cfg
                        .vocab
                        .iter()
                        .filter(|t| **t != self.cfg.eos && **t != self.cfg.mask)
                        .map(|t| MaskCandidate::new(t.clone(), unit_interval(hash_tokens(h, &[t]))))
                        .collect()
                }
            },
        };
        sort_candidates(&mut candidates);
        if top_k > 0 {
            candidates.truncate(top_k);
        }
        Ok(candidates)
    }

    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        self.meta()?.check_len(tokens.len())?;
        let start = if self.cfg.scores_first_token { 0 } else { 1 };
        let positions = start..tokens.len();
        let out = match &self.cfg.next_token {
            NextTokenModel::Uniform => positions.map(|_| -(self.cfg.vocab.len() as f64).ln()).collect(),
            NextTokenModel::Certain { .. } => positions.map(|_| 0.0).collect(),
            _ => positions
                .map(|i| {
                    self.distribution(&tokens[..i])
                        .into_iter()
                        .find(|(t, _)| *t == tokens[i])
                        .map(|(_, p)| p.ln())
                        .unwrap_or(self.cfg.oov_logprob)
                })
                .collect(),
        };
        Ok(out)
    }

    fn next_token(&self, tokens: &[String], top_k: usize) -> Result<NextTokenDist> {
        self.meta()?.check_len(tokens.len())?;
        Ok(NextTokenDist::from_probs(self.distribution(tokens), top_k))
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        self.meta()?.check_len(tokens.len())?;
        let out = match self.cfg.embedding {
            EmbeddingModel::OneHot => tokens
                .iter()
                .map(|t| {
                    let mut v = vec![0.0; self.cfg.vocab.len()];
                    if let Some(&i) = self.index.get(t) {
                        v[i] = 1.0;
                    }
                    v
                })
                .collect(),
            EmbeddingModel::Hashed { dim, seed } => {
                tokens.iter().map(|t| Self::hashed_unit_vector(t, dim, seed)).collect()
            }
        };
        Ok(out)
    }
}
