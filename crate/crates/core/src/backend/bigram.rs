use std::collections::{BTreeMap, HashMap};

use super::{BackendMeta, LmBackend, MaskCandidate, MaskQuery, NextTokenDist};
use crate::error::{Error, Result};
use crate::DEFAULT_MASK;

const START: &str = "<s>";
const UNK: &str = "<unk>";

/// Add-k smoothed bigram generator fitted on a token corpus.
///
/// Stands in for a fine-tuned response generator when ablation cells run
/// at desk scale: each cell fits one on its own training corpus, so the
/// synthetic data actually changes what gets generated and scored.
/// Only next-token and scoring capabilities are provided.
#[derive(Debug, Clone)]
pub struct BigramBackend {
    vocab: Vec<String>,
    counts: HashMap<String, BTreeMap<String, u64>>,
    totals: HashMap<String, u64>,
    add_k: f64,
    eos: String,
}

impl BigramBackend {
    pub fn fit<S: AsRef<[String]>>(corpus: &[S], eos: &str, add_k: f64) -> Result<Self> {
        if add_k.is_nan() || add_k <= 0.0 {
            return Err(Error::InvalidConfig(format!("add_k must be positive, got {add_k}")));
        }
        let mut vocab: Vec<String> = vec![eos.to_string(), UNK.to_string()];
        let mut counts: HashMap<String, BTreeMap<String, u64>> = HashMap::new();
        let mut totals: HashMap<String, u64> = HashMap::new();
        for seq in corpus {
            let mut prev = START.to_string();
            for tok in seq.as_ref() {
                *counts.entry(prev.clone()).or_default().entry(tok.clone()).or_default() += 1;
                *totals.entry(prev).or_default() += 1;
                vocab.push(tok.clone());
                prev = tok.clone();
            }
        }
        vocab.sort();
        vocab.dedup();
        Ok(Self { vocab, counts, totals, add_k, eos: eos.to_string() })
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    fn prob(&self, prev: &str, tok: &str) -> f64 {
        let v = self.vocab.len() as f64;
        let c = self.counts.get(prev).and_then(|row| row.get(tok)).copied().unwrap_or(0) as f64;
        let total = self.totals.get(prev).copied().unwrap_or(0) as f64;
        (c + self.add_k) / (total + self.add_k * v)
    }

    fn known(&self, tok: &str) -> bool {
        self.vocab.binary_search_by(|t| t.as_str().cmp(tok)).is_ok()
    }
}

impl LmBackend for BigramBackend {
    fn meta(&self) -> Result<BackendMeta> {
        Ok(BackendMeta {
            embed_dim: 0,
            max_len: 1 << 20,
            scores_first_token: false,
            eos: self.eos.clone(),
            mask: DEFAULT_MASK.to_string(),
        })
    }

    fn mask_fill(&self, _query: &MaskQuery, _top_k: usize) -> Result<Vec<MaskCandidate>> {
        Err(Error::Unsupported("mask_fill"))
    }

    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(tokens
            .windows(2)
            .map(|w| {
                let prev = if self.known(&w[0]) { w[0].as_str() } else { UNK };
                let tok = if self.known(&w[1]) { w[1].as_str() } else { UNK };
                self.prob(prev, tok).ln()
            })
            .collect())
    }

    fn next_token(&self, tokens: &[String], top_k: usize) -> Result<NextTokenDist> {
        let prev = match tokens.last() {
            None => START,
            Some(t) if self.known(t) => t.as_str(),
            Some(_) => UNK,
        };
        let pairs = self
            .vocab
            .iter()
            .filter(|t| t.as_str() != UNK)
            .map(|t| (t.clone(), self.prob(prev, t)))
            .collect::<Vec<_>>();
        // renormalize after dropping <unk> so the distribution sums to one
        let z: f64 = pairs.iter().map(|(_, p)| p).sum();
        Ok(NextTokenDist::from_probs(pairs.into_iter().map(|(t, p)| (t, p / z)).collect(), top_k))
    }

    fn embed(&self, _tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        Err(Error::Unsupported("embed"))
    }
}
