//! Beam-search response generation with a hard no-repeat-trigram block.
//!
//! Live hypotheses are ranked by cumulative log-probability. At every step
//! all extensions of all live beams are pooled, the best `beam_width` are
//! kept, and those ending in EOS or reaching `max_new_tokens` move to the
//! finished pool. The returned hypothesis is the finished one with the
//! highest log-probability per generated token (EOS included in the count).
//!
//! An extension that would repeat a trigram already present in
//! context ⧺ hypothesis gets probability zero. EOS is never blocked.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::backend::LmBackend;
use crate::error::{Error, Result};
use crate::DEFAULT_EOS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub max_new_tokens: usize,
    pub trigram_block: bool,
    pub eos: String,
    /// Next-token candidates requested per beam; 0 asks for the full vocabulary.
    pub candidates_per_beam: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_width: 5,
            max_new_tokens: 64,
            trigram_block: true,
            eos: DEFAULT_EOS.to_string(),
            candidates_per_beam: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam_width must be at least 1".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::InvalidConfig("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    /// Generated tokens, including a trailing EOS when finished by one.
    pub tokens: Vec<String>,
    pub cum_logprob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    /// Cumulative log-probability per generated token.
    pub fn normalized_score(&self) -> f64 {
        self.cum_logprob / self.tokens.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    /// The response without its EOS.
    pub tokens: Vec<String>,
    pub cum_logprob: f64,
    pub score: f64,
    /// No hypothesis finished; this is the best one that ran out of options.
    pub truncated: bool,
}

/// True when some trigram occurs at least twice.
pub fn has_repeat_trigram<S: AsRef<str> + Eq + std::hash::Hash>(tokens: &[S]) -> bool {
    let mut seen = HashSet::new();
    tokens.windows(3).any(|w| !seen.insert((&w[0], &w[1], &w[2])))
}

/// Tokens that would complete a trigram already present in `seq`.
pub fn blocked_next_tokens(seq: &[String]) -> HashSet<&str> {
    let n = seq.len();
    if n < 2 {
        return HashSet::new();
    }
    let (x, y) = (&seq[n - 2], &seq[n - 1]);
    seq.windows(3).filter(|w| &w[0] == x && &w[1] == y).map(|w| w[2].as_str()).collect()
}

/// Orders by descending `key`, then lexicographically by tokens.
fn rank(a_key: f64, a: &[String], b_key: f64, b: &[String]) -> Ordering {
    b_key.total_cmp(&a_key).then_with(|| a.cmp(b))
}

/// Beam search from `context`. Returns the best finished hypothesis.
pub fn generate(context: &[String], cfg: &DecodeConfig, backend: &dyn LmBackend) -> Result<DecodeOutput> {
    cfg.validate()?;
    let mut live = vec![BeamHypothesis { tokens: Vec::new(), cum_logprob: 0.0, finished: false }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();
    let mut stranded: Vec<BeamHypothesis> = Vec::new();

    for _ in 0..cfg.max_new_tokens {
        let mut pool: Vec<BeamHypothesis> = Vec::new();
        for hyp in &live {
            let mut seq = context.to_vec();
            seq.extend(hyp.tokens.iter().cloned());
            let dist = backend.next_token(&seq, cfg.candidates_per_beam).map_err(|e| Error::Decode(Box::new(e)))?;
            let blocked = if cfg.trigram_block { blocked_next_tokens(&seq) } else { HashSet::new() };
            let before = pool.len();
            for (tok, lp) in dist.iter() {
                if !lp.is_finite() || (tok != cfg.eos && blocked.contains(tok)) {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok.to_string());
                pool.push(BeamHypothesis { tokens, cum_logprob: hyp.cum_logprob + lp, finished: false });
            }
            if pool.len() == before {
                stranded.push(hyp.clone());
            }
        }
        pool.sort_by(|a, b| rank(a.cum_logprob, &a.tokens, b.cum_logprob, &b.tokens));
        pool.truncate(cfg.beam_width);

        live.clear();
        for mut hyp in pool {
            let ended = hyp.tokens.last().is_some_and(|t| *t == cfg.eos);
            if ended || hyp.tokens.len() == cfg.max_new_tokens {
                hyp.finished = true;
                finished.push(hyp);
            } else {
                live.push(hyp);
            }
        }
        if live.is_empty() {
            break;
        }
    }

    let best_of = |hyps: Vec<BeamHypothesis>| {
        hyps.into_iter()
            .min_by(|a, b| rank(a.normalized_score(), &a.tokens, b.normalized_score(), &b.tokens))
    };
    let (best, truncated) = match best_of(finished) {
        Some(h) => (h, false),
        None => {
            stranded.extend(live);
            match best_of(stranded) {
                Some(h) => (h, true),
                None => return Err(Error::Decode(Box::new(Error::Backend("no hypotheses".into())))),
            }
        }
    };
    let score = best.normalized_score();
    let mut tokens = best.tokens;
    if tokens.last().is_some_and(|t| *t == cfg.eos) {
        tokens.pop();
    }
    Ok(DecodeOutput { tokens, cum_logprob: best.cum_logprob, score, truncated })
}
