//! Seeded splitting and fixed-length conversation windows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Conversation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub seed: u64,
    /// Share of the corpus for the response generator.
    pub frac_generator: f64,
    /// Share of the corpus for fine-tuning the mask filler.
    pub frac_masklm: f64,
    /// Share of the generator pool held out for mask-filler evaluation.
    pub frac_masklm_eval: f64,
    pub frac_train: f64,
    pub frac_test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            frac_generator: 0.97,
            frac_masklm: 0.03,
            frac_masklm_eval: 0.05,
            frac_train: 0.80,
            frac_test: 0.20,
        }
    }
}

const FRAC_EPS: f64 = 1e-9;

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let fracs = [
            ("frac_generator", self.frac_generator),
            ("frac_masklm", self.frac_masklm),
            ("frac_masklm_eval", self.frac_masklm_eval),
            ("frac_train", self.frac_train),
            ("frac_test", self.frac_test),
        ];
        for (name, f) in fracs {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("{name} = {f} is outside [0, 1]")));
            }
        }
        if (self.frac_generator + self.frac_masklm - 1.0).abs() > FRAC_EPS {
            return Err(Error::InvalidConfig("frac_generator + frac_masklm must equal 1".into()));
        }
        if (self.frac_train + self.frac_test - 1.0).abs() > FRAC_EPS {
            return Err(Error::InvalidConfig("frac_train + frac_test must equal 1".into()));
        }
        Ok(())
    }
}

/// The four disjoint parts of a split corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub masklm_finetune: Vec<Conversation>,
    pub masklm_eval: Vec<Conversation>,
    pub gen_train: Vec<Conversation>,
    pub gen_test: Vec<Conversation>,
}

impl DatasetBundle {
    /// File stems used when a bundle is written to a directory.
    pub const PARTS: [&'static str; 4] = ["masklm_finetune", "masklm_eval", "gen_train", "gen_test"];

    pub fn parts(&self) -> [&[Conversation]; 4] {
        [&self.masklm_finetune, &self.masklm_eval, &self.gen_train, &self.gen_test]
    }

    pub fn total(&self) -> usize {
        self.parts().iter().map(|p| p.len()).sum()
    }
}

/// Splits `n` items by `fracs`: floor of each share, remainder to the
/// largest share (first one on ties).
pub fn partition_counts(n: usize, fracs: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = fracs.iter().map(|f| (f * n as f64 + FRAC_EPS).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    if let Some(largest) = fracs
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &f)| match best {
            Some((_, bf)) if bf >= f => best,
            _ => Some((i, f)),
        })
        .map(|(i, _)| i)
    {
        counts[largest] += n.saturating_sub(assigned);
    }
    counts
}

/// Deterministic shuffle under `cfg.seed`, then the 97/3 split, the 5%
/// hold-out carved from the generator pool, and 80/20 on what remains.
pub fn split(conversations: &[Conversation], cfg: &SplitConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    if conversations.len() < 4 {
        return Err(Error::TooFewItems { needed: 4, got: conversations.len() });
    }
    let mut shuffled = conversations.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));

    let top = partition_counts(shuffled.len(), &[cfg.frac_generator, cfg.frac_masklm]);
    let masklm_finetune = shuffled.split_off(top[0]);
    let mut generator = shuffled;

    let held = partition_counts(generator.len(), &[cfg.frac_masklm_eval, 1.0 - cfg.frac_masklm_eval]);
    let remainder = generator.split_off(held[0]);
    let masklm_eval = generator;

    let tt = partition_counts(remainder.len(), &[cfg.frac_train, cfg.frac_test]);
    let mut gen_train = remainder;
    let gen_test = gen_train.split_off(tt[0]);

    Ok(DatasetBundle { masklm_finetune, masklm_eval, gen_train, gen_test })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub turns: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { turns: 4 }
    }
}

impl WindowConfig {
    pub fn new(turns: usize) -> Result<Self> {
        if turns < 2 {
            return Err(Error::InvalidConfig(format!("window needs at least 2 turns, got {turns}")));
        }
        Ok(Self { turns })
    }
}

/// All contiguous `turns`-long windows of a conversation, in order. Windows
/// that would span a filtered-out utterance are dropped.
pub fn extract_windows(conversation: &Conversation, cfg: &WindowConfig) -> Vec<Conversation> {
    let n = cfg.turns;
    if conversation.len() < n {
        return Vec::new();
    }
    conversation
        .utterances
        .windows(n)
        .enumerate()
        .filter(|(_, w)| w.iter().all(|u| !u.is_filtered()))
        .map(|(start, w)| Conversation::new(format!("{}@{start}", conversation.origin), w.to_vec()))
        .collect()
}

pub fn extract_all_windows(conversations: &[Conversation], cfg: &WindowConfig) -> Vec<Conversation> {
    conversations
        .par_iter()
        .map(|c| extract_windows(c, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Generator input and expected output for one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub context: Vec<String>,
    pub target: Vec<String>,
}

/// Context is every turn but the last, each followed by `eos`; target is
/// the last turn followed by `eos`.
pub fn build_training_pair(window: &Conversation, turns: usize, eos: &str) -> Result<TrainingPair> {
    if window.len() != turns {
        return Err(Error::WindowLength { expected: turns, got: window.len() });
    }
    let (last, rest) = window.utterances.split_last().ok_or(Error::WindowLength { expected: turns, got: 0 })?;
    let mut context = Vec::new();
    for u in rest {
        context.extend(u.surface());
        context.push(eos.to_string());
    }
    let mut target = last.surface();
    target.push(eos.to_string());
    Ok(TrainingPair { context, target })
}
