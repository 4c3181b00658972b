//! Glue between windows, the decoder and evaluation, shared by the CLI and
//! the Python bindings.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::LmBackend;
use crate::dataset::{build_training_pair, extract_all_windows, WindowConfig};
use crate::decoder::{generate, DecodeConfig};
use crate::error::{Error, Result};
use crate::ingest::{Conversation, Utterance};
use crate::metrics::ScoredPair;
use crate::text::join_tokens;

/// One generated response, keyed by the origin of the window it answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub origin: String,
    pub context: Vec<String>,
    pub response: String,
    pub tokens: Vec<String>,
    pub cum_logprob: f64,
    pub score: f64,
    pub truncated: bool,
}

/// Each turn's surface tokens followed by `eos`.
pub fn context_tokens(turns: &[Utterance], eos: &str) -> Vec<String> {
    let mut out = Vec::new();
    for u in turns {
        out.extend(u.surface());
        out.push(eos.to_string());
    }
    out
}

/// Windows every conversation and answers the first `turns - 1` utterances
/// of each window. A conversation of exactly `turns - 1` utterances is
/// answered as a whole.
pub fn generate_responses(
    conversations: &[Conversation],
    window: &WindowConfig,
    decode: &DecodeConfig,
    backend: &dyn LmBackend,
) -> Result<Vec<ResponseRecord>> {
    let mut jobs: Vec<(String, Vec<String>)> = Vec::new();
    for c in conversations {
        if c.len() + 1 == window.turns && c.is_complete() {
            jobs.push((c.origin.clone(), context_tokens(&c.utterances, &decode.eos)));
        }
    }
    for w in extract_all_windows(conversations, window) {
        let pair = build_training_pair(&w, window.turns, &decode.eos)?;
        jobs.push((w.origin, pair.context));
    }
    jobs.par_iter()
        .map(|(origin, context)| {
            let out = generate(context, decode, backend)?;
            let response = join_tokens(&out.tokens);
            Ok(ResponseRecord {
                origin: origin.clone(),
                context: context.clone(),
                response,
                tokens: out.tokens,
                cum_logprob: out.cum_logprob,
                score: out.score,
                truncated: out.truncated,
            })
        })
        .collect()
}

/// Matches responses to the last turn of the reference windows with the
/// same origin.
pub fn pair_with_references(
    responses: &[ResponseRecord],
    references: &[Conversation],
    window: &WindowConfig,
    eos: &str,
) -> Result<Vec<ScoredPair>> {
    let windows: HashMap<String, Conversation> =
        extract_all_windows(references, window).into_iter().map(|w| (w.origin.clone(), w)).collect();
    responses
        .iter()
        .map(|r| {
            let w = windows
                .get(&r.origin)
                .ok_or_else(|| Error::InvalidConfig(format!("no reference window for {:?}", r.origin)))?;
            let pair = build_training_pair(w, window.turns, eos)?;
            let mut reference = pair.target;
            reference.pop();
            Ok(ScoredPair { context: pair.context, hypothesis: r.tokens.clone(), reference })
        })
        .collect()
}
