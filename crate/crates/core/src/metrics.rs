//! Perplexity, embedding-match precision/recall/F1 and word-class counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::LmBackend;
use crate::error::{Error, Result};
use crate::text::is_punctuation_only;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Running negative log-likelihood and token count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PerplexityAccumulator {
    nll: CompensatedSum,
    tokens: usize,
}

impl PerplexityAccumulator {
    pub fn add_logprobs(&mut self, logprobs: &[f64]) {
        for lp in logprobs {
            self.nll.add(-lp);
        }
        self.tokens += logprobs.len();
    }

    pub fn merge(&mut self, other: &PerplexityAccumulator) {
        self.nll.merge(&other.nll);
        self.tokens += other.tokens;
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    /// `exp(nll / N)`; `None` before any token is scored.
    pub fn perplexity(&self) -> Option<f64> {
        (self.tokens > 0).then(|| (self.nll.value() / self.tokens as f64).exp())
    }
}

fn checked_logprobs(backend: &dyn LmBackend, tokens: &[String], sequence: usize) -> Result<Vec<f64>> {
    let lps = backend.token_logprobs(tokens)?;
    if lps.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLogprob { sequence });
    }
    Ok(lps)
}

fn aggregate(parts: Vec<Result<PerplexityAccumulator>>) -> Result<PerplexityAccumulator> {
    let mut total = PerplexityAccumulator::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Accumulated log-likelihood over every token the backend scores.
pub fn score_corpus<S: AsRef<[String]> + Sync>(corpus: &[S], backend: &dyn LmBackend) -> Result<PerplexityAccumulator> {
    let parts = corpus
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut acc = PerplexityAccumulator::default();
            acc.add_logprobs(&checked_logprobs(backend, seq.as_ref(), i)?);
            Ok(acc)
        })
        .collect();
    aggregate(parts)
}

/// Corpus perplexity: `exp(-(1/N) Σ log p)` over all scored tokens.
pub fn perplexity<S: AsRef<[String]> + Sync>(corpus: &[S], backend: &dyn LmBackend) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("perplexity of an empty corpus".into()));
    }
    score_corpus(corpus, backend)?
        .perplexity()
        .ok_or_else(|| Error::InvalidConfig("backend scored no tokens".into()))
}

/// Log-likelihood of each target conditioned on its context: the
/// sequence `context ⧺ target` is scored and only the last `|target|`
/// values are kept.
pub fn score_targets(pairs: &[(Vec<String>, Vec<String>)], backend: &dyn LmBackend) -> Result<PerplexityAccumulator> {
    let parts = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (context, target))| {
            let mut seq = context.clone();
            seq.extend(target.iter().cloned());
            let lps = checked_logprobs(backend, &seq, i)?;
            let keep = target.len().min(lps.len());
            let mut acc = PerplexityAccumulator::default();
            acc.add_logprobs(&lps[lps.len() - keep..]);
            Ok(acc)
        })
        .collect();
    aggregate(parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn norms(vectors: &[Vec<f64>], side: &'static str) -> Result<Vec<f64>> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                Ok(n)
            } else {
                Err(Error::ZeroNorm { side, index: i })
            }
        })
        .collect()
}

/// Greedy cosine matching between two embedded sequences. Recall averages,
/// over reference tokens, the best similarity to any candidate token;
/// precision does the same from the candidate side.
pub fn greedy_match(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<MatchScore> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::InvalidConfig("embedding match needs non-empty sequences".into()));
    }
    let cn = norms(candidate, "candidate")?;
    let rn = norms(reference, "reference")?;
    let sim: Vec<Vec<f64>> = candidate
        .iter()
        .zip(&cn)
        .map(|(c, nc)| {
            reference
                .iter()
                .zip(&rn)
                .map(|(r, nr)| c.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / (nc * nr))
                .collect()
        })
        .collect();
    let precision = sim.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>()
        / candidate.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(MatchScore { precision, recall, f1: f1(precision, recall) })
}

/// Embedding-match P/R/F1 of `candidate` against `reference` under the backend's embeddings.
pub fn embed_match_score(candidate: &[String], reference: &[String], backend: &dyn LmBackend) -> Result<MatchScore> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::InvalidConfig("embedding match needs non-empty sequences".into()));
    }
    let ce = backend.embed(candidate)?;
    let re = backend.embed(reference)?;
    if ce.len() != candidate.len() || re.len() != reference.len() {
        return Err(Error::Protocol("embed returned a vector count different from the token count".into()));
    }
    greedy_match(&ce, &re)
}

/// Function words are 1–3 characters, content words 4–15; punctuation-only
/// tokens and anything longer than 15 characters count as neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordClassRule {
    pub function_range: (usize, usize),
    pub content_range: (usize, usize),
}

impl Default for WordClassRule {
    fn default() -> Self {
        Self { function_range: (1, 3), content_range: (4, 15) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordClassCounts {
    pub function: usize,
    pub content: usize,
}

impl WordClassCounts {
    pub fn add(&mut self, other: WordClassCounts) {
        self.function += other.function;
        self.content += other.content;
    }
}

impl WordClassRule {
    pub fn count<S: AsRef<str>>(&self, tokens: &[S]) -> WordClassCounts {
        let mut counts = WordClassCounts::default();
        for t in tokens {
            let t = t.as_ref();
            if is_punctuation_only(t) {
                continue;
            }
            let chars = t.chars().count();
            if (self.function_range.0..=self.function_range.1).contains(&chars) {
                counts.function += 1;
            } else if (self.content_range.0..=self.content_range.1).contains(&chars) {
                counts.content += 1;
            }
        }
        counts
    }
}

pub fn word_class_counts<S: AsRef<str>>(tokens: &[S]) -> WordClassCounts {
    WordClassRule::default().count(tokens)
}

/// Run metadata carried alongside the scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub pct: Option<f64>,
    pub data_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub perplexity: f64,
    pub bert_p: f64,
    pub bert_r: f64,
    pub bert_f1: f64,
    pub content_words: usize,
    pub function_words: usize,
    pub tokens_scored: usize,
    pub pairs: usize,
    pub run: RunMeta,
}

/// One generated response and the held-out turn it should match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    /// EOS-delimited context the response was generated from.
    pub context: Vec<String>,
    /// Generated response tokens, without EOS.
    pub hypothesis: Vec<String>,
    /// Reference response tokens, without EOS.
    pub reference: Vec<String>,
}

/// Scores generated responses: perplexity of the references (plus EOS)
/// given their contexts under `scorer`, corpus P and R as means over pairs
/// with F1 from those means, and word classes of the hypotheses. An empty
/// hypothesis contributes zero precision and recall.
pub fn evaluate(
    pairs: &[ScoredPair],
    eos: &str,
    scorer: &dyn LmBackend,
    embedder: &dyn LmBackend,
    run: RunMeta,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("nothing to evaluate".into()));
    }
    let targets: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|p| {
            let mut t = p.reference.clone();
            t.push(eos.to_string());
            (p.context.clone(), t)
        })
        .collect();
    let acc = score_targets(&targets, scorer)?;
    let ppl = acc.perplexity().ok_or_else(|| Error::InvalidConfig("backend scored no tokens".into()))?;

    let scores = pairs
        .par_iter()
        .map(|p| {
            if p.hypothesis.is_empty() || p.reference.is_empty() {
                Ok(MatchScore { precision: 0.0, recall: 0.0, f1: 0.0 })
            } else {
                embed_match_score(&p.hypothesis, &p.reference, embedder)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut p_sum = CompensatedSum::default();
    let mut r_sum = CompensatedSum::default();
    for s in &scores {
        p_sum.add(s.precision);
        r_sum.add(s.recall);
    }
    let bert_p = p_sum.value() / scores.len() as f64;
    let bert_r = r_sum.value() / scores.len() as f64;

    let mut words = WordClassCounts::default();
    for p in pairs {
        words.add(word_class_counts(&p.hypothesis));
    }
    Ok(EvalReport {
        perplexity: ppl,
        bert_p,
        bert_r,
        bert_f1: f1(bert_p, bert_r),
        content_words: words.content,
        function_words: words.function,
        tokens_scored: acc.tokens(),
        pairs: pairs.len(),
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockConfig, NextTokenModel};
    use std::collections::BTreeMap;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn uniform_perplexity() {
        let m = MockBackend::new(MockConfig::with_vocab(&["a", "b", "c"], NextTokenModel::Uniform)).unwrap();
        let corpus = vec![s(&["x", "y", "z"]), s(&["a", "b"])];
        assert!((perplexity(&corpus, &m).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn certain_perplexity() {
        let m = MockBackend::new(MockConfig::with_vocab(&["a"], NextTokenModel::Certain { chain: BTreeMap::new() }))
            .unwrap();
        assert_eq!(perplexity(&[s(&["a", "b", "c"])], &m).unwrap(), 1.0);
    }

    #[test]
    fn hand_fixed_logprobs() {
        let mut acc = PerplexityAccumulator::default();
        acc.add_logprobs(&[0.5f64.ln(), 0.25f64.ln()]);
        acc.add_logprobs(&[0.125f64.ln()]);
        // -(ln 2^-1 + ln 2^-2 + ln 2^-3) / 3 = 2 ln 2, so the perplexity is 4
        assert!((acc.perplexity().unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(acc.tokens(), 3);
    }

    #[test]
    fn empty_corpus_is_error() {
        let m = MockBackend::new(MockConfig::default()).unwrap();
        assert!(perplexity::<Vec<String>>(&[], &m).is_err());
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        let mut s = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn one_hot_overlap_example() {
        let mut cfg = MockConfig::with_vocab(&["a", "b", "c"], NextTokenModel::Uniform);
        cfg.embedding = crate::backend::EmbeddingModel::OneHot;
        let m = MockBackend::new(cfg).unwrap();
        let r = embed_match_score(&s(&["a", "b"]), &s(&["a", "c"]), &m).unwrap();
        assert!((r.precision - 0.5).abs() < 1e-12);
        assert!((r.recall - 0.5).abs() < 1e-12);
        assert!((r.f1 - 0.5).abs() < 1e-12);

        let disjoint = embed_match_score(&s(&["a"]), &s(&["b", "c"]), &m).unwrap();
        assert_eq!((disjoint.precision, disjoint.recall, disjoint.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn self_match_is_one() {
        let m = MockBackend::new(MockConfig::default()).unwrap();
        let t = s(&["masarap", "ang", "luto", "mo", "!"]);
        let r = embed_match_score(&t, &t, &m).unwrap();
        for v in [r.precision, r.recall, r.f1] {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_norm_rejected() {
        let err = greedy_match(&[vec![0.0, 0.0]], &[vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { side: "candidate", index: 0 }));
    }

    #[test]
    fn word_classes() {
        let c = word_class_counts(&["ang", "bahay", "ay", "maganda", "."]);
        assert_eq!(c, WordClassCounts { function: 2, content: 2 });
        assert_eq!(word_class_counts::<&str>(&[]), WordClassCounts::default());
        assert_eq!(word_class_counts(&["!!!"]), WordClassCounts::default());
        // character count, not bytes
        assert_eq!(word_class_counts(&["añó"]).function, 1);
    }

    #[test]
    fn conditional_scoring_keeps_target_positions() {
        let m = MockBackend::new(MockConfig::with_vocab(&["a", "b", "c"], NextTokenModel::Uniform)).unwrap();
        let acc = score_targets(&[(s(&["a", "E"]), s(&["b", "c", "E"]))], &m).unwrap();
        assert_eq!(acc.tokens(), 3);
    }
}
