//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::s;
use convo_forge::ablation::{report_table, Cell, Delta, GeneratorSource, RunRecord, TrainSize};
use convo_forge::augment::{
    augment_at_indices, augment_corpus_with_workers, merge_corpora, replacement_count, select_indices, utterance_rng,
    AugmentationConfig, Provenance,
};
use convo_forge::backend::{
    BackendMeta, EmbeddingModel, LmBackend, MaskCandidate, MaskQuery, MockBackend, MockConfig, NextTokenDist,
    NextTokenModel,
};
use convo_forge::dataset::{extract_all_windows, extract_windows, split, SplitConfig, WindowConfig};
use convo_forge::decoder::{generate, has_repeat_trigram, DecodeConfig};
use convo_forge::ingest::{extract_chains, parse_thread_dump, extract_all_chains, Conversation, RawPost, ThreadTree, Utterance};
use convo_forge::metrics::{embed_match_score, evaluate, perplexity, word_class_counts, EvalReport, RunMeta};
use convo_forge::pipeline::{generate_responses, pair_with_references};
use convo_forge::{jsonl, Result};

type Outcome = std::result::Result<(), String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- ceiling

fn ceiling_rule() -> Outcome {
    check(replacement_count(0.15, 10) == 2, || format!("replacement_count(0.15, 10) = {}", replacement_count(0.15, 10)))?;
    for k in 0..=20usize {
        let p = k as f64 * 0.05;
        for len in 0..=200usize {
            // exact ceil(k/20 * len) in integers
            let expected = (k * len).div_ceil(20);
            let got = replacement_count(p, len);
            check(got == expected, || format!("p={p} len={len}: got {got}, expected {expected}"))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- windowing

fn windowing() -> Outcome {
    let cfg = WindowConfig::new(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let x = rng.gen_range(0..=50usize);
        let texts: Vec<String> = (0..x).map(|i| format!("e{i}")).collect();
        let n = extract_windows(&Conversation::from_texts("c", &texts), &cfg).len();
        let expected = x.saturating_sub(3);
        check(n == expected, || format!("length {x}: {n} windows, expected {expected}"))?;
    }
    let fixture = Conversation::from_texts("c", &["e1", "e2", "e3", "e4", "e5"]);
    let windows: Vec<Vec<String>> = extract_windows(&fixture, &cfg)
        .iter()
        .map(|w| w.utterances.iter().map(|u| u.text.clone()).collect())
        .collect();
    check(windows == vec![s(&["e1", "e2", "e3", "e4"]), s(&["e2", "e3", "e4", "e5"])], || format!("fixture windows {windows:?}"))
}

// ---------------------------------------------------------------- chains

fn build_tree(parents: &[usize]) -> RawPost {
    fn node(i: usize, children: &[Vec<usize>]) -> RawPost {
        RawPost::new(format!("n{i}")).with_children(children[i].iter().map(|&c| node(c, children)).collect())
    }
    let mut children = vec![Vec::new(); parents.len() + 1];
    for (i, &p) in parents.iter().enumerate() {
        children[p].push(i + 1);
    }
    node(0, &children)
}

fn chain_extraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in 0..500 {
        let n = rng.gen_range(1..=20usize);
        // parents[i-1] is the parent of node i
        let parents: Vec<usize> = (1..n).map(|i| rng.gen_range(0..i)).collect();
        let tree = ThreadTree { thread_id: format!("t{t}"), topic: build_tree(&parents) };

        let has_child: HashSet<usize> = parents.iter().copied().collect();
        let mut expected: Vec<Vec<String>> = (0..n)
            .filter(|i| !has_child.contains(i))
            .map(|leaf| {
                let mut path = vec![leaf];
                while let Some(&last) = path.last() {
                    if last == 0 {
                        break;
                    }
                    path.push(parents[last - 1]);
                }
                path.iter().rev().map(|i| format!("n{i}")).collect()
            })
            .collect();
        let mut got: Vec<Vec<String>> = extract_chains(&tree)
            .iter()
            .map(|c| c.utterances.iter().map(|u| u.text.clone()).collect())
            .collect();
        check(got.len() == tree.topic.leaf_count(), || format!("tree {t}: {} chains, {} leaves", got.len(), tree.topic.leaf_count()))?;
        expected.sort();
        got.sort();
        check(got == expected, || format!("tree {t}: chains {got:?} != paths {expected:?}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- augmentation

const VOCAB: &[&str] = &[
    "ang", "ng", "sa", "na", "ay", "mga", "ko", "mo", "ka", "ako", "siya", "kami", "po", "oo", "hindi", "talaga",
    "masarap", "maganda", "bahay", "pagkain", "kumain", "luto", "salamat", ".", "?", "!",
];

fn random_utterance(rng: &mut ChaCha8Rng, max_len: usize) -> Utterance {
    let n = rng.gen_range(1..=max_len);
    let tokens: Vec<&str> = (0..n).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect();
    Utterance::new(tokens.join(" "))
}

fn independent_augmentation() -> Outcome {
    let backend = MockBackend::new(MockConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpus: Vec<Conversation> = (0..100)
        .map(|c| Conversation::new(format!("c{c}"), (0..10).map(|_| random_utterance(&mut rng, 30)).collect()))
        .collect();
    for k in [1usize, 2, 5, 10] {
        let pct = k as f64 * 0.05;
        let cfg = AugmentationConfig { percentage: pct, master_seed: 42, ..Default::default() };
        let one = ok(augment_corpus_with_workers(&corpus, &cfg, &backend, 1))?;
        let eight = ok(augment_corpus_with_workers(&corpus, &cfg, &backend, 8))?;
        check(one == eight, || format!("pct {pct}: 1-worker and 8-worker outputs differ"))?;

        for (ci, (orig, aug)) in corpus.iter().zip(&one).enumerate() {
            for (ui, (u, a)) in orig.utterances.iter().zip(&aug.utterances).enumerate() {
                let len = u.tokens.len();
                let n = (k * len).div_ceil(20);
                check(a.tokens.len() == len, || format!("{ci}/{ui}: token count changed"))?;
                let differing: Vec<usize> = (0..len).filter(|&i| u.tokens[i].text != a.tokens[i].text).collect();
                check(differing.len() <= n, || format!("{ci}/{ui}: {} positions differ, cap {n}", differing.len()))?;

                let selected = ok(select_indices(len, n, &mut utterance_rng(42, ci, ui)))?;
                let chosen: HashSet<usize> = selected.iter().copied().collect();
                for i in 0..len {
                    if !chosen.contains(&i) {
                        check(u.tokens[i] == a.tokens[i], || format!("{ci}/{ui}: unselected position {i} changed"))?;
                    }
                }
                let mut shuffled = selected.clone();
                shuffled.shuffle(&mut rng);
                let reordered = ok(augment_at_indices(u, &shuffled, &cfg, &backend))?;
                check(reordered == *a, || format!("{ci}/{ui}: result depends on index order"))?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- doubling

fn corpus_doubling() -> Outcome {
    let backend = MockBackend::new(MockConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for size in [0usize, 1, 7, 50] {
        let corpus: Vec<Conversation> = (0..size)
            .map(|c| Conversation::new(format!("c{c}"), (0..4).map(|_| random_utterance(&mut rng, 12)).collect()))
            .collect();
        let cfg = AugmentationConfig::default();
        let synthetic = ok(augment_corpus_with_workers(&corpus, &cfg, &backend, 4))?;
        let merged = merge_corpora(&corpus, &synthetic, cfg.percentage);
        check(merged.len() == 2 * size, || format!("|X| = {size}: merged size {}", merged.len()))?;
        for (i, m) in merged.iter().enumerate() {
            let (want, pct, src) = if i < size {
                (Provenance::Real, 0.0, &corpus[i])
            } else {
                (Provenance::Synthetic, cfg.percentage, &synthetic[i - size])
            };
            check(m.provenance == want && m.pct == pct && m.conversation == *src, || format!("|X| = {size}: entry {i} mistagged"))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- beam oracle

/// Every completion reachable under the decoder's rules, with its total log-probability.
#[allow(clippy::too_many_arguments)]
fn enumerate_completions(
    context: &[String],
    prefix: &mut Vec<String>,
    cum: f64,
    max_len: usize,
    eos: &str,
    block: bool,
    backend: &dyn LmBackend,
    out: &mut Vec<(Vec<String>, f64)>,
) {
    let mut seq = context.to_vec();
    seq.extend(prefix.iter().cloned());
    let trigrams: HashSet<(String, String, String)> =
        seq.windows(3).map(|w| (w[0].clone(), w[1].clone(), w[2].clone())).collect();
    let dist = backend.next_token(&seq, 0).unwrap();
    for (tok, lp) in dist.tokens.iter().zip(&dist.logprobs) {
        if !lp.is_finite() {
            continue;
        }
        let n = seq.len();
        if block && tok != eos && n >= 2 && trigrams.contains(&(seq[n - 2].clone(), seq[n - 1].clone(), tok.clone())) {
            continue;
        }
        prefix.push(tok.clone());
        if tok == eos || prefix.len() == max_len {
            out.push((prefix.clone(), cum + lp));
        } else {
            enumerate_completions(context, prefix, cum + lp, max_len, eos, block, backend, out);
        }
        prefix.pop();
    }
}

fn exhaustive_best(context: &[String], max_len: usize, eos: &str, backend: &dyn LmBackend) -> Vec<String> {
    let mut all = Vec::new();
    enumerate_completions(context, &mut Vec::new(), 0.0, max_len, eos, true, backend, &mut all);
    let (mut best, _) = all
        .into_iter()
        .map(|(t, c)| {
            let score = c / t.len() as f64;
            (t, score)
        })
        .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
        .unwrap();
    if best.last().map(String::as_str) == Some(eos) {
        best.pop();
    }
    best
}

fn greedy(context: &[String], max_len: usize, eos: &str, backend: &dyn LmBackend) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    while out.len() < max_len {
        let mut seq = context.to_vec();
        seq.extend(out.iter().cloned());
        let n = seq.len();
        let seen: HashSet<&[String]> = seq.windows(3).collect();
        let dist = backend.next_token(&seq, 0).unwrap();
        let next = dist
            .tokens
            .iter()
            .zip(&dist.logprobs)
            .filter(|(t, lp)| {
                lp.is_finite()
                    && (t.as_str() == eos || n < 2 || !seen.contains(&[seq[n - 2].clone(), seq[n - 1].clone(), (*t).clone()][..]))
            })
            .min_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)))
            .map(|(t, _)| t.clone())
            .unwrap();
        if next == eos {
            break;
        }
        out.push(next);
    }
    out
}

/// A mock over exactly `vocab`, which must contain `eos`.
fn vocab_config(vocab: &[&str], eos: &str, next_token: NextTokenModel) -> MockConfig {
    MockConfig { vocab: s(vocab), eos: eos.into(), next_token, ..MockConfig::default() }
}

fn random_table_backend(rng: &mut ChaCha8Rng, vocab: &[&str]) -> MockBackend {
    let model = if rng.gen_bool(0.5) {
        NextTokenModel::Hashed { seed: rng.gen(), sharpness: rng.gen_range(0.5..8.0) }
    } else {
        let keys: Vec<&str> = std::iter::once("").chain(vocab.iter().copied()).collect();
        let table = keys
            .iter()
            .map(|k| (k.to_string(), vocab.iter().map(|t| (t.to_string(), rng.gen_range(0.01..1.0))).collect()))
            .collect::<BTreeMap<_, _>>();
        NextTokenModel::Bigram { table }
    };
    MockBackend::new(vocab_config(vocab, "E", model)).unwrap()
}

fn beam_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = Vec::new();
    let tables = 200;
    for case in 0..tables {
        let v = rng.gen_range(2..=4usize);
        let vocab: Vec<&str> = ["a", "b", "c"][..v - 1].iter().copied().chain(["E"]).collect();
        let max_len = rng.gen_range(1..=5usize);
        let backend = random_table_backend(&mut rng, &vocab);
        let context: Vec<String> = (0..rng.gen_range(0..=3)).map(|_| vocab[rng.gen_range(0..v - 1)].to_string()).collect();
        let cfg = DecodeConfig { beam_width: 5, max_new_tokens: max_len, eos: "E".into(), ..Default::default() };

        let beam = ok(generate(&context, &cfg, &backend))?;
        let oracle = exhaustive_best(&context, max_len, "E", &backend);
        if beam.tokens != oracle {
            // a beam wide enough to hold every hypothesis separates pruning loss from a decoder bug
            let wide = ok(generate(&context, &DecodeConfig { beam_width: v.pow(max_len as u32), ..cfg.clone() }, &backend))?;
            let cause = if wide.tokens == oracle { "pruned by width 5" } else { "wide beam also differs" };
            mismatches.push(format!(
                "case {case} (|V|={v}, L={max_len}): beam {:?} vs exhaustive {oracle:?}, {cause}",
                beam.tokens
            ));
        }

        let g = ok(generate(&context, &DecodeConfig { beam_width: 1, ..cfg.clone() }, &backend))?;
        let expected = greedy(&context, max_len, "E", &backend);
        check(g.tokens == expected, || format!("case {case}: width 1 {:?} vs greedy {expected:?}", g.tokens))?;
    }
    check(mismatches.is_empty(), || {
        format!("{}/{tables} tables differ from exhaustive search; first: {}", mismatches.len(), mismatches[0])
    })
}

// ---------------------------------------------------------------- trigram

fn adversarial_backend(rng: &mut ChaCha8Rng, vocab: &[&str]) -> MockBackend {
    let model = match rng.gen_range(0..3) {
        0 => {
            // deterministic cycle through a few tokens
            let k = rng.gen_range(1..vocab.len() - 1).max(1);
            let mut chain = BTreeMap::new();
            for i in 0..k {
                chain.insert(vocab[i].to_string(), vocab[(i + 1) % k].to_string());
            }
            chain.insert(String::new(), vocab[0].to_string());
            NextTokenModel::Certain { chain }
        }
        1 => {
            // nearly all mass on a short loop, EOS almost never
            let table = std::iter::once("")
                .chain(vocab.iter().copied())
                .map(|key| {
                    let favourite = if key == "x" { "y" } else { "x" };
                    let row = vocab
                        .iter()
                        .map(|t| (t.to_string(), if *t == favourite { 1000.0 } else if *t == "E" { 1e-6 } else { 1.0 }))
                        .collect();
                    (key.to_string(), row)
                })
                .collect();
            NextTokenModel::Bigram { table }
        }
        _ => NextTokenModel::Hashed { seed: rng.gen(), sharpness: 40.0 },
    };
    MockBackend::new(vocab_config(vocab, "E", model)).unwrap()
}

fn trigram_guarantee() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vocab = ["x", "y", "z", "w", "E"];
    for run in 0..500 {
        let backend = adversarial_backend(&mut rng, &vocab);
        let context: Vec<String> = loop {
            let c: Vec<String> = (0..rng.gen_range(0..6)).map(|_| vocab[rng.gen_range(0..4)].to_string()).collect();
            if !has_repeat_trigram(&c) {
                break c;
            }
        };
        let cfg = DecodeConfig {
            beam_width: rng.gen_range(1..=5),
            max_new_tokens: rng.gen_range(1..=24),
            eos: "E".into(),
            ..Default::default()
        };
        let out = ok(generate(&context, &cfg, &backend))?;
        let mut full = context.clone();
        full.extend(out.tokens.iter().cloned());
        check(!has_repeat_trigram(&full), || format!("run {run}: repeated trigram in {full:?}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- perplexity

/// Returns preset log-probabilities per sequence, keyed by its first token.
struct FixedLogprobs(BTreeMap<String, Vec<f64>>);

impl LmBackend for FixedLogprobs {
    fn meta(&self) -> Result<BackendMeta> {
        Ok(BackendMeta { embed_dim: 0, max_len: 64, scores_first_token: true, eos: "E".into(), mask: "M".into() })
    }
    fn mask_fill(&self, _: &MaskQuery, _: usize) -> Result<Vec<MaskCandidate>> {
        Err(convo_forge::Error::Unsupported("mask_fill"))
    }
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(self.0[&tokens[0]].clone())
    }
    fn next_token(&self, _: &[String], _: usize) -> Result<NextTokenDist> {
        Err(convo_forge::Error::Unsupported("next_token"))
    }
    fn embed(&self, _: &[String]) -> Result<Vec<Vec<f64>>> {
        Err(convo_forge::Error::Unsupported("embed"))
    }
}

fn perplexity_oracle() -> Outcome {
    let corpus = vec![s(&["a", "b", "c", "d", "a"]), s(&["d", "c", "b"])];
    let mut failures = Vec::new();

    let four = MockBackend::new(vocab_config(&["a", "b", "c", "d"], "d", NextTokenModel::Uniform)).unwrap();
    let ppl = ok(perplexity(&corpus, &four))?;
    if (ppl - 4.0).abs() > 1e-9 {
        failures.push(format!("uniform |V|=4: {ppl}"));
    }

    let certain = MockBackend::new(vocab_config(&["a", "b", "c", "d"], "d", NextTokenModel::Certain { chain: BTreeMap::new() })).unwrap();
    let ppl = ok(perplexity(&corpus, &certain))?;
    if (ppl - 1.0).abs() > 1e-9 {
        failures.push(format!("all-certain: {ppl}"));
    }

    let fixed = FixedLogprobs(BTreeMap::from([
        ("p".to_string(), vec![0.5f64.ln(), 0.25f64.ln()]),
        ("q".to_string(), vec![0.125f64.ln()]),
    ]));
    let ppl = ok(perplexity(&[s(&["p", "p"]), s(&["q"])], &fixed))?;
    if (ppl - 2.8284).abs() > 1e-6 {
        failures.push(format!("hand-fixed 3-token case: {ppl:.10}, expected 2.8284 ± 1e-6"));
    }
    check(failures.is_empty(), || failures.join("; "))
}

// ---------------------------------------------------------------- embedding match

fn embedding_oracle() -> Outcome {
    let vocab = ["ang", "bahay", "ko", "masarap", "luto", "po", "salamat", "ganda"];
    let mut cfg = MockConfig::with_vocab(&vocab, NextTokenModel::Uniform);
    cfg.embedding = EmbeddingModel::OneHot;
    cfg.next_token = NextTokenModel::Uniform;
    let backend = MockBackend::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
        (0..rng.gen_range(1..=8)).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect()
    };
    for pair in 0..200 {
        let cand = draw(&mut rng);
        let reference = draw(&mut rng);
        let cset: HashSet<&String> = cand.iter().collect();
        let rset: HashSet<&String> = reference.iter().collect();
        let p = cand.iter().filter(|t| rset.contains(t)).count() as f64 / cand.len() as f64;
        let r = reference.iter().filter(|t| cset.contains(t)).count() as f64 / reference.len() as f64;
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let got = ok(embed_match_score(&cand, &reference, &backend))?;
        check(
            (got.precision - p).abs() <= 1e-9 && (got.recall - r).abs() <= 1e-9 && (got.f1 - f).abs() <= 1e-9,
            || format!("pair {pair}: got {got:?}, oracle P={p} R={r} F1={f}"),
        )?;
        let own = ok(embed_match_score(&cand, &cand, &backend))?;
        check((own.f1 - 1.0).abs() <= 1e-9, || format!("pair {pair}: self-match F1 {}", own.f1))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- word classes

fn word_classes() -> Outcome {
    let cases: &[(&str, usize, usize)] = &[
        ("...", 0, 0),
        ("!?", 0, 0),
        ("-", 0, 0),
        ("a", 1, 0),
        ("po", 1, 0),
        ("ang", 1, 0),
        ("ñga", 1, 0),
        ("luto", 0, 1),
        ("niño", 0, 1),
        ("pagkakaibigangg", 0, 1),
        ("pinakamasarapang", 0, 0),
        ("abcdefghijklmnopqrstuvwxyz", 0, 0),
    ];
    for &(tok, function, content) in cases {
        let got = word_class_counts(&[tok]);
        check(got.function == function && got.content == content, || {
            format!("{tok:?} ({} chars): function {} content {}", tok.chars().count(), got.function, got.content)
        })?;
    }
    let mixed = ["ang", "...", "luto", "pagkakaibigangg", "pinakamasarapang", "po", "!"];
    let got = word_class_counts(&mixed);
    check(got.function == 2 && got.content == 2, || format!("mixed fixture {got:?}"))
}

// ---------------------------------------------------------------- end to end

fn pipeline_artifacts() -> Result<Vec<(String, Vec<u8>)>> {
    let dump = parse_thread_dump(common::thread_dump(9, 40).as_bytes())?;
    let chains = extract_all_chains(&dump.threads);
    let bundle = split(&chains, &SplitConfig::default())?;
    let window = WindowConfig::default();
    let windows = extract_all_windows(&bundle.gen_train, &window);
    let backend = MockBackend::new(MockConfig::default())?;
    let cfg = AugmentationConfig { percentage: 0.10, master_seed: 42, ..Default::default() };
    let synthetic = augment_corpus_with_workers(&bundle.gen_train, &cfg, &backend, 8)?;
    let merged = merge_corpora(&bundle.gen_train, &synthetic, 0.10);
    let decode = DecodeConfig { max_new_tokens: 12, ..Default::default() };
    let responses = generate_responses(&bundle.gen_test, &window, &decode, &backend)?;
    let pairs = pair_with_references(&responses, &bundle.gen_test, &window, &decode.eos)?;
    let report: EvalReport = evaluate(&pairs, &decode.eos, &backend, &backend, RunMeta::default())?;

    let mut out = vec![("chains".to_string(), jsonl::to_bytes(&chains)?)];
    for (name, part) in convo_forge::DatasetBundle::PARTS.iter().zip(bundle.parts()) {
        out.push((name.to_string(), jsonl::to_bytes(part)?));
    }
    out.push(("windows".into(), jsonl::to_bytes(&windows)?));
    out.push(("synthetic".into(), jsonl::to_bytes(&synthetic)?));
    out.push(("merged".into(), jsonl::to_bytes(&merged)?));
    out.push(("responses".into(), jsonl::to_bytes(&responses)?));
    out.push(("report".into(), serde_json::to_vec(&report)?));
    Ok(out)
}

fn injected(size: TrainSize, pct: Option<f64>, ppl: f64, f1: f64) -> RunRecord {
    RunRecord {
        fingerprint: String::new(),
        cell: Cell { size, pct },
        seed: 42,
        backend: MockBackend::new(MockConfig::default()).unwrap().meta().unwrap(),
        generator: GeneratorSource::Backend,
        report: Some(EvalReport {
            perplexity: ppl,
            bert_p: f1,
            bert_r: f1,
            bert_f1: f1,
            content_words: 0,
            function_words: 0,
            tokens_scored: 1,
            pairs: 1,
            run: RunMeta::default(),
        }),
        error: None,
        wall_clock_ms: 0,
        inputs: BTreeMap::new(),
    }
}

fn end_to_end_determinism() -> Outcome {
    let first = ok(pipeline_artifacts())?;
    let second = ok(pipeline_artifacts())?;
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        check(!a.is_empty() || name == "masklm_eval", || format!("{name} is empty"))?;
        check(a == b, || format!("{name} differs between runs"))?;
    }

    let records = vec![
        injected(TrainSize::Count(1000), None, 4.126, 0.340),
        injected(TrainSize::Count(1000), Some(0.10), 4.126 - 0.4435, 0.3454),
    ];
    let table = ok(report_table(&records))?;
    let row = &table.blocks[0].rows[1];
    let ppl = row.perplexity.unwrap().format();
    check(ppl == "-0.4435 (-10.75%)", || format!("perplexity delta rendered as {ppl}"))?;
    let f1 = row.bert_f1.unwrap().format();
    check(f1 == "+0.0054 (+1.59%)", || format!("F1 delta rendered as {f1}"))?;
    check(table.to_markdown().contains("-0.4435 (-10.75%)"), || "table markdown lacks the delta".into())?;
    let same = Delta::between(4.126, 4.126);
    check(same.format() == "+0.0000 (+0.00%)", || format!("identical runs rendered as {}", same.format()))
}

// ---------------------------------------------------------------- runner

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "ceiling rule", limit: Duration::from_secs(1), run: ceiling_rule },
        Criterion { name: "windowing", limit: Duration::from_secs(1), run: windowing },
        Criterion { name: "chain extraction", limit: Duration::from_secs(5), run: chain_extraction },
        Criterion { name: "independent-mode augmentation", limit: Duration::from_secs(10), run: independent_augmentation },
        Criterion { name: "corpus doubling", limit: Duration::MAX, run: corpus_doubling },
        Criterion { name: "beam-oracle equivalence", limit: Duration::from_secs(30), run: beam_oracle },
        Criterion { name: "trigram guarantee", limit: Duration::from_secs(10), run: trigram_guarantee },
        Criterion { name: "perplexity oracle", limit: Duration::MAX, run: perplexity_oracle },
        Criterion { name: "embedding-match oracle", limit: Duration::MAX, run: embedding_oracle },
        Criterion { name: "word-class rule", limit: Duration::MAX, run: word_classes },
        Criterion { name: "end-to-end determinism", limit: Duration::MAX, run: end_to_end_determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let started = Instant::now();
        let result = (c.run)();
        let elapsed = started.elapsed();
        let result = result.and_then(|()| {
            check(elapsed <= c.limit, || format!("took {elapsed:.2?}, limit {:?}", c.limit))
        });
        match result {
            Ok(()) => println!("PASS  {:<32} {elapsed:>10.2?}", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<32} {elapsed:>10.2?}  {why}", c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
