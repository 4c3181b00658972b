//! Replacement-percentage × training-size experiment grids.
//!
//! Each cell takes a seeded prefix of the training split, augments it at
//! the cell's percentage (no synthetic data for the baseline), merges,
//! obtains a generator and scores generated responses against the
//! untouched test split.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_corpus, merge_corpora, AugmentationConfig};
use crate::backend::{BackendMeta, BigramBackend, LmBackend};
use crate::dataset::{build_training_pair, extract_all_windows, DatasetBundle, WindowConfig};
use crate::decoder::{generate, DecodeConfig};
use crate::error::{Error, Result};
use crate::hashing::content_hash;
use crate::ingest::Conversation;
use crate::jsonl;
use crate::metrics::{evaluate, EvalReport, RunMeta, ScoredPair};

/// Base training size of a grid row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainSize {
    Count(usize),
    All,
}

impl TrainSize {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            TrainSize::Count(n) => n.min(available),
            TrainSize::All => available,
        }
    }
}

impl fmt::Display for TrainSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainSize::Count(n) => write!(f, "{n}"),
            TrainSize::All => f.write_str("all"),
        }
    }
}

impl FromStr for TrainSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(TrainSize::All),
            n => n
                .parse()
                .map(TrainSize::Count)
                .map_err(|_| Error::InvalidConfig(format!("bad size {s:?}: expected an integer or `all`"))),
        }
    }
}

impl Serialize for TrainSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TrainSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a cell's generator comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSource {
    /// Use the run's backend as-is (e.g. an externally fine-tuned model).
    Backend,
    /// Fit an add-k bigram model on the cell's merged training windows.
    FitBigram { add_k: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub percentages: Vec<f64>,
    pub sizes: Vec<TrainSize>,
    pub seed: u64,
    /// Mode, top-k and error policy for augmentation; percentage and seed
    /// are set per cell.
    pub augment: AugmentationConfig,
    pub window: WindowConfig,
    pub decode: DecodeConfig,
    pub generator: GeneratorSource,
    /// Cap on test windows scored per cell.
    pub eval_limit: Option<usize>,
    pub max_parallel: usize,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            percentages: vec![0.05, 0.10, 0.15, 0.20, 0.25],
            sizes: vec![TrainSize::Count(1000), TrainSize::Count(10_000), TrainSize::Count(25_000), TrainSize::All],
            seed: 42,
            augment: AugmentationConfig::default(),
            window: WindowConfig::default(),
            decode: DecodeConfig::default(),
            generator: GeneratorSource::FitBigram { add_k: 0.1 },
            eval_limit: Some(200),
            max_parallel: 4,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.percentages.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidConfig(format!("percentage {p} is outside [0, 1]")));
            }
            if self.percentages[..i].contains(p) {
                return Err(Error::InvalidConfig(format!("percentage {p} listed twice")));
            }
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidConfig("grid has no sizes".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("sizes must be strictly ascending".into()));
        }
        self.decode.validate()
    }

    /// Baseline first, then each percentage, for every size.
    pub fn cells(&self) -> Vec<Cell> {
        self.sizes
            .iter()
            .flat_map(|&size| {
                std::iter::once(Cell { size, pct: None })
                    .chain(self.percentages.iter().map(move |&p| Cell { size, pct: Some(p) }))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub size: TrainSize,
    /// `None` for the baseline (no synthetic data).
    pub pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fingerprint: String,
    pub cell: Cell,
    pub seed: u64,
    pub backend: BackendMeta,
    pub generator: GeneratorSource,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    pub wall_clock_ms: u64,
    /// Content hashes of the cell's inputs (`train`, `merged`, `test`).
    pub inputs: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    cell: &'a Cell,
    seed: u64,
    backend: &'a BackendMeta,
    generator: &'a GeneratorSource,
    augment: &'a AugmentationConfig,
    window: &'a WindowConfig,
    decode: &'a DecodeConfig,
    eval_limit: Option<usize>,
}

fn fingerprint(grid: &ExperimentGrid, cell: &Cell, meta: &BackendMeta) -> Result<String> {
    let input = FingerprintInput {
        cell,
        seed: grid.seed,
        backend: meta,
        generator: &grid.generator,
        augment: &grid.augment,
        window: &grid.window,
        decode: &grid.decode,
        eval_limit: grid.eval_limit,
    };
    Ok(content_hash(&serde_json::to_vec(&input)?))
}

fn hash_conversations(convs: &[Conversation]) -> Result<String> {
    Ok(content_hash(&jsonl::to_bytes(convs)?))
}

/// Content hash of a conversation list as written to JSONL.
pub fn corpus_hash(convs: &[Conversation]) -> Result<String> {
    hash_conversations(convs)
}

struct CellOutcome {
    report: EvalReport,
    inputs: BTreeMap<String, String>,
}

fn run_cell(grid: &ExperimentGrid, cell: &Cell, bundle: &DatasetBundle, backend: &dyn LmBackend) -> Result<CellOutcome> {
    let eos = grid.decode.eos.as_str();
    let size = cell.size.resolve(bundle.gen_train.len());
    let train = &bundle.gen_train[..size];
    let merged: Vec<Conversation> = match cell.pct {
        None => train.to_vec(),
        Some(pct) => {
            let cfg = AugmentationConfig { percentage: pct, master_seed: grid.seed, ..grid.augment.clone() };
            let synthetic = augment_corpus(train, &cfg, backend)?;
            merge_corpora(train, &synthetic, pct).into_iter().map(|t| t.conversation).collect()
        }
    };

    let fitted;
    let generator: &dyn LmBackend = match &grid.generator {
        GeneratorSource::Backend => backend,
        GeneratorSource::FitBigram { add_k } => {
            let corpus = extract_all_windows(&merged, &grid.window)
                .iter()
                .map(|w| {
                    build_training_pair(w, grid.window.turns, eos).map(|p| {
                        let mut seq = p.context;
                        seq.extend(p.target);
                        seq
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            fitted = BigramBackend::fit(&corpus, eos, *add_k)?;
            &fitted
        }
    };

    let mut test_windows = extract_all_windows(&bundle.gen_test, &grid.window);
    if let Some(limit) = grid.eval_limit {
        test_windows.truncate(limit);
    }
    let pairs = test_windows
        .par_iter()
        .map(|w| {
            let pair = build_training_pair(w, grid.window.turns, eos)?;
            let out = generate(&pair.context, &grid.decode, generator)?;
            let mut reference = pair.target;
            reference.pop();
            Ok(ScoredPair { context: pair.context, hypothesis: out.tokens, reference })
        })
        .collect::<Result<Vec<_>>>()?;
    let run = RunMeta { pct: cell.pct, data_size: Some(size), seed: Some(grid.seed) };
    let report = evaluate(&pairs, eos, generator, backend, run)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("train".to_string(), hash_conversations(train)?);
    inputs.insert("merged".to_string(), hash_conversations(&merged)?);
    inputs.insert("test".to_string(), hash_conversations(&bundle.gen_test)?);
    Ok(CellOutcome { report, inputs })
}

/// Runs every cell, up to `grid.max_parallel` at a time. Records come
/// back in cell order; a failing cell yields a record carrying its error.
pub fn run_grid(grid: &ExperimentGrid, bundle: &DatasetBundle, backend: &dyn LmBackend) -> Result<Vec<RunRecord>> {
    grid.validate()?;
    let meta = backend.meta()?;
    if grid.generator == GeneratorSource::Backend && meta.eos != grid.decode.eos {
        return Err(Error::InvalidConfig(format!(
            "decoder EOS {:?} differs from backend EOS {:?}",
            grid.decode.eos, meta.eos
        )));
    }
    let cells = grid.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.max_parallel.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let started = Instant::now();
                let outcome = run_cell(grid, cell, bundle, backend);
                let wall_clock_ms = started.elapsed().as_millis() as u64;
                let (report, error, inputs) = match outcome {
                    Ok(o) => (Some(o.report), None, o.inputs),
                    Err(e) => (None, Some(e.to_string()), BTreeMap::new()),
                };
                Ok(RunRecord {
                    fingerprint: fingerprint(grid, cell, &meta)?,
                    cell: *cell,
                    seed: grid.seed,
                    backend: meta.clone(),
                    generator: grid.generator.clone(),
                    report,
                    error,
                    wall_clock_ms,
                    inputs,
                })
            })
            .collect()
    })
}

/// Absolute and relative change against a baseline value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub abs: f64,
    /// Percent of the baseline; `None` when the baseline is zero.
    pub pct: Option<f64>,
}

impl Delta {
    pub fn between(baseline: f64, value: f64) -> Self {
        let abs = value - baseline;
        Self { abs, pct: (baseline != 0.0).then(|| abs / baseline * 100.0) }
    }

    pub fn format(&self) -> String {
        match self.pct {
            Some(p) => format!("{:+.4} ({:+.2}%)", self.abs, p),
            None => format!("{:+.4} (n/a)", self.abs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub pct: Option<f64>,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    pub perplexity: Option<Delta>,
    pub bert_f1: Option<Delta>,
    pub content_words: Option<Delta>,
    pub function_words: Option<Delta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBlock {
    pub size: TrainSize,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub blocks: Vec<SizeBlock>,
}

/// Groups records by size and computes every metric's change against the
/// size's baseline record.
pub fn report_table(records: &[RunRecord]) -> Result<ComparisonTable> {
    let mut sizes: Vec<TrainSize> = Vec::new();
    for r in records {
        if !sizes.contains(&r.cell.size) {
            sizes.push(r.cell.size);
        }
    }
    let mut blocks = Vec::new();
    for size in sizes {
        let group: Vec<&RunRecord> = records.iter().filter(|r| r.cell.size == size).collect();
        let baseline = group
            .iter()
            .find(|r| r.cell.pct.is_none())
            .and_then(|r| r.report.as_ref())
            .ok_or_else(|| Error::MissingBaseline(size.to_string()))?;
        let rows = group
            .iter()
            .map(|r| {
                let d = |f: fn(&EvalReport) -> f64| r.report.as_ref().map(|rep| Delta::between(f(baseline), f(rep)));
                TableRow {
                    pct: r.cell.pct,
                    report: r.report.clone(),
                    error: r.error.clone(),
                    perplexity: d(|e| e.perplexity),
                    bert_f1: d(|e| e.bert_f1),
                    content_words: d(|e| e.content_words as f64),
                    function_words: d(|e| e.function_words as f64),
                }
            })
            .collect();
        blocks.push(SizeBlock { size, rows });
    }
    Ok(ComparisonTable { blocks })
}

impl ComparisonTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            let _ = writeln!(out, "## Training size: {}\n", block.size);
            let _ = writeln!(
                out,
                "| model | perplexity | Δ perplexity | BERT P | BERT R | BERT F1 | Δ F1 | content | Δ content | function | Δ function |"
            );
            let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|---|");
            for row in &block.rows {
                let name = match row.pct {
                    None => "baseline".to_string(),
                    Some(p) => format!("{:.0}% replaced", p * 100.0),
                };
                let fmt = |d: &Option<Delta>| d.map(|d| d.format()).unwrap_or_default();
                match &row.report {
                    Some(r) => {
                        let _ = writeln!(
                            out,
                            "| {name} | {:.4} | {} | {:.4} | {:.4} | {:.4} | {} | {} | {} | {} | {} |",
                            r.perplexity,
                            fmt(&row.perplexity),
                            r.bert_p,
                            r.bert_r,
                            r.bert_f1,
                            fmt(&row.bert_f1),
                            r.content_words,
                            fmt(&row.content_words),
                            r.function_words,
                            fmt(&row.function_words),
                        );
                    }
                    None => {
                        let err = row.error.as_deref().unwrap_or("failed").replace('|', "\\|");
                        let _ = writeln!(out, "| {name} | failed: {err} | | | | | | | | | |");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
