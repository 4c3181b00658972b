use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use convo_forge::ablation::{report_table, run_grid, ExperimentGrid, GeneratorSource, TrainSize};
use convo_forge::augment::{augment_corpus_with_workers, merge_corpora, AugmentMode, AugmentationConfig};
use convo_forge::backend::{open_backend, serve, MockBackend, MockConfig};
use convo_forge::dataset::{extract_all_windows, split, SplitConfig, WindowConfig};
use convo_forge::decoder::{generate, DecodeConfig};
use convo_forge::ingest::{extract_all_chains, parse_thread_dump, Conversation, Utterance};
use convo_forge::metrics::{evaluate, RunMeta};
use convo_forge::pipeline::{context_tokens, generate_responses, pair_with_references, ResponseRecord};
use convo_forge::text::join_tokens;
use convo_forge::{jsonl, Result, DEFAULT_EOS};

#[derive(Parser)]
#[command(name = "convo-forge", version, about = "Conversation dataset building, augmentation, generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a JSONL thread dump into root-to-leaf conversations.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded split into masked-LM and generator partitions.
    Split {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fixed-length sliding windows over conversations.
    Window {
        #[arg(long, default_value_t = 4)]
        turns: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked-LM token replacement.
    Augment {
        #[arg(long)]
        pct: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "independent")]
        mode: AugmentMode,
        #[arg(long, default_value = "mock")]
        backend: String,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long)]
        forbid_identity: bool,
        #[arg(long)]
        skip_on_error: bool,
        #[arg(long, default_value_t = 8)]
        workers: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Concatenate originals and synthetic conversations with provenance tags.
    Merge {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Replacement percentage recorded on the synthetic side.
        #[arg(long, default_value_t = 0.10)]
        pct: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beam-search responses for conversation windows, or an interactive session.
    Generate {
        #[arg(long, default_value = "mock")]
        backend: String,
        #[arg(long, default_value_t = 5)]
        beam: usize,
        #[arg(long, default_value_t = 64)]
        max_new: usize,
        #[arg(long, default_value_t = 4)]
        turns: usize,
        #[arg(long, default_value = DEFAULT_EOS)]
        eos: String,
        #[arg(long)]
        no_trigram_block: bool,
        #[arg(long, required_unless_present = "repl")]
        context_file: Option<PathBuf>,
        #[arg(long, required_unless_present = "repl")]
        out: Option<PathBuf>,
        /// Read one turn per line from stdin and answer with a rolling context.
        #[arg(long)]
        repl: bool,
    },
    /// Score responses against the reference split.
    Eval {
        #[arg(long, default_value = "mock")]
        backend: String,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 4)]
        turns: usize,
        #[arg(long, default_value = DEFAULT_EOS)]
        eos: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the percentage × size grid and write a comparison table.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.10,0.15,0.20,0.25")]
        pcts: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,25000,all")]
        sizes: Vec<TrainSize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "mock")]
        backend: String,
        /// Conversations to split (ingest output).
        #[arg(long = "in")]
        input: PathBuf,
        /// Decode with the backend itself instead of fitting a bigram generator per cell.
        #[arg(long)]
        use_backend_generator: bool,
        #[arg(long, default_value_t = 0.1)]
        add_k: f64,
        #[arg(long, default_value_t = 200)]
        eval_limit: usize,
        #[arg(long, default_value_t = 16)]
        max_new: usize,
        #[arg(long, default_value_t = 4)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the mock backend over the wire protocol.
    MockServe {
        #[arg(long, default_value_t = 8731)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

fn decode_config(beam: usize, max_new: usize, eos: &str, no_block: bool) -> DecodeConfig {
    DecodeConfig {
        beam_width: beam,
        max_new_tokens: max_new,
        trigram_block: !no_block,
        eos: eos.to_string(),
        ..Default::default()
    }
}

fn read_convs(path: &Path) -> Result<Vec<Conversation>> {
    jsonl::read_path(path)
}

fn repl(backend: &str, cfg: &DecodeConfig, turns: usize) -> Result<()> {
    let backend = open_backend(backend)?;
    let keep = turns.saturating_sub(1).max(1);
    let mut history: Vec<Utterance> = Vec::new();
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        history.push(Utterance::from_raw(&line));
        if history.len() > keep {
            history.drain(..history.len() - keep);
        }
        let out = generate(&context_tokens(&history, &cfg.eos), cfg, backend.as_ref())?;
        let reply = join_tokens(&out.tokens);
        writeln!(stdout, "{reply}")?;
        stdout.flush()?;
        history.push(Utterance::from_raw(&reply));
        if history.len() > keep {
            history.drain(..history.len() - keep);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out } => {
            let dump = parse_thread_dump(BufReader::new(File::open(&input)?))?;
            for e in &dump.errors {
                eprintln!("skipped: {e}");
            }
            let chains = extract_all_chains(&dump.threads);
            jsonl::write_path(&out, &chains)?;
            eprintln!("{} threads, {} conversations, {} skipped records", dump.threads.len(), chains.len(), dump.errors.len());
        }
        Command::Split { seed, input, out_dir } => {
            let cfg = SplitConfig { seed, ..Default::default() };
            let bundle = split(&read_convs(&input)?, &cfg)?;
            for (name, part) in convo_forge::DatasetBundle::PARTS.iter().zip(bundle.parts()) {
                jsonl::write_path(out_dir.join(format!("{name}.jsonl")), part)?;
                eprintln!("{name}: {}", part.len());
            }
        }
        Command::Window { turns, input, out } => {
            let cfg = WindowConfig::new(turns)?;
            let windows = extract_all_windows(&read_convs(&input)?, &cfg);
            jsonl::write_path(&out, &windows)?;
            eprintln!("{} windows", windows.len());
        }
        Command::Augment { pct, seed, mode, backend, top_k, forbid_identity, skip_on_error, workers, input, out } => {
            let cfg = AugmentationConfig {
                percentage: pct,
                master_seed: seed,
                mode,
                top_k,
                forbid_identity,
                skip_on_error,
                ..Default::default()
            };
            let backend = open_backend(&backend)?;
            let synthetic = augment_corpus_with_workers(&read_convs(&input)?, &cfg, backend.as_ref(), workers)?;
            jsonl::write_path(&out, &synthetic)?;
        }
        Command::Merge { a, b, pct, out } => {
            let merged = merge_corpora(&read_convs(&a)?, &read_convs(&b)?, pct);
            jsonl::write_path(&out, &merged)?;
        }
        Command::Generate { backend, beam, max_new, turns, eos, no_trigram_block, context_file, out, repl: interactive } => {
            let cfg = decode_config(beam, max_new, &eos, no_trigram_block);
            cfg.validate()?;
            if interactive {
                return repl(&backend, &cfg, turns);
            }
            let (Some(context_file), Some(out)) = (context_file, out) else {
                unreachable!("clap requires both without --repl");
            };
            let backend = open_backend(&backend)?;
            let window = WindowConfig::new(turns)?;
            let responses = generate_responses(&read_convs(&context_file)?, &window, &cfg, backend.as_ref())?;
            jsonl::write_path(&out, &responses)?;
            eprintln!("{} responses", responses.len());
        }
        Command::Eval { backend, hyp, reference, turns, eos, out } => {
            let backend = open_backend(&backend)?;
            let responses: Vec<ResponseRecord> = jsonl::read_path(&hyp)?;
            let pairs = pair_with_references(&responses, &read_convs(&reference)?, &WindowConfig::new(turns)?, &eos)?;
            let report = evaluate(&pairs, &eos, backend.as_ref(), backend.as_ref(), RunMeta::default())?;
            write_file(&out, &serde_json::to_vec_pretty(&report)?)?;
        }
        Command::Ablate {
            pcts,
            sizes,
            seed,
            backend,
            input,
            use_backend_generator,
            add_k,
            eval_limit,
            max_new,
            parallel,
            out,
        } => {
            let backend = open_backend(&backend)?;
            let eos = backend.meta()?.eos;
            let bundle = split(&read_convs(&input)?, &SplitConfig { seed, ..Default::default() })?;
            let grid = ExperimentGrid {
                percentages: pcts,
                sizes,
                seed,
                decode: decode_config(5, max_new, &eos, false),
                generator: if use_backend_generator {
                    GeneratorSource::Backend
                } else {
                    GeneratorSource::FitBigram { add_k }
                },
                eval_limit: Some(eval_limit),
                max_parallel: parallel,
                ..Default::default()
            };
            let records = run_grid(&grid, &bundle, backend.as_ref())?;
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!("cell size={} pct={:?} failed: {}", r.cell.size, r.cell.pct, r.error.as_deref().unwrap_or(""));
            }
            jsonl::write_path(out.join("records.jsonl"), &records)?;
            let table = report_table(&records)?;
            write_file(&out.join("table.md"), table.to_markdown().as_bytes())?;
        }
        Command::MockServe { port, config, workers } => {
            let cfg = match config {
                Some(p) => serde_json::from_slice(&fs::read(p)?)?,
                None => MockConfig::default(),
            };
            let handle = serve(Arc::new(MockBackend::new(cfg)?), &format!("127.0.0.1:{port}"), workers)?;
            eprintln!("mock backend listening on {}", handle.url());
            handle.join();
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
