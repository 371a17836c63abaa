//! `triage` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info};
use serde_json::{json, Value};

use triage_core::harness::{emit_report, run_suite, write_report};
use triage_core::metrics::compute_metrics;
use triage_core::synth::{self, CorpusGenerator, SynthConfig};
use triage_core::{
    load_corpus, prune_vocab, ConfusionCounts, CorpusFormat, MetricWeights, ReportFormat, ResultTable, SuiteConfig,
    Tokenizer,
};

#[derive(Parser)]
#[command(name = "triage", version, about = "Patent relevance triage experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment of a suite config and write results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Render the result table of a previous run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Restrict a tokenizer to the tokens a corpus actually uses.
    PruneVocab {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        merges: PathBuf,
        /// .jsonl or .csv dataset, or plain text with one document per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one confusion matrix.
    Metrics {
        #[arg(long)]
        tp: u64,
        #[arg(long)]
        fp: u64,
        #[arg(long)]
        tn: u64,
        #[arg(long = "fn")]
        fn_: u64,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Write a synthetic planted-keyword corpus, tokenizer and suite config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        patents: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct WeightArgs {
    #[arg(long)]
    w_recall: Option<f64>,
    #[arg(long)]
    w_precision: Option<f64>,
    #[arg(long)]
    w_patents_left: Option<f64>,
}

impl WeightArgs {
    fn apply(&self, base: MetricWeights) -> Result<MetricWeights> {
        Ok(MetricWeights::new(
            self.w_recall.unwrap_or(base.w_recall),
            self.w_precision.unwrap_or(base.w_precision),
            self.w_patents_left.unwrap_or(base.w_patents_left),
        )?)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, out, weights } => run(&config, &out, &weights),
        Command::Report { input, format, out } => {
            let text = emit_report(&load_table(&input)?, format);
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::PruneVocab { vocab, merges, corpus, out } => {
            let tok = Tokenizer::from_files(&vocab, &merges, triage_core::tokenizer::DEFAULT_MAX_LEN)?;
            let texts = corpus_texts(&corpus)?;
            let (pruned, stats) = prune_vocab(&tok, &texts);
            pruned.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics { tp, fp, tn, fn_, weights } => {
            let weights = weights.apply(MetricWeights::default())?;
            let report = compute_metrics(ConfusionCounts { tp, fp, tn, fn_ }, &weights)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, patents, seed } => {
            synth_suite(&out, patents, seed)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(config: &Path, out: &Path, weights: &WeightArgs) -> Result<ExitCode> {
    let mut suite = SuiteConfig::load(config)?;
    suite.weights = weights.apply(suite.weights)?;
    let ctx = suite.load_context()?;
    let cfgs = suite.experiments()?;
    info!("running {} experiments", cfgs.len());
    let run = run_suite(&cfgs, &ctx);

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut experiments = Vec::new();
    let mut timings = Vec::new();
    let mut failed = 0;
    for result in &run.results {
        match result {
            Ok(r) => {
                experiments.push(serde_json::to_value(r)?);
                timings.push(json!({
                    "experiment": r.experiment,
                    "wall_time_ms": r.metadata.wall_time_ms,
                    "peak_rss_kb": r.metadata.peak_rss_kb,
                }));
            }
            Err(e) => {
                error!("{e}");
                failed += 1;
                experiments.push(json!({"experiment": e.experiment, "error": e.source.to_string()}));
            }
        }
    }
    let results = json!({"table": run.table, "experiments": experiments});
    write_json(&out.join("results.json"), &results)?;
    write_json(&out.join("timings.json"), &Value::Array(timings))?;
    write_report(&run.table, ReportFormat::Markdown, &out.join("report.md"))?;
    write_report(&run.table, ReportFormat::Csv, &out.join("report.csv"))?;
    print!("{}", emit_report(&run.table, ReportFormat::Markdown));
    if failed > 0 {
        error!("{failed} of {} experiments failed", cfgs.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_table(dir: &Path) -> Result<ResultTable> {
    let path = dir.join("results.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Some(table) = value.get_mut("table") else {
        bail!("{} has no `table` entry", path.display());
    };
    Ok(serde_json::from_value(table.take())?)
}

/// Datasets contribute title and claims; anything else is read line by line.
fn corpus_texts(path: &Path) -> Result<Vec<String>> {
    if let Some(format) = CorpusFormat::from_path(path) {
        let ds = load_corpus(path, format)?;
        return Ok(ds.records.into_iter().map(|r| format!("{} {}", r.title, r.claims)).collect());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect())
}

fn synth_suite(out: &Path, patents: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (tok, words) = synth::standard_assets(1000, seed);
    let generator = CorpusGenerator::new(&tok, &words);
    for (i, name) in ["D1", "D2"].into_iter().enumerate() {
        let cfg = SynthConfig {
            patents,
            seed: seed.wrapping_add(i as u64 + 1),
            id_prefix: name.into(),
            ..Default::default()
        };
        generator.dataset(name, &cfg).save_jsonl(out.join(format!("{name}.jsonl")))?;
    }
    tok.save(out.join("tokenizer"))?;
    let suite = json!({
        "datasets": {"D1": "D1.jsonl", "D2": "D2.jsonl"},
        "tokenizer": {"vocab": "tokenizer/vocab.txt", "merges": "tokenizer/merges.txt", "max_len": 256},
        "experiments": ["D1_D2", "D1-R_D2", "D1-TR_D2-T", {"name": "D1-TR-EX_D2-T-EX", "chunk_pooling": "median"}],
        "scorers": [
            {"name": "baseline", "kind": "baseline"},
            {"name": "baseline-slow", "kind": "baseline", "config": {"epochs": 10, "learning_rate": 0.001, "batch_size": 16}}
        ],
        "scorer_config": {"epochs": 10, "learning_rate": 0.003, "batch_size": 64},
        "seed": seed
    });
    write_json(&out.join("suite.json"), &suite)?;
    info!("wrote synthetic suite to {}", out.display());
    Ok(())
}
