mod config;
mod error;
mod score;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use arprep::bbpe::{train_bbpe, BbpeModel, TokenId};
use arprep::char_composer::gradcheck::{verification_suite, TOLERANCE};
use arprep::char_composer::{param_count, CharComposerConfig};
use arprep::corpus::{read_documents, to_record_line, Document, DocumentReader, Format};
use arprep::dedup::{dedup_sharded, dedup_stream};
use arprep::filter::run_filter;
use arprep::harness::{format_report, parallelism_from_env, run_search, CommandTrainer, RunSummary, TaskSpec};
use arprep::instances::{make_mlm_instances, make_t5_instances, masking_stats, MaskingConfig};
use arprep::normalizer::normalize_document;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "arprep", version, about = "Arabic pre-training corpus pipeline and evaluation harness")]
#[command(arg_required_else_help = true, propagate_version = true)]
struct Cli {
    /// Pipeline configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads; overrides `parallelism` in the config.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Input path, `-` for standard input.
    #[arg(long = "in", value_name = "PATH", default_value = "-")]
    input: PathBuf,
    /// Output path, `-` for standard output.
    #[arg(long, value_name = "PATH", default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct DocIo {
    #[command(flatten)]
    io: Io,
    /// Input layout: JSON lines or blank-line-separated plain text.
    #[arg(long, default_value = "jsonl")]
    format: Format,
}

#[derive(Args)]
struct InstanceArgs {
    #[command(flatten)]
    docs: DocIo,
    /// Tokenizer model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dup_factor: Option<usize>,
    #[arg(long)]
    max_seq: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Strip diacritics, tatweel, emoji and HTML from every sentence.
    Normalize(DocIo),
    /// Apply the quality heuristics and write a retention report.
    Filter {
        #[command(flatten)]
        docs: DocIo,
        /// Retention report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Retention report as TSV.
        #[arg(long)]
        report_tsv: Option<PathBuf>,
    },
    /// Drop repeated sentences, keeping first occurrences.
    Dedup {
        #[command(flatten)]
        docs: DocIo,
        /// Sentence counts as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Learn a byte-level BPE vocabulary; writes the model file.
    TrainTokenizer {
        #[command(flatten)]
        docs: DocIo,
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Encode text lines to JSON arrays of token ids.
    Encode {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        model: PathBuf,
    },
    /// Decode JSON arrays of token ids to text lines.
    Decode {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        model: PathBuf,
    },
    /// Generate whole-word MLM/NSP instances.
    MakeMlm(InstanceArgs),
    /// Generate span-corruption instances.
    MakeT5(InstanceArgs),
    /// Run the character-CNN gradient verification suite.
    CharcnnCheck {
        #[arg(long, value_name = "PATH", default_value = "-")]
        out: PathBuf,
    },
    /// Score predictions against gold labels or references.
    Score {
        #[arg(long, value_enum)]
        metric: score::Metric,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Add-one smoothing of higher-order BLEU precisions.
        #[arg(long)]
        smooth: bool,
        #[arg(long, value_name = "PATH", default_value = "-")]
        out: PathBuf,
    },
    /// Grid search then multi-seed reruns of the best configuration.
    Search {
        /// Task spec (JSON).
        #[arg(long)]
        task: PathBuf,
        #[arg(long, value_name = "PATH", default_value = "-")]
        out: PathBuf,
    },
    /// Tabulate run summaries as mean±std per task plus an average row.
    Report {
        /// Summary files (JSON or JSON lines), `-` for standard input.
        #[arg(long = "in", value_name = "PATH", num_args = 1.., default_value = "-")]
        inputs: Vec<PathBuf>,
        /// Markdown table.
        #[arg(long, value_name = "PATH", default_value = "-")]
        out: PathBuf,
        /// Tab-separated table.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn open_input(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if is_stdio(path) {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

fn open_output(path: &Path) -> anyhow::Result<Box<dyn Write>> {
    if is_stdio(path) {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut out = open_output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Yields documents until the first read error, which is kept for later.
struct Docs<R> {
    reader: DocumentReader<R>,
    error: Option<arprep::Error>,
}

impl<R: BufRead> Docs<R> {
    fn open(docs: &DocIo) -> anyhow::Result<Docs<Box<dyn BufRead>>> {
        let reader = read_documents(&docs.io.input, docs.format)?;
        Ok(Docs { reader, error: None })
    }

    fn finish(self) -> Result<(), CliError> {
        match self.error {
            Some(e) => Err(anyhow!(e).context("reading documents").into()),
            None => Ok(()),
        }
    }
}

impl<R: BufRead> Iterator for Docs<R> {
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        if self.error.is_some() {
            return None;
        }
        match self.reader.next()? {
            Ok(doc) => Some(doc),
            Err(e) => {
                self.error = Some(e);
                None
            }
        }
    }
}

fn write_lines<I, S>(path: &Path, lines: I) -> anyhow::Result<usize>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = open_output(path)?;
    let mut n = 0;
    for line in lines {
        out.write_all(line.as_ref().as_bytes())?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

fn write_docs(path: &Path, docs: impl Iterator<Item = Document>) -> anyhow::Result<usize> {
    write_lines(path, docs.map(|d| to_record_line(&d)))
}

fn load_docs(docs: &DocIo) -> Result<Vec<Document>, CliError> {
    let mut stream = Docs::<Box<dyn BufRead>>::open(docs)?;
    let all: Vec<Document> = stream.by_ref().collect();
    stream.finish()?;
    Ok(all)
}

fn load_model(path: &Path) -> Result<BbpeModel, CliError> {
    BbpeModel::load(path).with_context(|| format!("loading tokenizer {}", path.display())).map_err(CliError::from)
}

fn masking(cfg: &PipelineConfig, args: &InstanceArgs) -> Result<MaskingConfig, CliError> {
    let mut m = cfg.masking_config();
    m.seed = args.seed.unwrap_or(m.seed);
    m.duplication_factor = args.dup_factor.unwrap_or(m.duplication_factor);
    m.max_seq = args.max_seq.unwrap_or(m.max_seq);
    m.validate()?;
    Ok(m)
}

#[derive(Serialize)]
struct CharCnnReport {
    configs: usize,
    seeds: usize,
    coordinates: usize,
    max_rel_error: f64,
    tolerance: f64,
    passed: bool,
    param_count: usize,
    published_param_count: &'static str,
}

fn read_summaries(paths: &[PathBuf]) -> anyhow::Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    for path in paths {
        let mut text = String::new();
        open_input(path)?.read_to_string(&mut text)?;
        let what = || format!("summary {}", path.display());
        match serde_json::from_str::<RunSummary>(&text) {
            Ok(s) => out.push(s),
            Err(_) => {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    out.push(serde_json::from_str(line).with_context(what)?);
                }
            }
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let threads = cli.threads.or(cfg.parallelism);
    if threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| anyhow!(e))?;
    }

    match cli.command {
        Command::Normalize(docs) => {
            let mut stream = Docs::<Box<dyn BufRead>>::open(&docs)?;
            let n = write_docs(&docs.io.out, stream.by_ref().filter_map(normalize_document))?;
            stream.finish()?;
            log::info!("normalize: wrote {n} documents");
        }
        Command::Filter { docs, report, report_tsv } => {
            let reader = read_documents(&docs.io.input, docs.format)?;
            let mut stream = run_filter(reader, &cfg.filter, true);
            let n = write_docs(&docs.io.out, stream.by_ref())?;
            if let Some(e) = stream.take_error() {
                return Err(anyhow!(e).context("reading documents").into());
            }
            let report_data = stream.into_report();
            log::info!("filter: kept {n} documents, retention {:.4}", report_data.total().retention());
            if let Some(path) = report {
                write_json(&path, &report_data.to_json())?;
            }
            if let Some(path) = report_tsv {
                write_text(&path, &report_data.to_tsv())?;
            }
        }
        Command::Dedup { docs, stats } => {
            let stats_data = if cfg.dedup.shards > 1 {
                let (kept, s) = dedup_sharded(load_docs(&docs)?, cfg.dedup.shards);
                write_docs(&docs.io.out, kept.into_iter())?;
                s
            } else {
                let mut input = Docs::<Box<dyn BufRead>>::open(&docs)?;
                let mut stream = dedup_stream(input.by_ref());
                write_docs(&docs.io.out, stream.by_ref())?;
                let s = stream.stats();
                input.finish()?;
                s
            };
            log::info!("dedup: dropped {} of {} sentences", stats_data.sentences_dropped, stats_data.sentences_seen);
            if let Some(path) = stats {
                write_json(&path, &stats_data)?;
            }
        }
        Command::TrainTokenizer { docs, vocab_size } => {
            let vocab = vocab_size.unwrap_or(cfg.tokenizer.vocab_size);
            let corpus = load_docs(&docs)?;
            let model = train_bbpe(&corpus, vocab).map_err(|e| match e {
                arprep::bbpe::TokenizerError::VocabTooSmall { .. } => CliError::Usage(e.to_string()),
                other => CliError::Data(other.into()),
            })?;
            log::info!("train-tokenizer: {} merges", model.merges().len());
            write_text(&docs.io.out, &model.to_text())?;
        }
        Command::Encode { io, model } => {
            let model = load_model(&model)?;
            let mut lines = Vec::new();
            for line in open_input(&io.input)?.lines() {
                lines.push(serde_json::to_string(&model.encode(&line?).ids)?);
            }
            write_lines(&io.out, lines)?;
        }
        Command::Decode { io, model } => {
            let model = load_model(&model)?;
            let mut lines = Vec::new();
            for (i, line) in open_input(&io.input)?.lines().enumerate() {
                let ids: Vec<TokenId> =
                    serde_json::from_str(&line?).with_context(|| format!("line {}: expected an id array", i + 1))?;
                lines.push(model.decode(&ids).with_context(|| format!("line {}", i + 1))?);
            }
            write_lines(&io.out, lines)?;
        }
        Command::MakeMlm(args) => {
            let m = masking(&cfg, &args)?;
            let model = load_model(&args.model)?;
            let corpus = load_docs(&args.docs)?;
            let instances = make_mlm_instances(&corpus, &model, &m)?;
            if let Ok(stats) = masking_stats(&instances) {
                log::info!("make-mlm: {stats:?}");
            }
            let lines: Vec<String> = instances.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
            write_lines(&args.docs.io.out, lines)?;
        }
        Command::MakeT5(args) => {
            let m = masking(&cfg, &args)?;
            let model = load_model(&args.model)?;
            let corpus = load_docs(&args.docs)?;
            let instances = make_t5_instances(&corpus, &model, &m)?;
            log::info!("make-t5: {} instances", instances.len());
            let lines: Vec<String> = instances.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
            write_lines(&args.docs.io.out, lines)?;
        }
        Command::CharcnnCheck { out } => {
            let suite = verification_suite(cfg.charcnn.configs, cfg.charcnn.seeds).map_err(anyhow::Error::from)?;
            let report = CharCnnReport {
                configs: suite.configs,
                seeds: suite.seeds,
                coordinates: suite.coordinates,
                max_rel_error: suite.max_rel_error,
                tolerance: TOLERANCE,
                passed: suite.passed,
                param_count: param_count(&CharComposerConfig::default()),
                published_param_count: "700K",
            };
            write_json(&out, &report)?;
            if !report.passed {
                return Err(anyhow!("gradient check failed: max relative error {:e}", report.max_rel_error).into());
            }
        }
        Command::Score { metric, gold, pred, smooth, out } => {
            if is_stdio(&gold) && is_stdio(&pred) {
                return Err(CliError::Usage("--gold and --pred cannot both read standard input".into()));
            }
            let g = score::read_values(open_input(&gold)?, "gold")?;
            let p = score::read_values(open_input(&pred)?, "pred")?;
            write_json(&out, &score::score(metric, &g, &p, smooth)?)?;
        }
        Command::Search { task, out } => {
            let mut text = String::new();
            open_input(&task)?.read_to_string(&mut text)?;
            let spec: TaskSpec = serde_json::from_str(&text).context("task spec")?;
            let parallelism = threads.unwrap_or_else(parallelism_from_env);
            let summary = run_search(&spec, &cfg.harness, &CommandTrainer, parallelism).map_err(anyhow::Error::from)?;
            log::info!("search: {} mean {:.4} std {:.4}", summary.task, summary.mean, summary.std);
            write_json(&out, &summary)?;
        }
        Command::Report { inputs, out, tsv } => {
            if inputs.iter().filter(|p| is_stdio(p)).count() > 1 {
                return Err(CliError::Usage("standard input given more than once".into()));
            }
            let report = format_report(&read_summaries(&inputs)?).map_err(anyhow::Error::from)?;
            write_text(&out, &report.markdown)?;
            if let Some(path) = tsv {
                write_text(&path, &report.tsv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Data(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}
