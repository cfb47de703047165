use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use repro_bench::client::{synthetic_client_run, ClientError, SyntheticProfile};
use repro_bench::model::{ChallengeManifest, EvaluationType, ExperimentSpec, Metric, TrainFraction, DEFAULT_EPOCHS, DEFAULT_PLANNED_RUNS};
use repro_bench::record;
use repro_bench::server::{Server, ServerConfig, ServerError, Stopped};
use repro_bench::stats::{compare_experiments, descriptive, PairCheck, StatsError, DEFAULT_ALPHA};
use repro_bench::store::{ResultsIndex, StoreError};
use repro_bench::study::{
    build_report, filter_corpus, parse_corpus, render_report, ComparisonReport, CorpusFunnel, ExperimentPair,
    ReportFormat, ReportRow, StudyError,
};

#[derive(Parser)]
#[command(name = "repro-bench", version, about = "Reproducible ML experiment benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment server.
    Server {
        #[arg(long)]
        config: PathBuf,
    },
    /// Bug corpus tools.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Compare a buggy and a corrected experiment metric by metric.
    Compare(CompareArgs),
    /// Build a p-value report over many buggy/corrected pairs.
    Report(ReportArgs),
    /// Descriptive statistics of one experiment.
    Summary {
        /// Experiment key, `<bug>/<buggy|corrected>`.
        key: String,
        #[arg(long)]
        store: PathBuf,
        /// `text-table`, `csv` or `records`.
        #[arg(long, default_value = "text-table")]
        format: String,
    },
    /// Write a synthetic challenge manifest.
    Manifest {
        #[arg(long)]
        id: String,
        #[arg(long)]
        items: u64,
        #[arg(long, default_value = "4/5")]
        train_fraction: TrainFraction,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a synthetic client experiment against a live server.
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Split a corpus into accepted and rejected records.
    Filter {
        input: PathBuf,
        /// Write accepted records here instead of printing a summary.
        #[arg(long)]
        accepted: Option<PathBuf>,
    },
    /// Count records at each construction step.
    Funnel { input: PathBuf },
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    buggy: String,
    #[arg(long)]
    corrected: String,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value = "text-table")]
    format: String,
    /// Compare even if the two experiments are not a well-formed pair.
    #[arg(long)]
    override_pair: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Pair records `{"buggy":KEY,"corrected":KEY}`, resolved against `--store`.
    #[arg(long, required_unless_present = "p_values", conflicts_with = "p_values", requires = "store")]
    pairs: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Precomputed report rows to re-flag and render instead.
    #[arg(long)]
    p_values: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Defaults to csv.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    server: String,
    #[arg(long)]
    bug: String,
    #[arg(long, value_parser = parse_evaluation_type)]
    evaluation_type: EvaluationType,
    #[arg(long)]
    challenge: String,
    #[arg(long, default_value = "synthetic")]
    model: String,
    #[arg(long)]
    mean: f64,
    #[arg(long, default_value_t = 0.003)]
    spread: f64,
    #[arg(long, default_value_t = 0.0)]
    epochs_effect: f64,
    #[arg(long, default_value_t = DEFAULT_PLANNED_RUNS)]
    runs: u32,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: u32,
}

fn parse_evaluation_type(s: &str) -> Result<EvaluationType, String> {
    s.parse()
}

#[derive(Debug, Deserialize)]
struct PairRecord {
    buggy: String,
    corrected: String,
    #[serde(default)]
    override_pair: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Insufficient(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 2,
            CliError::Insufficient(_) => 3,
            CliError::Other(_) => 1,
        })
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::InsufficientData(_) => CliError::Insufficient(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Journal(_) => CliError::Other(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Config { .. } | ServerError::Manifest { .. } => CliError::Validation(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::Other(e.to_string())
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Other(format!("cannot read {}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes),
        None => std::io::stdout().write_all(bytes),
    }
    .map_err(|e| CliError::Other(format!("cannot write output: {e}")))
}

fn decode_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    record::decode_lines(&read_text(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Server { config } => {
            let config = ServerConfig::load(&config)?;
            let server = Server::bind(&config)?;
            println!("listening on {}", server.local_addr());
            match server.run() {
                Stopped::Shutdown => Ok(()),
                Stopped::HaltedOnSeedMismatch => Err(CliError::Other("halted after a seed mismatch".into())),
            }
        }
        Command::Corpus(CorpusCommand::Filter { input, accepted }) => {
            let outcome = filter_corpus(parse_corpus(&read_text(&input)?)?);
            let mut text = String::new();
            match accepted {
                Some(path) => {
                    let lines: String = outcome.accepted.iter().map(|r| record::encode(r) + "\n").collect();
                    write_output(Some(&path), lines.as_bytes())?;
                }
                None => {
                    for r in &outcome.accepted {
                        let tags: Vec<&str> = r.favour_tags.iter().map(|t| t.as_str()).collect();
                        writeln!(text, "{}", format!("accepted  {}  {}", r.bug_id, tags.join(",")).trim_end()).unwrap();
                    }
                }
            }
            for (code, records) in &outcome.rejected {
                writeln!(text, "rejected  {:<16} {}", code.as_str(), records.len()).unwrap();
            }
            writeln!(text, "accepted {} of {}", outcome.accepted.len(), outcome.accepted.len() + outcome.rejected.values().map(Vec::len).sum::<usize>()).unwrap();
            write_output(None, text.as_bytes())
        }
        Command::Corpus(CorpusCommand::Funnel { input }) => {
            let funnel = CorpusFunnel::of(&parse_corpus(&read_text(&input)?)?);
            write_output(None, (record::encode(&funnel) + "\n").as_bytes())
        }
        Command::Compare(args) => {
            let format: ReportFormat = args.format.parse()?;
            let index = ResultsIndex::load(&args.store)?;
            let buggy = index.export(&args.buggy)?;
            let corrected = index.export(&args.corrected)?;
            let check = if args.override_pair { PairCheck::Override } else { PairCheck::Require };
            let cmp = compare_experiments(&buggy, &corrected, args.alpha, check)?;
            let p = |m| cmp.tests.get(&m).map(|t| t.p_value);
            let row = ReportRow {
                bug_id: cmp.bug_id.clone(),
                p_accuracy: p(Metric::Accuracy),
                p_precision: p(Metric::Precision),
                p_recall: p(Metric::Recall),
                p_f1: p(Metric::F1),
                dagger: cmp.dagger,
                significant_metrics: Default::default(),
                error: None,
            };
            let report = ComparisonReport::from_p_values(vec![row], args.alpha);
            let mut out = render_report(&report, format);
            if format == ReportFormat::TextTable {
                let mut text = format!("compared {} runs per side", cmp.compared_runs);
                if cmp.dagger {
                    write!(text, " (buggy completed {}, corrected {})", cmp.buggy_runs, cmp.corrected_runs).unwrap();
                }
                out.extend_from_slice(text.as_bytes());
                out.push(b'\n');
            }
            write_output(None, &out)
        }
        Command::Report(args) => {
            let format: ReportFormat = args.format.parse()?;
            let report = match (&args.pairs, &args.p_values) {
                (_, Some(path)) => ComparisonReport::from_p_values(decode_records(path)?, args.alpha),
                (Some(path), None) => {
                    let store = args.store.as_ref().expect("clap enforces --store with --pairs");
                    let index = ResultsIndex::load(store)?;
                    let pairs = decode_records::<PairRecord>(path)?
                        .into_iter()
                        .map(|p| {
                            Ok(ExperimentPair {
                                buggy: index.export(&p.buggy)?,
                                corrected: index.export(&p.corrected)?,
                                check: if p.override_pair { PairCheck::Override } else { PairCheck::Require },
                            })
                        })
                        .collect::<Result<Vec<_>, StoreError>>()?;
                    build_report(&pairs, args.alpha)
                }
                (None, None) => unreachable!("clap requires --pairs or --p-values"),
            };
            for row in &report.rows {
                if let Some(e) = &row.error {
                    log::warn!("{}: {e}", row.bug_id);
                }
            }
            write_output(args.out.as_deref(), &render_report(&report, format))
        }
        Command::Summary { key, store, format } => {
            let summary = descriptive(&ResultsIndex::load(&store)?.export(&key)?)?;
            let mut text = String::new();
            match format.as_str() {
                "text-table" => {
                    writeln!(text, "{key}").unwrap();
                    writeln!(text, "{:<10} {:>5} {:>9} {:>9} {:>9} {:>9}", "metric", "runs", "mean", "std", "min", "max").unwrap();
                    for (m, s) in &summary.metrics {
                        let std = s.std.map_or_else(|| "n/a".into(), |v| format!("{v:.5}"));
                        writeln!(text, "{:<10} {:>5} {:>9.5} {:>9} {:>9.5} {:>9.5}", m.name(), s.count, s.mean, std, s.min, s.max).unwrap();
                    }
                }
                "csv" => {
                    writeln!(text, "experiment_key,metric,runs,mean,std,min,max").unwrap();
                    for (m, s) in &summary.metrics {
                        let std = s.std.map_or_else(String::new, |v| v.to_string());
                        writeln!(text, "{key},{},{},{},{std},{},{}", m.name(), s.count, s.mean, s.min, s.max).unwrap();
                    }
                }
                "records" => text = record::encode(&summary) + "\n",
                other => return Err(StudyError::InvalidFormat(other.into()).into()),
            }
            write_output(None, text.as_bytes())
        }
        Command::Manifest { id, items, train_fraction, out } => {
            if items < 2 {
                return Err(CliError::Validation("a challenge needs at least 2 items".into()));
            }
            let manifest = ChallengeManifest::synthetic(&id, items, train_fraction);
            write_output(Some(&out), (record::encode(&manifest) + "\n").as_bytes())
        }
        Command::Simulate(args) => {
            let spec = ExperimentSpec {
                bug_identifier: args.bug,
                evaluation_type: args.evaluation_type,
                model: args.model,
                challenge: args.challenge,
                state: 0,
                artifact: format!("synthetic-{}", args.evaluation_type),
                software: "synthetic".into(),
                epochs: args.epochs,
                planned_runs: args.runs,
            };
            spec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
            let profile = SyntheticProfile { mean: [args.mean; 4], spread: args.spread, epochs_effect: args.epochs_effect };
            let results = synthetic_client_run(&args.server, &spec, profile)?;
            println!("{}: submitted {} runs", spec.key(), results.completed_runs);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
