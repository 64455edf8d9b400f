//! Command-line entry point. One binary, seven subcommands:
//!
//! - `ingest`: raw view-hierarchy JSONL → canonical event log
//! - `synth`: generate a synthetic corpus
//! - `train`: train the click model on an event log
//! - `predict`: rank elements for events with a trained run
//! - `eval`: score a trained run on its test split
//! - `baseline`: fit and score the reference predictors
//! - `ablate`: train and score the full ablation grid
//! - `run`: the whole pipeline end to end, with a comparison table
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. All randomness is
//! controlled by `--seed`. Log verbosity comes from the `CLICKSEQ_LOG`
//! environment variable (error/warn/info/debug/trace).

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use clickseq::config::RunConfig;
use clickseq::embed::Vocabulary;
use clickseq::eval::{self, CounterBaseline, PairwiseBaseline};
use clickseq::model::{self, Vocabs};
use clickseq::nn::checkpoint;
use clickseq::nn::params::ParameterStore;
use clickseq::pipeline;
use clickseq::synth;
use clickseq::train::{self, SplitExamples, TrainOutcome, DEFAULT_SEGMENT};
use clickseq::types::{read_jsonl, ClickSequence};
use clickseq::ClickseqError;

#[derive(Parser)]
#[command(name = "clickseq", version, about = "Next-click prediction over mobile UI screens")]
struct Cli {
    /// Run configuration file (TOML); missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every stage's randomness fans out from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for `ingest`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw view-hierarchy JSONL into the canonical event log.
    Ingest {
        /// Raw JSONL file, or `-` for standard input.
        #[arg(long, default_value = "-")]
        input: PathBuf,
    },
    /// Generate a synthetic click corpus.
    Synth,
    /// Train the click model on an event log (synthesized if --data absent).
    Train {
        /// Canonical event-log JSONL.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Rank elements for events in an event log using a trained run.
    Predict {
        /// A run directory produced by `train` or `run`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// How many events to predict (from the start of the log).
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Evaluate a trained run on the test split of an event log.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Fit and score the reference predictors.
    Baseline {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BaselineKind::All)]
        which: BaselineKind,
    },
    /// Train and score the full model and every ablation variant.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// The whole pipeline: synth, split, train, baselines, comparison table.
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineKind {
    Recency,
    Frequency,
    Global,
    Lr,
    Nb,
    All,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CLICKSEQ_LOG", "info"))
        .init();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, ClickseqError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    // one master seed rules all stages; --seed overrides the file's
    let seed = cli.seed.unwrap_or(config.seed);
    config.set_seed(seed);
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("clickseq_out"))
}

fn load_data(
    data: &Option<PathBuf>,
    config: &RunConfig,
) -> Result<Vec<ClickSequence>, ClickseqError> {
    match data {
        Some(path) => read_jsonl(BufReader::new(File::open(path)?)),
        None => {
            log::info!("no --data given; synthesizing a corpus from the config");
            Ok(synth::generate(&config.world)?.sequences)
        }
    }
}

fn save_run(
    dir: &Path,
    config: &RunConfig,
    outcome: &TrainOutcome,
) -> Result<(), ClickseqError> {
    config.save(dir)?;
    checkpoint::save(&outcome.store, config.digest()?, &dir.join("model.ckpt"))?;
    let mut w = BufWriter::new(File::create(dir.join("words.vocab"))?);
    outcome.vocabs.words.write_sidecar(&mut w)?;
    let mut w = BufWriter::new(File::create(dir.join("apps.vocab"))?);
    outcome.vocabs.apps.write_sidecar(&mut w)?;
    let mut w = BufWriter::new(File::create(dir.join("train_log.csv"))?);
    train::write_log_csv(&mut w, &outcome.log)?;
    Ok(())
}

fn load_run(dir: &Path) -> Result<(RunConfig, ParameterStore<f32>, Vocabs), ClickseqError> {
    let config = RunConfig::load(&dir.join("config.toml"))?;
    let (store, digest) = checkpoint::load(&dir.join("model.ckpt"))?;
    if digest != config.digest()? {
        return Err(ClickseqError::Checkpoint(
            "checkpoint digest does not match the run's config".into(),
        ));
    }
    let words = Vocabulary::read_sidecar(BufReader::new(File::open(dir.join("words.vocab"))?))?;
    let apps = Vocabulary::read_sidecar(BufReader::new(File::open(dir.join("apps.vocab"))?))?;
    Ok((config, store, Vocabs { words, apps }))
}

fn split_for(
    sequences: &[ClickSequence],
    config: &RunConfig,
) -> Result<SplitExamples, ClickseqError> {
    train::split_examples(sequences, &config.split, config.model.history_size, DEFAULT_SEGMENT)
}

fn dispatch(cli: Cli) -> Result<(), ClickseqError> {
    match &cli.command {
        Command::Ingest { input } => {
            let n = if input.as_os_str() == "-" {
                run_ingest(io::stdin().lock(), &cli)?
            } else {
                run_ingest(BufReader::new(File::open(input)?), &cli)?
            };
            log::info!("ingested {n} events");
            Ok(())
        }
        Command::Synth => {
            let config = load_config(&cli)?;
            let dir = out_dir(&cli);
            let corpus = synth::generate(&config.world)?;
            fs::create_dir_all(&dir)?;
            config.save(&dir)?;
            synth::write_corpus(&corpus, &dir)?;
            log::info!(
                "wrote {} events for {} users to {}",
                corpus.n_events(),
                config.world.n_users,
                dir.display()
            );
            Ok(())
        }
        Command::Train { data } => {
            let config = load_config(&cli)?;
            let sequences = load_data(data, &config)?;
            let split = split_for(&sequences, &config)?;
            let outcome =
                train::train(&sequences, &split.train, &split.valid, &config.train_config())?;
            let dir = out_dir(&cli);
            fs::create_dir_all(&dir)?;
            save_run(&dir, &config, &outcome)?;
            log::info!(
                "trained {} steps, best valid top-1 {:.4}; run saved to {}",
                outcome.steps,
                outcome.best_valid_top1,
                dir.display()
            );
            Ok(())
        }
        Command::Predict { run, data, limit } => {
            let (config, store, vocabs) = load_run(run)?;
            let sequences = read_jsonl(BufReader::new(File::open(data)?))?;
            let stdout = io::stdout();
            let mut w = stdout.lock();
            let mut remaining = *limit;
            'outer: for (user, seq) in sequences.iter().enumerate() {
                for ex in train::make_examples(seq, user, config.model.history_size, DEFAULT_SEGMENT)
                {
                    if remaining == 0 {
                        break 'outer;
                    }
                    let (request, target) = train::request_for(&sequences, &ex);
                    let result =
                        model::predict(&store, &vocabs, &request, &config.model)?.with_target(target);
                    serde_json::to_writer(
                        &mut w,
                        &serde_json::json!({
                            "user_id": seq.user_id,
                            "event": ex.event,
                            "ranked_indices": result.ranked_indices,
                            "probabilities": result.probabilities,
                            "window_start": result.window_start,
                            "clicked_index": target,
                            "target_rank": result.target_rank,
                        }),
                    )?;
                    w.write_all(b"\n")?;
                    remaining -= 1;
                }
            }
            Ok(())
        }
        Command::Eval { run, data } => {
            let (config, store, vocabs) = load_run(run)?;
            let sequences = read_jsonl(BufReader::new(File::open(data)?))?;
            let split = split_for(&sequences, &config)?;
            let report =
                eval::evaluate_model(&sequences, &split.test, &store, &vocabs, &config.model)?;
            write_report(&cli, &report)?;
            log::info!(
                "top1 {:.4} top3 {:.4} abs {:.3} rel {:.4} over {} events",
                report.overall.top1,
                report.overall.top3,
                report.overall.abs_rank,
                report.overall.rel_rank,
                report.overall.n_events
            );
            Ok(())
        }
        Command::Baseline { data, which } => {
            let config = load_config(&cli)?;
            let sequences = load_data(data, &config)?;
            let split = split_for(&sequences, &config)?;
            let mut table = Vec::new();
            let counters = [
                (BaselineKind::Recency, "Recency", CounterBaseline::Recency),
                (BaselineKind::Frequency, "Frequency", CounterBaseline::Frequency),
                (BaselineKind::Global, "Global Frequency", CounterBaseline::GlobalFrequency),
            ];
            for (kind, name, counter) in counters {
                if *which == kind || *which == BaselineKind::All {
                    table.push((
                        name.to_string(),
                        eval::evaluate_counter_baseline(&sequences, &split.test, counter)?,
                    ));
                }
            }
            let pairwise = [
                (BaselineKind::Lr, "LR", PairwiseBaseline::LogisticRegression),
                (BaselineKind::Nb, "NB", PairwiseBaseline::NaiveBayes),
            ];
            for (kind, name, model) in pairwise {
                if *which == kind || *which == BaselineKind::All {
                    table.push((
                        name.to_string(),
                        eval::evaluate_pairwise_baseline(&sequences, &split, model, &config.eval.lr)?,
                    ));
                }
            }
            write_table(&cli, &table)
        }
        Command::Ablate { data } => {
            let config = load_config(&cli)?;
            let sequences = load_data(data, &config)?;
            let split = split_for(&sequences, &config)?;
            let table = eval::run_ablations(&sequences, &split, &config.train_config())?;
            write_table(&cli, &table)
        }
        Command::Run => {
            let config = load_config(&cli)?;
            let dir = out_dir(&cli);
            let artifacts = pipeline::end_to_end(&config, &dir)?;
            println!("run directory: {}", dir.display());
            let mut buf = Vec::new();
            eval::write_comparison_csv(&mut buf, &artifacts.table)?;
            io::stdout().write_all(&buf)?;
            Ok(())
        }
    }
}

fn run_ingest<R: BufRead>(reader: R, cli: &Cli) -> Result<usize, ClickseqError> {
    match &cli.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            pipeline::ingest(reader, &mut w)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            pipeline::ingest(reader, &mut w)
        }
    }
}

fn write_report(cli: &Cli, report: &eval::MetricsReport) -> Result<(), ClickseqError> {
    match &cli.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            let mut w = BufWriter::new(File::create(path)?);
            eval::write_report_json(&mut w, report)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            eval::write_report_json(&mut w, report)
        }
    }
}

fn write_table(
    cli: &Cli,
    table: &[(String, eval::MetricsReport)],
) -> Result<(), ClickseqError> {
    match &cli.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            let mut w = BufWriter::new(File::create(path)?);
            eval::write_comparison_csv(&mut w, table)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            eval::write_comparison_csv(&mut w, table)
        }
    }
}
