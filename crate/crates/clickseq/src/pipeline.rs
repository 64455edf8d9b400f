//! End-to-end orchestration: raw-log ingestion and the full run
//! (synthesize → split → train + fit baselines → evaluate everything →
//! unified comparison table). Every artifact lands in one self-describing
//! run directory.

use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::eval::{
    self, CounterBaseline, EventContext, EventOutcome, MetricsReport, PairwiseBaseline,
};
use crate::model;
use crate::nn::checkpoint;
use crate::synth::{self, Corpus};
use crate::train::{self, SplitExamples, TrainOutcome, TrainingExample, DEFAULT_SEGMENT};
use crate::types::{write_jsonl, ClickEvent, ClickSequence, EventTime};
use crate::vh::{self, VhNode};
use crate::ClickseqError;

/// One raw logged click: a view-hierarchy snapshot plus which actionable
/// element (by preorder index after flattening) was clicked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEventRecord {
    pub user_id: String,
    pub timestamp_ms: i64,
    #[serde(default)]
    pub tz_offset_min: i32,
    pub app_id: String,
    pub clicked_index: usize,
    pub screen_width: u32,
    pub screen_height: u32,
    pub root: VhNode,
}

/// Ingests raw view-hierarchy JSONL into the canonical event-log format.
/// Events must be grouped by user and chronologically ordered within each
/// user. Returns the number of events written.
pub fn ingest<R: BufRead, W: Write>(r: R, w: &mut W) -> Result<usize, ClickseqError> {
    let mut sequences: Vec<ClickSequence> = Vec::new();
    let mut count = 0usize;
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEventRecord = serde_json::from_str(&line)?;
        let screen =
            vh::flatten_actionable(&raw.root, raw.screen_width, raw.screen_height, &raw.app_id)?;
        let event = ClickEvent::new(
            screen,
            raw.clicked_index,
            EventTime::new(raw.timestamp_ms, raw.tz_offset_min),
        )?;
        match sequences.last_mut() {
            Some(seq) if seq.user_id == raw.user_id => {
                if let Some(last) = seq.events.last() {
                    if event.time.timestamp_ms < last.time.timestamp_ms {
                        return Err(ClickseqError::HistoryOutOfOrder);
                    }
                }
                seq.events.push(event);
            }
            _ => sequences.push(ClickSequence { user_id: raw.user_id.clone(), events: vec![event] }),
        }
        count += 1;
    }
    write_jsonl(w, &sequences)?;
    Ok(count)
}

/// Scores the generator's exact conditional distribution as a predictor:
/// the tightest ceiling any model can reach on the synthetic corpus.
pub fn bayes_report(
    corpus: &Corpus,
    test: &[TrainingExample],
) -> Result<MetricsReport, ClickseqError> {
    let outcomes: Result<Vec<EventOutcome>, ClickseqError> = test
        .iter()
        .map(|ex| {
            let truth = &corpus.truth[ex.user][ex.event];
            let mut ranking: Vec<usize> = (0..truth.len()).collect();
            ranking.sort_by(|&a, &b| {
                truth[b].partial_cmp(&truth[a]).expect("finite probabilities").then(a.cmp(&b))
            });
            let seq = &corpus.sequences[ex.user];
            let context = EventContext {
                app_id: seq.events[ex.event].app_id.clone(),
                prev_app_id: ex.event.checked_sub(1).map(|p| seq.events[p].app_id.clone()),
            };
            eval::score_event(&ranking, seq.events[ex.event].clicked_index, &context)
        })
        .collect();
    eval::aggregate(&outcomes?)
}

/// Evaluates every baseline, the trained model, and the Bayes oracle on the
/// test split. Row order is fixed.
pub fn comparison_table(
    corpus: &Corpus,
    split: &SplitExamples,
    outcome: &TrainOutcome,
    config: &RunConfig,
) -> Result<Vec<(String, MetricsReport)>, ClickseqError> {
    let seqs = &corpus.sequences;
    let mut table = Vec::new();
    for (name, kind) in [
        ("Recency", CounterBaseline::Recency),
        ("Frequency", CounterBaseline::Frequency),
        ("Global Frequency", CounterBaseline::GlobalFrequency),
    ] {
        log::info!("evaluating {name}");
        table.push((name.to_string(), eval::evaluate_counter_baseline(seqs, &split.test, kind)?));
    }
    for (name, kind) in [
        ("LR", PairwiseBaseline::LogisticRegression),
        ("NB", PairwiseBaseline::NaiveBayes),
    ] {
        log::info!("evaluating {name}");
        table.push((
            name.to_string(),
            eval::evaluate_pairwise_baseline(seqs, split, kind, &config.eval.lr)?,
        ));
    }
    log::info!("evaluating Our Model");
    table.push((
        "Our Model".to_string(),
        eval::evaluate_model(seqs, &split.test, &outcome.store, &outcome.vocabs, &config.model)?,
    ));
    table.push(("Bayes Oracle".to_string(), bayes_report(corpus, &split.test)?));
    Ok(table)
}

/// Everything a finished run produced, for further in-process analysis.
pub struct RunArtifacts {
    pub corpus: Corpus,
    pub split: SplitExamples,
    pub outcome: TrainOutcome,
    /// Named reports: Recency, Frequency, Global Frequency, LR, NB,
    /// Our Model, Bayes Oracle.
    pub table: Vec<(String, MetricsReport)>,
}

fn per_event_dump(
    corpus: &Corpus,
    split: &SplitExamples,
    outcome: &TrainOutcome,
    config: &RunConfig,
    path: &Path,
) -> Result<(), ClickseqError> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in &split.test {
        let (request, target) = train::request_for(&corpus.sequences, ex);
        let result = model::predict(&outcome.store, &outcome.vocabs, &request, &config.model)?;
        let seq = &corpus.sequences[ex.user];
        let context = EventContext {
            app_id: seq.events[ex.event].app_id.clone(),
            prev_app_id: ex.event.checked_sub(1).map(|p| seq.events[p].app_id.clone()),
        };
        let o = eval::score_event(&result.ranked_indices, target, &context)?;
        serde_json::to_writer(&mut w, &o)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// The full pipeline. Synthesizes a corpus, splits it, trains the model,
/// fits every baseline, evaluates all of them on the same test split, and
/// writes the run directory: config.toml, events.jsonl, ground_truth.json,
/// train_log.csv, model.ckpt, vocab sidecars, comparison.csv, report.json.
pub fn end_to_end(config: &RunConfig, out: &Path) -> Result<RunArtifacts, ClickseqError> {
    config.validate()?;
    config.save(out)?;

    log::info!("synthesizing corpus ({} users)", config.world.n_users);
    let corpus = synth::generate(&config.world)?;
    synth::write_corpus(&corpus, out)?;
    log::info!("{} events", corpus.n_events());

    let train_config = config.train_config();
    let split = train::split_examples(
        &corpus.sequences,
        &config.split,
        train_config.model.history_size,
        DEFAULT_SEGMENT,
    )?;
    log::info!(
        "split: {} train / {} valid / {} test",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );

    let outcome = train::train(&corpus.sequences, &split.train, &split.valid, &train_config)?;
    log::info!("trained {} steps, best valid top-1 {:.4}", outcome.steps, outcome.best_valid_top1);

    checkpoint::save(&outcome.store, config.digest()?, &out.join("model.ckpt"))?;
    let mut w = BufWriter::new(File::create(out.join("words.vocab"))?);
    outcome.vocabs.words.write_sidecar(&mut w)?;
    let mut w = BufWriter::new(File::create(out.join("apps.vocab"))?);
    outcome.vocabs.apps.write_sidecar(&mut w)?;
    let mut w = BufWriter::new(File::create(out.join("train_log.csv"))?);
    train::write_log_csv(&mut w, &outcome.log)?;

    let table = comparison_table(&corpus, &split, &outcome, config)?;
    let mut w = BufWriter::new(File::create(out.join("comparison.csv"))?);
    eval::write_comparison_csv(&mut w, &table)?;
    let model_report = &table.iter().find(|(n, _)| n == "Our Model").expect("fixed row set").1;
    let mut w = BufWriter::new(File::create(out.join("report.json"))?);
    eval::write_report_json(&mut w, model_report)?;
    if config.eval.dump_events {
        per_event_dump(&corpus, &split, &outcome, config, &out.join("events_detail.jsonl"))?;
    }

    for (name, report) in &table {
        log::info!(
            "{name}: top1 {:.4} top3 {:.4} abs {:.3} rel {:.4}",
            report.overall.top1,
            report.overall.top3,
            report.overall.abs_rank,
            report.overall.rel_rank
        );
    }
    Ok(RunArtifacts { corpus, split, outcome, table })
}

/// Reads the comparison table back from a run directory's CSV.
pub fn read_comparison_csv(path: &Path) -> Result<Vec<(String, f64)>, ClickseqError> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(ClickseqError::InvalidData(format!("bad comparison row: {line}")));
        }
        let top1: f64 = fields[2]
            .parse()
            .map_err(|_| ClickseqError::InvalidData(format!("bad top1 in: {line}")))?;
        rows.push((fields[0].to_string(), top1));
    }
    Ok(rows)
}
