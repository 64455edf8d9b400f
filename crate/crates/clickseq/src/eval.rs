//! Metrics and analyses: top-K accuracy, absolute/relative ranking,
//! breakdowns, ablation sweeps, switch-access traversal counts, and report
//! emission.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{
    self, make_training_pairs, pairwise_rank, ClickCounter, FeatureSpace, LrTrainConfig,
    NaiveBayes, Ranking, Scope,
};
use crate::model::{self, ModelConfig, Vocabs};
use crate::nn::params::ParameterStore;
use crate::train::{self, request_for, SplitExamples, TrainConfig, TrainingExample};
use crate::types::ClickSequence;
use crate::ClickseqError;

/// Everything needed to score one prediction.
#[derive(Debug, Clone)]
pub struct EventContext {
    pub app_id: String,
    pub prev_app_id: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EventOutcome {
    /// Zero-based rank of the clicked element in the prediction.
    pub target_rank: usize,
    /// Preorder index of the clicked element (spatial traversal position).
    pub target_index: usize,
    pub n_candidates: usize,
    pub app_id: String,
    /// Whether this event's app differs from the previous event's.
    pub cross_app: bool,
    /// Screen-size bucket: 1–10 elements → 0, 11–20 → 1, ...
    pub screen_size_bucket: usize,
}

pub fn screen_size_bucket(n_candidates: usize) -> usize {
    (n_candidates.max(1) - 1) / 10
}

/// Scores one ranked prediction against the clicked element.
pub fn score_event(
    ranking: &Ranking,
    target_index: usize,
    context: &EventContext,
) -> Result<EventOutcome, ClickseqError> {
    let target_rank = ranking
        .iter()
        .position(|&i| i == target_index)
        .ok_or(ClickseqError::TargetMissing)?;
    Ok(EventOutcome {
        target_rank,
        target_index,
        n_candidates: ranking.len(),
        app_id: context.app_id.clone(),
        cross_app: context
            .prev_app_id
            .as_ref()
            .map(|prev| *prev != context.app_id)
            .unwrap_or(false),
        screen_size_bucket: screen_size_bucket(ranking.len()),
    })
}

/// The four headline metrics over a set of outcomes.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Metrics {
    pub top1: f64,
    pub top3: f64,
    /// Mean zero-based rank of the target.
    pub abs_rank: f64,
    /// Mean of rank / n_candidates, in [0, 1).
    pub rel_rank: f64,
    pub n_events: usize,
}

fn metrics_of(outcomes: &[&EventOutcome]) -> Metrics {
    let n = outcomes.len() as f64;
    Metrics {
        top1: outcomes.iter().filter(|o| o.target_rank < 1).count() as f64 / n,
        top3: outcomes.iter().filter(|o| o.target_rank < 3).count() as f64 / n,
        abs_rank: outcomes.iter().map(|o| o.target_rank as f64).sum::<f64>() / n,
        rel_rank: outcomes
            .iter()
            .map(|o| o.target_rank as f64 / o.n_candidates as f64)
            .sum::<f64>()
            / n,
        n_events: outcomes.len(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub overall: Metrics,
    pub by_screen_size: BTreeMap<usize, Metrics>,
    pub by_app: BTreeMap<String, Metrics>,
    pub in_app: Option<Metrics>,
    pub cross_app: Option<Metrics>,
    /// Convention marker: rank 0 means a correct top-1 prediction.
    pub ranking_base: &'static str,
}

/// Aggregates outcomes into the report with all breakdowns.
pub fn aggregate(outcomes: &[EventOutcome]) -> Result<MetricsReport, ClickseqError> {
    if outcomes.is_empty() {
        return Err(ClickseqError::EmptyInput);
    }
    let all: Vec<&EventOutcome> = outcomes.iter().collect();
    let mut by_bucket: BTreeMap<usize, Vec<&EventOutcome>> = BTreeMap::new();
    let mut by_app: BTreeMap<String, Vec<&EventOutcome>> = BTreeMap::new();
    let mut in_app = Vec::new();
    let mut cross_app = Vec::new();
    for o in outcomes {
        by_bucket.entry(o.screen_size_bucket).or_default().push(o);
        by_app.entry(o.app_id.clone()).or_default().push(o);
        if o.cross_app {
            cross_app.push(o);
        } else {
            in_app.push(o);
        }
    }
    Ok(MetricsReport {
        overall: metrics_of(&all),
        by_screen_size: by_bucket.into_iter().map(|(k, v)| (k, metrics_of(&v))).collect(),
        by_app: by_app.into_iter().map(|(k, v)| (k, metrics_of(&v))).collect(),
        in_app: (!in_app.is_empty()).then(|| metrics_of(&in_app)),
        cross_app: (!cross_app.is_empty()).then(|| metrics_of(&cross_app)),
        ranking_base: "zero",
    })
}

/// Mean 1-based traversal counts to reach the target under spatial
/// (preorder) scanning vs model-ranked scanning.
pub fn switch_access_steps(outcomes: &[EventOutcome]) -> (f64, f64) {
    if outcomes.is_empty() {
        return (0.0, 0.0);
    }
    let n = outcomes.len() as f64;
    let spatial = outcomes.iter().map(|o| (o.target_index + 1) as f64).sum::<f64>() / n;
    let ranked = outcomes.iter().map(|o| (o.target_rank + 1) as f64).sum::<f64>() / n;
    (spatial, ranked)
}

fn context_for(sequences: &[ClickSequence], ex: &TrainingExample) -> EventContext {
    let seq = &sequences[ex.user];
    EventContext {
        app_id: seq.events[ex.event].app_id.clone(),
        prev_app_id: ex.event.checked_sub(1).map(|p| seq.events[p].app_id.clone()),
    }
}

/// Scores the neural model over a set of examples.
pub fn evaluate_model(
    sequences: &[ClickSequence],
    examples: &[TrainingExample],
    store: &ParameterStore<f32>,
    vocabs: &Vocabs,
    config: &ModelConfig,
) -> Result<MetricsReport, ClickseqError> {
    let outcomes: Result<Vec<EventOutcome>, ClickseqError> = examples
        .par_iter()
        .map(|ex| {
            let (request, target) = request_for(sequences, ex);
            let result = model::predict(store, vocabs, &request, config)?;
            score_event(&result.ranked_indices, target, &context_for(sequences, ex))
        })
        .collect();
    aggregate(&outcomes?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterBaseline {
    Recency,
    Frequency,
    GlobalFrequency,
}

/// Scores a counter baseline by replay: all non-test events are observed
/// first, then each user's test events are predicted and observed in order
/// (the counters keep learning during the test pass).
pub fn evaluate_counter_baseline(
    sequences: &[ClickSequence],
    test: &[TrainingExample],
    kind: CounterBaseline,
) -> Result<MetricsReport, ClickseqError> {
    let test_set: HashSet<(usize, usize)> = test.iter().map(|e| (e.user, e.event)).collect();
    let mut counter = ClickCounter::new();
    for (user, seq) in sequences.iter().enumerate() {
        for (i, event) in seq.events.iter().enumerate() {
            if !test_set.contains(&(user, i)) {
                counter.observe(&seq.user_id, event);
            }
        }
    }
    let mut outcomes = Vec::with_capacity(test.len());
    for (user, seq) in sequences.iter().enumerate() {
        for (i, event) in seq.events.iter().enumerate() {
            if !test_set.contains(&(user, i)) {
                continue;
            }
            let ranking = match kind {
                CounterBaseline::Recency => baselines::recency_rank(&counter, &seq.user_id, &event.screen),
                CounterBaseline::Frequency => {
                    baselines::frequency_rank(&counter, &seq.user_id, &event.screen, Scope::Personal)
                }
                CounterBaseline::GlobalFrequency => {
                    baselines::frequency_rank(&counter, &seq.user_id, &event.screen, Scope::Global)
                }
            };
            let ex = TrainingExample { user, event: i, history_len: 0, segment: 0 };
            outcomes.push(score_event(&ranking, event.clicked_index, &context_for(sequences, &ex))?);
            counter.observe(&seq.user_id, event);
        }
    }
    aggregate(&outcomes)
}

/// Per-user subsequences containing only the given examples' events, in
/// order. Used to fit pairwise models on the training split alone.
pub fn subsequences(sequences: &[ClickSequence], examples: &[TrainingExample]) -> Vec<ClickSequence> {
    let mut per_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for ex in examples {
        per_user.entry(ex.user).or_default().push(ex.event);
    }
    per_user
        .into_iter()
        .map(|(user, mut events)| {
            events.sort_unstable();
            ClickSequence {
                user_id: sequences[user].user_id.clone(),
                events: events.into_iter().map(|i| sequences[user].events[i].clone()).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairwiseBaseline {
    LogisticRegression,
    NaiveBayes,
}

/// Trains and scores a pairwise-feature baseline (LR or NB).
pub fn evaluate_pairwise_baseline(
    sequences: &[ClickSequence],
    split: &SplitExamples,
    kind: PairwiseBaseline,
    lr_config: &LrTrainConfig,
) -> Result<MetricsReport, ClickseqError> {
    let train_seqs = subsequences(sequences, &split.train);
    let space = FeatureSpace::build(&train_seqs);
    let pairs = make_training_pairs(&space, &train_seqs);

    let rank_fn: Box<dyn Fn(&crate::types::PredictionRequest) -> Ranking + Sync> = match kind {
        PairwiseBaseline::LogisticRegression => {
            let model = baselines::train_lr(&pairs, space.dim(), lr_config);
            let space = space.clone();
            Box::new(move |request| pairwise_rank(&model, &space, request))
        }
        PairwiseBaseline::NaiveBayes => {
            let mut model = NaiveBayes::new(space.dim());
            // incremental batch fitting over chunks
            for chunk in pairs.chunks(4096) {
                model.fit_batch(chunk, lr_config.pos_weight);
            }
            let space = space.clone();
            Box::new(move |request| pairwise_rank(&model, &space, request))
        }
    };

    let outcomes: Result<Vec<EventOutcome>, ClickseqError> = split
        .test
        .par_iter()
        .map(|ex| {
            let (request, target) = request_for(sequences, ex);
            score_event(&rank_fn(&request), target, &context_for(sequences, ex))
        })
        .collect();
    aggregate(&outcomes?)
}

/// The ablation grid: six feature ablations plus five history sizes.
pub fn ablation_variants(base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    let mut variants = Vec::new();
    let flag_offs: [(&str, fn(&mut ModelConfig)); 6] = [
        ("no_text", |c| c.flags.use_text = false),
        ("no_type", |c| c.flags.use_type = false),
        ("no_position", |c| c.flags.use_position = false),
        ("no_time", |c| c.flags.use_time = false),
        ("no_app", |c| c.flags.use_app = false),
        ("no_screen_attn", |c| c.flags.use_screen_encoder = false),
    ];
    for (name, apply) in flag_offs {
        let mut config = base.clone();
        apply(&mut config);
        variants.push((name.to_string(), config));
    }
    for h in [0usize, 1, 3, 5, 9] {
        let mut config = base.clone();
        config.history_size = h;
        variants.push((format!("h{h}"), config));
    }
    variants
}

/// Trains and evaluates the full model and every ablation variant.
pub fn run_ablations(
    sequences: &[ClickSequence],
    split: &SplitExamples,
    base: &TrainConfig,
) -> Result<Vec<(String, MetricsReport)>, ClickseqError> {
    let mut table = Vec::new();
    let mut grid = vec![("full".to_string(), base.model.clone())];
    grid.extend(ablation_variants(&base.model));
    for (name, model_config) in grid {
        let config = TrainConfig { model: model_config, ..base.clone() };
        let outcome = train::train(sequences, &split.train, &split.valid, &config)?;
        let report =
            evaluate_model(sequences, &split.test, &outcome.store, &outcome.vocabs, &config.model)?;
        log::info!("ablation {name}: top1 {:.4}", report.overall.top1);
        table.push((name, report));
    }
    Ok(table)
}

/// Writes a comparison table as CSV: one row per named report.
pub fn write_comparison_csv<W: Write>(
    w: &mut W,
    rows: &[(String, MetricsReport)],
) -> Result<(), ClickseqError> {
    writeln!(w, "variant,events,top1,top3,abs_rank,rel_rank")?;
    for (name, report) in rows {
        let m = &report.overall;
        writeln!(
            w,
            "{name},{},{:.6},{:.6},{:.6},{:.6}",
            m.n_events, m.top1, m.top3, m.abs_rank, m.rel_rank
        )?;
    }
    Ok(())
}

pub fn write_report_json<W: Write>(w: &mut W, report: &MetricsReport) -> Result<(), ClickseqError> {
    serde_json::to_writer_pretty(&mut *w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(app: &str, prev: Option<&str>) -> EventContext {
        EventContext { app_id: app.into(), prev_app_id: prev.map(String::from) }
    }

    fn outcome(rank: usize, n: usize) -> EventOutcome {
        EventOutcome {
            target_rank: rank,
            target_index: 0,
            n_candidates: n,
            app_id: "a".into(),
            cross_app: false,
            screen_size_bucket: screen_size_bucket(n),
        }
    }

    #[test]
    fn score_event_ranks() {
        let ranking: Ranking = (0..10).collect();
        let top = score_event(&ranking, 0, &ctx("a", None)).unwrap();
        assert_eq!(top.target_rank, 0);
        let third = score_event(&ranking, 2, &ctx("a", Some("b"))).unwrap();
        assert_eq!(third.target_rank, 2);
        assert!(third.cross_app);

        // scrambled fixture matches a linear-scan oracle
        let ranking = vec![4, 1, 3, 0, 2];
        for target in 0..5 {
            let want = ranking.iter().position(|&i| i == target).unwrap();
            assert_eq!(score_event(&ranking, target, &ctx("a", None)).unwrap().target_rank, want);
        }
        assert!(matches!(
            score_event(&ranking, 9, &ctx("a", None)),
            Err(ClickseqError::TargetMissing)
        ));
    }

    #[test]
    fn aggregate_basics() {
        let report = aggregate(&[outcome(0, 4)]).unwrap();
        assert_eq!(report.overall.top1, 1.0);
        assert_eq!(report.overall.abs_rank, 0.0);
        assert_eq!(report.overall.rel_rank, 0.0);

        // ranks {1 of 5, 3 of 10} → abs 2.0, rel (0.2 + 0.3)/2 = 0.25
        let report = aggregate(&[outcome(1, 5), outcome(3, 10)]).unwrap();
        assert_abs_diff_eq!(report.overall.abs_rank, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.overall.rel_rank, 0.25, epsilon = 1e-12);
        assert_eq!(report.overall.top3, 0.5);

        assert!(matches!(aggregate(&[]), Err(ClickseqError::EmptyInput)));
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let outcomes = vec![outcome(1, 5), outcome(3, 10), outcome(0, 7), outcome(6, 20)];
        let mut reversed = outcomes.clone();
        reversed.reverse();
        let a = aggregate(&outcomes).unwrap();
        let b = aggregate(&reversed).unwrap();
        assert_eq!(a.overall, b.overall);
    }

    #[test]
    fn buckets_have_width_ten() {
        assert_eq!(screen_size_bucket(1), 0);
        assert_eq!(screen_size_bucket(10), 0);
        assert_eq!(screen_size_bucket(11), 1);
        assert_eq!(screen_size_bucket(20), 1);
        assert_eq!(screen_size_bucket(64), 6);
    }

    #[test]
    fn random_ranker_relative_ranking_near_half() {
        // ≥10k synthetic events under a uniform-random ranking; the exact
        // expectation is (N−1)/(2N) per event under the zero-based convention
        let corpus = crate::synth::generate(&crate::synth::WorldConfig {
            n_users: 40,
            weeks: 1,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut outcomes = Vec::new();
        for seq in &corpus.sequences {
            for event in &seq.events {
                let n = event.screen.len();
                let rank = rng.gen_range(0..n);
                outcomes.push(outcome(rank, n));
            }
        }
        assert!(outcomes.len() >= 10_000, "{} events", outcomes.len());
        let report = aggregate(&outcomes).unwrap();
        assert!(
            (0.46..=0.52).contains(&report.overall.rel_rank),
            "rel rank {}",
            report.overall.rel_rank
        );
    }

    #[test]
    fn switch_access_means() {
        // target always top-1 → ranked mean 1.0
        let always_top: Vec<EventOutcome> = (0..50).map(|_| outcome(0, 9)).collect();
        let (_, ranked) = switch_access_steps(&always_top);
        assert_abs_diff_eq!(ranked, 1.0, epsilon = 1e-12);

        // uniform 5-element screens, random target → spatial mean ≈ 3.0
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let outcomes: Vec<EventOutcome> = (0..20_000)
            .map(|_| {
                let target = rng.gen_range(0..5usize);
                EventOutcome { target_index: target, ..outcome(0, 5) }
            })
            .collect();
        let (spatial, _) = switch_access_steps(&outcomes);
        assert!((spatial - 3.0).abs() < 0.05, "spatial mean {spatial}");
    }

    #[test]
    fn ablation_grid_enumeration() {
        let variants = ablation_variants(&ModelConfig::default());
        assert_eq!(variants.len(), 11);
        let names: Vec<&str> = variants.iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"no_text"));
        assert!(names.contains(&"no_screen_attn"));
        assert!(names.contains(&"h0"));
        assert!(names.contains(&"h9"));
        for (name, config) in &variants {
            assert!(config.validate().is_ok(), "{name}");
        }
    }

    #[test]
    fn comparison_csv_layout() {
        let report = aggregate(&[outcome(1, 5)]).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(&mut buf, &[("full".into(), report)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("variant,events,top1,top3,abs_rank,rel_rank\n"));
        assert!(text.contains("full,1,"));
    }
}
