//! Acceptance suite: one test per release criterion, each ending in a single
//! PASS line (visible with `--nocapture`). Criteria 4-7 share one trained
//! desk-scale fixture, sized so the whole suite fits a single-core CI budget.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use clickseq::baselines::LrTrainConfig;
use clickseq::config::RunConfig;
use clickseq::embed::{FeatureFlags, Vocabulary};
use clickseq::eval::{
    aggregate, evaluate_counter_baseline, evaluate_pairwise_baseline, score_event,
    switch_access_steps, CounterBaseline, EventContext, EventOutcome, Metrics, PairwiseBaseline,
};
use clickseq::model::{def_model_params, loss, predict, ModelConfig, Vocabs};
use clickseq::nn::gradcheck::check_gradients;
use clickseq::nn::layers::{def_encoder, transformer_encoder};
use clickseq::nn::params::{ParameterStore, Session};
use clickseq::nn::tape::{Tape, Var};
use clickseq::pipeline;
use clickseq::synth::{generate, Corpus, WorldConfig};
use clickseq::train::{
    build_vocabs, request_for, split_examples, top1_accuracy, train, SplitExamples, SplitMode,
    SplitSpec, TrainConfig, TrainOutcome, DEFAULT_SEGMENT,
};
use clickseq::types::{BBox, ClickEvent, ElemType, EventTime, Screen, UiElement};

const GRAD_STEP: f64 = 5e-5;
const GRAD_TOL: f64 = 1e-4;

fn pass(criterion: usize, what: &str) {
    println!("ACCEPTANCE {criterion} ({what}): PASS");
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness.

fn rand_arr(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() - 0.5)
}

/// Gradchecks `sum(op(x[, y]) * c)` for a random constant readout `c`.
fn check_op<F>(name: &str, shapes: &[(usize, usize)], op: F)
where
    F: Fn(&Session<f64>, &Tape<f64>, &[Var]) -> Var,
{
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store: ParameterStore<f64> = ParameterStore::new();
    for (i, &(r, c)) in shapes.iter().enumerate() {
        store.def(&format!("x{i}"), rand_arr(&mut rng, r, c));
    }
    let report = check_gradients(
        &mut store,
        |store, _| {
            let tape: Tape<f64> = Tape::new();
            let s = Session::new(&tape, store);
            let xs: Vec<Var> = (0..shapes.len()).map(|i| s.p(&format!("x{i}"))).collect();
            let z = op(&s, &tape, &xs);
            let shape = tape.shape(z);
            let mut c_rng = ChaCha8Rng::seed_from_u64(99);
            let c = tape.constant(rand_arr(&mut c_rng, shape.0, shape.1));
            let l = tape.sum_all(tape.mul(z, c));
            let mut grads = tape.backward(l);
            (tape.scalar(l), s.collect_grads(&mut grads))
        },
        GRAD_STEP,
        1,
    );
    assert!(report.max_rel_error < GRAD_TOL, "{name}: {report:?}");
}

fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        d: 8,
        screen_encoder_layers: 1,
        sequence_encoder_layers: 1,
        pointer_layers: 1,
        heads: 2,
        history_size: 4,
        dropout: 0.0,
        max_elements: 64,
        flags: FeatureFlags::default(),
    }
}

fn tiny_vocabs() -> Vocabs {
    let words = Vocabulary::build(
        ["send", "cancel", "alarm", "set", "play", "stop", "open"].into_iter().map(String::from),
        1,
    );
    let apps = Vocabulary::build(["com.mail", "com.clock"].into_iter().map(String::from), 1);
    Vocabs { words, apps }
}

fn screen_of(texts: &[&str], app: &str) -> Screen {
    let elements = texts
        .iter()
        .enumerate()
        .map(|(i, t)| UiElement {
            text: (*t).to_string(),
            elem_type: ElemType::Button,
            bbox: BBox::new(10, 100 * i as i32, 300, 100 * i as i32 + 80),
            preorder_index: i,
        })
        .collect();
    Screen::new(elements, 1080, 1920, app.into()).unwrap()
}

fn tiny_request() -> (clickseq::types::PredictionRequest, usize) {
    let e1 = ClickEvent::new(
        screen_of(&["send", "cancel", "open"], "com.mail"),
        1,
        EventTime::new(1_000_000, 60),
    )
    .unwrap();
    let e2 = ClickEvent::new(
        screen_of(&["alarm", "set", "stop"], "com.clock"),
        0,
        EventTime::new(2_000_000, 60),
    )
    .unwrap();
    let screen = screen_of(&["play", "stop", "cancel", "send"], "com.clock");
    (
        clickseq::types::PredictionRequest {
            history: vec![e1, e2],
            current_screen: screen,
            current_time: EventTime::new(3_600_000, 60),
            current_app: "com.clock".into(),
        },
        2,
    )
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = std::time::Instant::now();

    check_op("add", &[(3, 4), (3, 4)], |_, t, x| t.add(x[0], x[1]));
    check_op("add_row", &[(3, 4), (1, 4)], |_, t, x| t.add_row(x[0], x[1]));
    check_op("sub", &[(3, 4), (3, 4)], |_, t, x| t.sub(x[0], x[1]));
    check_op("mul", &[(3, 4), (3, 4)], |_, t, x| t.mul(x[0], x[1]));
    check_op("scale", &[(3, 4)], |_, t, x| t.scale(x[0], -1.7));
    check_op("matmul", &[(3, 4), (4, 5)], |_, t, x| t.matmul(x[0], x[1]));
    check_op("matmul_nt", &[(3, 4), (5, 4)], |_, t, x| t.matmul_nt(x[0], x[1]));
    check_op("concat_rows", &[(2, 4), (3, 4)], |_, t, x| t.concat_rows(&[x[0], x[1]]));
    check_op("concat_cols", &[(3, 2), (3, 4)], |_, t, x| t.concat_cols(&[x[0], x[1]]));
    check_op("slice_cols", &[(3, 6)], |_, t, x| t.slice_cols(x[0], 1, 4));
    check_op("select_row", &[(4, 5)], |_, t, x| t.select_row(x[0], 2));
    check_op("mean_rows", &[(4, 5)], |_, t, x| t.mean_rows(x[0]));
    check_op("gelu", &[(3, 4)], |_, t, x| t.gelu(x[0]));
    check_op("layernorm", &[(3, 6), (1, 6), (1, 6)], |_, t, x| t.layernorm(x[0], x[1], x[2]));
    check_op("softmax_rows", &[(3, 5)], |_, t, x| t.softmax_rows(x[0], &[true; 5]));
    check_op("dropout_eval_identity", &[(3, 4)], |_, t, x| t.dropout(x[0], 0.5));
    check_op("gather_rows", &[(6, 4)], |_, t, x| t.gather_rows(x[0], &[1, 3, 3, 0]).unwrap());

    // softmax_xent is already scalar; no readout needed
    {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store: ParameterStore<f64> = ParameterStore::new();
        store.def("x0", rand_arr(&mut rng, 1, 6));
        let report = check_gradients(
            &mut store,
            |store, _| {
                let tape: Tape<f64> = Tape::new();
                let s = Session::new(&tape, store);
                let l = tape.softmax_xent(s.p("x0"), 2, &[true; 6]).unwrap();
                let mut grads = tape.backward(l);
                (tape.scalar(l), s.collect_grads(&mut grads))
            },
            GRAD_STEP,
            1,
        );
        assert!(report.max_rel_error < GRAD_TOL, "softmax_xent: {report:?}");
    }

    // full loss, tiny config, every parameter
    let config = tiny_model_config();
    let vocabs = tiny_vocabs();
    let mut store: ParameterStore<f64> = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    def_model_params(&mut store, &config, &vocabs, &mut rng);
    let (request, target) = tiny_request();
    let report = check_gradients(
        &mut store,
        |store, _| {
            let tape: Tape<f64> = Tape::new();
            let s = Session::new(&tape, store);
            let l = loss(&s, &vocabs, &request, target, &config).unwrap();
            let mut grads = tape.backward(l);
            (tape.scalar(l), s.collect_grads(&mut grads))
        },
        GRAD_STEP,
        4,
    );
    assert!(report.max_rel_error < GRAD_TOL, "full loss: {report:?}");

    assert!(start.elapsed().as_secs() < 120, "took {:?}", start.elapsed());
    pass(1, "gradient correctness");
}

// ---------------------------------------------------------------------------
// 2. Normalization & invariance.

#[test]
fn criterion_2_normalization_and_invariance() {
    // probabilities sum to 1 on 1,000 generated screens
    let world = WorldConfig { n_users: 4, weeks: 1, seed: 21, ..WorldConfig::default() };
    let corpus = generate(&world).unwrap();
    let spec = SplitSpec { mode: SplitMode::ByTime, seed: 21, ..SplitSpec::default() };
    let config = tiny_model_config();
    let split = split_examples(&corpus.sequences, &spec, config.history_size, DEFAULT_SEGMENT).unwrap();
    let vocabs = build_vocabs(&corpus.sequences, &split.train, 2);
    let mut store: ParameterStore<f64> = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    def_model_params(&mut store, &config, &vocabs, &mut rng);

    let mut checked = 0;
    for ex in split.train.iter().chain(&split.valid).chain(&split.test) {
        if checked >= 1_000 {
            break;
        }
        let (request, _) = request_for(&corpus.sequences, ex);
        let result = predict(&store, &vocabs, &request, &config).unwrap();
        let sum: f64 = result.probabilities.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-6, "prob sum {sum}");
        checked += 1;
    }
    assert_eq!(checked, 1_000, "not enough screens generated");

    // additive shift of the alignment scores leaves the ranking unchanged
    let tape: Tape<f64> = Tape::new();
    for i in 0..100 {
        let scores = rand_arr(&mut rng, 1, 8 + i % 17);
        let n = scores.ncols();
        let rank = |arr: &Array2<f64>| {
            let probs = tape.value(tape.softmax_rows(tape.constant(arr.clone()), &vec![true; n]));
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| probs[(0, b)].partial_cmp(&probs[(0, a)]).unwrap().then(a.cmp(&b)));
            order
        };
        let shifted = scores.mapv(|v| v + 7.25);
        assert_eq!(rank(&scores), rank(&shifted), "shift changed ranking (case {i})");
    }

    // permutation equivariance of the screen encoder
    let mut store: ParameterStore<f64> = ParameterStore::new();
    def_encoder(&mut store, "enc", 2, 16, &mut rng);
    let n = 12;
    let x = rand_arr(&mut rng, n, 16);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let run = |input: &Array2<f64>| -> Array2<f64> {
        let tape: Tape<f64> = Tape::new();
        let s = Session::new(&tape, &store);
        let h = transformer_encoder(&s, "enc", tape.leaf(input.clone()), 2, 2, &[true; 12], 0.0)
            .unwrap();
        tape.value(h)
    };
    let h = run(&x);
    let mut xp = Array2::zeros((n, 16));
    for (i, &p) in perm.iter().enumerate() {
        xp.row_mut(i).assign(&x.row(p));
    }
    let hp = run(&xp);
    for (i, &p) in perm.iter().enumerate() {
        for j in 0..16 {
            assert!(
                (hp[(i, j)] - h[(p, j)]).abs() < 1e-5,
                "latent ({i},{j}) differs: {} vs {}",
                hp[(i, j)],
                h[(p, j)]
            );
        }
    }
    pass(2, "normalization & invariance");
}

// ---------------------------------------------------------------------------
// 3. Metric oracle equivalence.

#[test]
fn criterion_3_metric_oracle_equivalence() {
    // aggregate() vs a brute-force recomputation on 10k random outcomes
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let apps = ["com.a", "com.b", "com.c"];
    let outcomes: Vec<EventOutcome> = (0..10_000)
        .map(|_| {
            let n = rng.gen_range(2..=40);
            let mut ranking: Vec<usize> = (0..n).collect();
            ranking.shuffle(&mut rng);
            let target = rng.gen_range(0..n);
            let app = apps[rng.gen_range(0..apps.len())];
            let prev = if rng.gen::<f64>() < 0.3 {
                None
            } else {
                Some(apps[rng.gen_range(0..apps.len())].to_string())
            };
            score_event(&ranking, target, &EventContext { app_id: app.into(), prev_app_id: prev })
                .unwrap()
        })
        .collect();
    let report = aggregate(&outcomes).unwrap();

    let brute = |subset: Vec<&EventOutcome>| -> Metrics {
        let n = subset.len() as f64;
        Metrics {
            top1: subset.iter().filter(|o| o.target_rank == 0).count() as f64 / n,
            top3: subset.iter().filter(|o| o.target_rank < 3).count() as f64 / n,
            abs_rank: subset.iter().map(|o| o.target_rank as f64).sum::<f64>() / n,
            rel_rank: subset.iter().map(|o| o.target_rank as f64 / o.n_candidates as f64).sum::<f64>() / n,
            n_events: subset.len(),
        }
    };
    assert_eq!(report.overall, brute(outcomes.iter().collect()));
    let mut buckets: BTreeMap<usize, Vec<&EventOutcome>> = BTreeMap::new();
    for o in &outcomes {
        buckets.entry(o.screen_size_bucket).or_default().push(o);
    }
    assert_eq!(report.by_screen_size.len(), buckets.len());
    for (bucket, subset) in buckets {
        assert_eq!(report.by_screen_size[&bucket], brute(subset), "bucket {bucket}");
    }
    assert_eq!(report.in_app.unwrap(), brute(outcomes.iter().filter(|o| !o.cross_app).collect()));
    assert_eq!(report.cross_app.unwrap(), brute(outcomes.iter().filter(|o| o.cross_app).collect()));

    // a random scorer's mean relative ranking sits near one half
    let world = WorldConfig { n_users: 40, weeks: 1, seed: 34, ..WorldConfig::default() };
    let corpus = generate(&world).unwrap();
    let mut outcomes = Vec::new();
    for seq in &corpus.sequences {
        for (i, event) in seq.events.iter().enumerate() {
            let mut ranking: Vec<usize> = (0..event.screen.len()).collect();
            ranking.shuffle(&mut rng);
            let context = EventContext {
                app_id: event.app_id.clone(),
                prev_app_id: i.checked_sub(1).map(|p| seq.events[p].app_id.clone()),
            };
            outcomes.push(score_event(&ranking, event.clicked_index, &context).unwrap());
        }
    }
    assert!(outcomes.len() >= 10_000, "{} events", outcomes.len());
    let rel = aggregate(&outcomes).unwrap().overall.rel_rank;
    assert!((0.46..=0.52).contains(&rel), "random scorer rel rank {rel}");
    pass(3, "metric oracle equivalence");
}

// ---------------------------------------------------------------------------
// Shared desk-scale fixture for criteria 4-7.

struct Desk {
    bayes_top1: f64,
    frequency: Metrics,
    global_frequency: Metrics,
    lr: Metrics,
    full: Vec<EventOutcome>,
    full_top1: f64,
    no_text_top1: f64,
    no_attn_top1: f64,
    h0_top1: f64,
    h1_top1: f64,
}

fn desk_world() -> WorldConfig {
    WorldConfig { n_users: 24, seed: 4242, ..WorldConfig::default() }
}

fn desk_train_config() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            d: 24,
            screen_encoder_layers: 1,
            sequence_encoder_layers: 1,
            pointer_layers: 1,
            heads: 2,
            history_size: 3,
            dropout: 0.1,
            max_elements: 64,
            flags: FeatureFlags::default(),
        },
        batch_size: 32,
        max_steps: 2_400,
        eval_every: 200,
        valid_sample: 200,
        base_lr: 1e-3,
        warmup: 200,
        seed: 4242,
        ..TrainConfig::default()
    }
}

fn model_outcomes(
    corpus: &Corpus,
    split: &SplitExamples,
    outcome: &TrainOutcome,
    config: &ModelConfig,
) -> Vec<EventOutcome> {
    split
        .test
        .iter()
        .map(|ex| {
            let (request, target) = request_for(&corpus.sequences, ex);
            let result = predict(&outcome.store, &outcome.vocabs, &request, config).unwrap();
            let seq = &corpus.sequences[ex.user];
            let context = EventContext {
                app_id: seq.events[ex.event].app_id.clone(),
                prev_app_id: ex.event.checked_sub(1).map(|p| seq.events[p].app_id.clone()),
            };
            score_event(&result.ranked_indices, target, &context).unwrap()
        })
        .collect()
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let corpus = generate(&desk_world()).unwrap();
        let base = desk_train_config();
        let spec = SplitSpec { mode: SplitMode::ByTime, seed: 4242, ..SplitSpec::default() };
        let split =
            split_examples(&corpus.sequences, &spec, base.model.history_size, DEFAULT_SEGMENT)
                .unwrap();

        let counter = |kind| {
            evaluate_counter_baseline(&corpus.sequences, &split.test, kind).unwrap().overall
        };
        let lr = evaluate_pairwise_baseline(
            &corpus.sequences,
            &split,
            PairwiseBaseline::LogisticRegression,
            &LrTrainConfig::default(),
        )
        .unwrap()
        .overall;

        let run = |config: &TrainConfig| {
            let outcome = train(&corpus.sequences, &split.train, &split.valid, config).unwrap();
            model_outcomes(&corpus, &split, &outcome, &config.model)
        };
        let full = run(&base);
        let variant = |f: &dyn Fn(&mut ModelConfig)| {
            let mut config = base.clone();
            f(&mut config.model);
            aggregate(&run(&config)).unwrap().overall.top1
        };

        Desk {
            bayes_top1: pipeline::bayes_report(&corpus, &split.test).unwrap().overall.top1,
            frequency: counter(CounterBaseline::Frequency),
            global_frequency: counter(CounterBaseline::GlobalFrequency),
            lr,
            full_top1: aggregate(&full).unwrap().overall.top1,
            full,
            no_text_top1: variant(&|c| c.flags.use_text = false),
            no_attn_top1: variant(&|c| c.flags.use_screen_encoder = false),
            h0_top1: variant(&|c| c.history_size = 0),
            h1_top1: variant(&|c| c.history_size = 1),
        }
    })
}

#[test]
fn criterion_4_ordering_reproduction() {
    let d = desk();
    assert!(
        d.full_top1 >= d.frequency.top1 + 0.10,
        "model {:.4} vs frequency {:.4}",
        d.full_top1,
        d.frequency.top1
    );
    assert!(
        d.frequency.top1 > d.global_frequency.top1,
        "frequency {:.4} vs global {:.4}",
        d.frequency.top1,
        d.global_frequency.top1
    );
    assert!(
        d.lr.top1 > d.frequency.top1,
        "lr {:.4} vs frequency {:.4}",
        d.lr.top1,
        d.frequency.top1
    );
    assert!(
        d.full_top1 <= d.bayes_top1,
        "model {:.4} above bayes oracle {:.4}",
        d.full_top1,
        d.bayes_top1
    );
    pass(4, "ordering reproduction");
}

#[test]
fn criterion_5_ablation_directionality() {
    let d = desk();
    assert!(
        d.full_top1 - d.no_text_top1 >= 0.05,
        "no-text drop {:.4} (full {:.4}, no_text {:.4})",
        d.full_top1 - d.no_text_top1,
        d.full_top1,
        d.no_text_top1
    );
    assert!(
        d.h1_top1 >= d.h0_top1 + 0.02,
        "h1 {:.4} vs h0 {:.4}",
        d.h1_top1,
        d.h0_top1
    );
    assert!(
        d.full_top1 - d.no_attn_top1 >= 0.01,
        "no-screen-attention drop {:.4} (full {:.4}, no_attn {:.4})",
        d.full_top1 - d.no_attn_top1,
        d.full_top1,
        d.no_attn_top1
    );
    pass(5, "ablation directionality");
}

#[test]
fn criterion_6_screen_size_trend() {
    let d = desk();
    let top1_where = |pred: &dyn Fn(&EventOutcome) -> bool| {
        let subset: Vec<&EventOutcome> = d.full.iter().filter(|o| pred(o)).collect();
        assert!(!subset.is_empty());
        subset.iter().filter(|o| o.target_rank == 0).count() as f64 / subset.len() as f64
    };
    let small = top1_where(&|o| o.n_candidates <= 10);
    let large = top1_where(&|o| o.n_candidates > 20);
    assert!(small > large, "small screens {small:.4} vs large screens {large:.4}");
    pass(6, "screen-size trend");
}

#[test]
fn criterion_7_switch_access() {
    let d = desk();
    let (spatial, ranked) = switch_access_steps(&d.full);
    assert!(ranked < spatial, "ranked {ranked:.3} vs spatial {spatial:.3}");
    pass(7, "switch-access analysis");
}

// ---------------------------------------------------------------------------
// 8. Determinism.

#[test]
fn criterion_8_determinism() {
    let mut config = RunConfig::from_toml_str(
        r#"
        seed = 88

        [world]
        n_users = 4
        weeks = 1
        n_apps = 3
        screens_per_app = 4

        [model]
        d = 16
        screen_encoder_layers = 1
        sequence_encoder_layers = 1
        pointer_layers = 1
        heads = 2
        history_size = 2

        [training]
        max_steps = 150
        eval_every = 75
        valid_sample = 50
        "#,
    )
    .unwrap();
    config.set_seed(88);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        pool.install(|| pipeline::end_to_end(&config, dir.path()).unwrap());
    }
    for file in ["events.jsonl", "ground_truth.json", "train_log.csv", "comparison.csv", "report.json"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    pass(8, "determinism");
}

// ---------------------------------------------------------------------------
// 9. Overfit sanity.

#[test]
fn criterion_9_overfit_sanity() {
    let start = std::time::Instant::now();
    let world = WorldConfig { n_users: 3, weeks: 1, seed: 99, ..WorldConfig::default() };
    let corpus = generate(&world).unwrap();
    let spec = SplitSpec { mode: SplitMode::ByTime, seed: 99, ..SplitSpec::default() };
    let config = TrainConfig {
        model: ModelConfig { history_size: 2, ..tiny_model_config() },
        batch_size: 25,
        max_steps: 2_000,
        eval_every: 100,
        patience: 20,
        valid_sample: 50,
        base_lr: 1e-3,
        warmup: 100,
        seed: 99,
        ..TrainConfig::default()
    };
    let split = split_examples(&corpus.sequences, &spec, config.model.history_size, DEFAULT_SEGMENT)
        .unwrap();
    let memorize: Vec<_> = split.train.iter().take(50).cloned().collect();
    assert_eq!(memorize.len(), 50);

    let outcome = train(&corpus.sequences, &memorize, &memorize, &config).unwrap();
    let top1 = top1_accuracy(&corpus.sequences, &memorize, &outcome.store, &outcome.vocabs, &config.model);
    assert!(outcome.steps <= 2_000);
    assert!(top1 > 0.95, "memorization top-1 {top1:.4} after {} steps", outcome.steps);
    assert!(start.elapsed().as_secs() < 120, "took {:?}", start.elapsed());
    pass(9, "overfit sanity");
}
