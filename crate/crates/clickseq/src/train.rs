//! Dataset splitting, training-example construction, vocabulary building,
//! and the training loop with early stopping.

use std::collections::HashMap;
use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{tokenize, Vocabulary};
use crate::fan_out_seed;
use crate::model::{self, ModelConfig, Vocabs};
use crate::nn::params::{AdamConfig, LrSchedule, ParameterStore, Session};
use crate::nn::tape::Tape;
use crate::types::{ClickSequence, PredictionRequest};
use crate::ClickseqError;

pub const DEFAULT_SEGMENT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    ByUser,
    ByTime,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_frac: f64,
    pub valid_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { mode: SplitMode::ByUser, train_frac: 0.8, valid_frac: 0.1, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), ClickseqError> {
        if !(self.train_frac > 0.0
            && self.valid_frac > 0.0
            && self.train_frac + self.valid_frac < 1.0)
        {
            return Err(ClickseqError::Config("split fractions must leave room for test".into()));
        }
        Ok(())
    }
}

/// One training example: the event at `event` of user `user`, with up to
/// `history_len` immediately preceding events as history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingExample {
    pub user: usize,
    pub event: usize,
    pub history_len: usize,
    /// Batching segment within the user's sequence.
    pub segment: usize,
}

/// Examples for one sequence: every event yields one, histories may cross
/// segment boundaries (segments exist for batching only).
pub fn make_examples(
    sequence: &ClickSequence,
    user: usize,
    h: usize,
    segment: usize,
) -> Vec<TrainingExample> {
    (0..sequence.len())
        .map(|event| TrainingExample {
            user,
            event,
            history_len: event.min(h),
            segment: event / segment.max(1),
        })
        .collect()
}

/// Materializes the prediction request and target for an example.
pub fn request_for(
    sequences: &[ClickSequence],
    example: &TrainingExample,
) -> (PredictionRequest, usize) {
    let seq = &sequences[example.user];
    let current = &seq.events[example.event];
    let history = seq.events[example.event - example.history_len..example.event].to_vec();
    (
        PredictionRequest {
            history,
            current_screen: current.screen.clone(),
            current_time: current.time,
            current_app: current.app_id.clone(),
        },
        current.clicked_index,
    )
}

#[derive(Debug, Clone, Default)]
pub struct SplitExamples {
    pub train: Vec<TrainingExample>,
    pub valid: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
}

/// Splits a corpus into train/valid/test examples, either by whole users or
/// by time within each user's sequence.
pub fn split_examples(
    sequences: &[ClickSequence],
    spec: &SplitSpec,
    h: usize,
    segment: usize,
) -> Result<SplitExamples, ClickseqError> {
    spec.validate()?;
    if sequences.is_empty() {
        return Err(ClickseqError::EmptyInput);
    }
    let mut out = SplitExamples::default();
    match spec.mode {
        SplitMode::ByUser => {
            let n = sequences.len();
            if n < 3 {
                return Err(ClickseqError::TooFewUsers { need: 3, have: n });
            }
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(fan_out_seed(spec.seed, "split", 0));
            order.shuffle(&mut rng);
            let n_valid = ((n as f64 * spec.valid_frac).floor() as usize).max(1);
            let n_test =
                ((n as f64 * (1.0 - spec.train_frac - spec.valid_frac)).floor() as usize).max(1);
            let n_train = n - n_valid - n_test;
            for (i, &user) in order.iter().enumerate() {
                let examples = make_examples(&sequences[user], user, h, segment);
                if i < n_train {
                    out.train.extend(examples);
                } else if i < n_train + n_valid {
                    out.valid.extend(examples);
                } else {
                    out.test.extend(examples);
                }
            }
        }
        SplitMode::ByTime => {
            for (user, seq) in sequences.iter().enumerate() {
                let len = seq.len();
                let c1 = (len as f64 * spec.train_frac).floor() as usize;
                let c2 = (len as f64 * (spec.train_frac + spec.valid_frac)).floor() as usize;
                for example in make_examples(seq, user, h, segment) {
                    if example.event < c1 {
                        out.train.push(example);
                    } else if example.event < c2 {
                        out.valid.push(example);
                    } else {
                        out.test.push(example);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Builds the word and app vocabularies from training examples only.
pub fn build_vocabs(
    sequences: &[ClickSequence],
    train: &[TrainingExample],
    min_count: u64,
) -> Vocabs {
    let mut word_tokens = Vec::new();
    let mut app_tokens = Vec::new();
    for ex in train {
        let event = &sequences[ex.user].events[ex.event];
        app_tokens.push(event.app_id.clone());
        for e in &event.screen.elements {
            word_tokens.extend(tokenize(&e.text));
        }
    }
    let mut words = Vocabulary::build(word_tokens, min_count);
    let mut apps = Vocabulary::build(app_tokens, 1);
    words.freeze();
    apps.freeze();
    Vocabs { words, apps }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub max_steps: u64,
    pub eval_every: u64,
    pub patience: usize,
    /// Cap on validation examples per evaluation (subsampled
    /// deterministically); 0 means all.
    pub valid_sample: usize,
    pub base_lr: f64,
    pub warmup: u64,
    pub seed: u64,
    pub vocab_min_count: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            batch_size: 128,
            max_steps: 20_000,
            eval_every: 200,
            patience: 10,
            valid_sample: 2_000,
            base_lr: 1e-3,
            warmup: 1000,
            seed: 0,
            vocab_min_count: 2,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { base_lr: self.base_lr, warmup: self.warmup, ..LrSchedule::default() }
    }
}

/// One row of the training-curve log.
#[derive(Debug, Clone, Serialize)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_top1: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub store: ParameterStore<f32>,
    pub vocabs: Vocabs,
    pub best_valid_top1: f64,
    pub steps: u64,
    pub log: Vec<LogRow>,
}

/// Mean top-1 accuracy of greedy prediction over the given examples.
pub fn top1_accuracy(
    sequences: &[ClickSequence],
    examples: &[TrainingExample],
    store: &ParameterStore<f32>,
    vocabs: &Vocabs,
    config: &ModelConfig,
) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let hits: usize = examples
        .par_iter()
        .map(|ex| {
            let (request, target) = request_for(sequences, ex);
            let result = model::predict(store, vocabs, &request, config).unwrap();
            usize::from(result.top1() == target)
        })
        .sum();
    hits as f64 / examples.len() as f64
}

/// Trains the model with Adam, warm-up/decay, early stopping on validation
/// top-1 (patience in evaluations), and a structured loss curve.
pub fn train(
    sequences: &[ClickSequence],
    train_examples: &[TrainingExample],
    valid_examples: &[TrainingExample],
    config: &TrainConfig,
) -> Result<TrainOutcome, ClickseqError> {
    if train_examples.is_empty() {
        return Err(ClickseqError::EmptyInput);
    }
    config.model.validate()?;
    let vocabs = build_vocabs(sequences, train_examples, config.vocab_min_count);

    let mut store: ParameterStore<f32> = ParameterStore::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(fan_out_seed(config.seed, "init", 0));
    model::def_model_params(&mut store, &config.model, &vocabs, &mut init_rng);

    let schedule = config.schedule();
    let adam = AdamConfig::default();
    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let mut cursor = order.len(); // forces a shuffle on the first step
    let mut epoch = 0u64;

    let valid_subset: Vec<TrainingExample> = if config.valid_sample > 0
        && valid_examples.len() > config.valid_sample
    {
        let stride = valid_examples.len() / config.valid_sample;
        valid_examples.iter().step_by(stride.max(1)).take(config.valid_sample).copied().collect()
    } else {
        valid_examples.to_vec()
    };

    let mut log = Vec::new();
    let mut best_top1 = f64::NEG_INFINITY;
    let mut best_snapshot = store.values_snapshot();
    let mut evals_since_best = 0usize;
    let mut loss_window = Vec::new();

    for step in 1..=config.max_steps {
        if cursor + config.batch_size > order.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(fan_out_seed(config.seed, "shuffle", epoch));
            order.shuffle(&mut rng);
            cursor = 0;
            epoch += 1;
        }
        let batch = &order[cursor..(cursor + config.batch_size).min(order.len())];
        cursor += config.batch_size;

        // each example builds its own graph; gradients reduce in batch order
        let results: Vec<(f64, HashMap<String, Array2<f32>>)> = batch
            .par_iter()
            .enumerate()
            .map(|(i, &idx)| {
                let (request, target) = request_for(sequences, &train_examples[idx]);
                let tape: Tape<f32> =
                    Tape::training(fan_out_seed(config.seed, "dropout", step * 1_000_003 + i as u64));
                let s = Session::new(&tape, &store);
                let l = model::loss(&s, &vocabs, &request, target, &config.model)
                    .expect("training example must be scorable");
                let mut grads = tape.backward(l);
                (tape.scalar(l) as f64, s.collect_grads(&mut grads))
            })
            .collect();

        let scale = 1.0 / batch.len() as f32;
        let mut batch_loss = 0.0;
        let mut grads: HashMap<String, Array2<f32>> = HashMap::new();
        for (loss, g) in results {
            batch_loss += loss;
            for (name, grad) in g {
                grads
                    .entry(name)
                    .and_modify(|acc| *acc += &grad)
                    .or_insert(grad);
            }
        }
        batch_loss /= batch.len() as f64;
        for grad in grads.values_mut() {
            grad.mapv_inplace(|x| x * scale);
        }
        if !batch_loss.is_finite() {
            return Err(ClickseqError::Divergence { step });
        }
        store.adam_step(&grads, &schedule, &adam);
        loss_window.push(batch_loss);

        if step % config.eval_every == 0 || step == config.max_steps {
            let valid_top1 = if valid_subset.is_empty() {
                None
            } else {
                Some(top1_accuracy(sequences, &valid_subset, &store, &vocabs, &config.model))
            };
            let train_loss = loss_window.iter().sum::<f64>() / loss_window.len() as f64;
            loss_window.clear();
            log.push(LogRow { step, lr: schedule.lr(step), train_loss, valid_top1 });
            if let Some(top1) = valid_top1 {
                if top1 > best_top1 {
                    best_top1 = top1;
                    best_snapshot = store.values_snapshot();
                    evals_since_best = 0;
                } else {
                    evals_since_best += 1;
                    if evals_since_best >= config.patience {
                        break;
                    }
                }
            }
        }
    }

    let steps = store.step();
    if best_top1.is_finite() {
        store.restore_values(&best_snapshot);
    }
    Ok(TrainOutcome {
        store,
        vocabs,
        best_valid_top1: if best_top1.is_finite() { best_top1 } else { 0.0 },
        steps,
        log,
    })
}

/// Writes the training curve as CSV.
pub fn write_log_csv<W: Write>(w: &mut W, log: &[LogRow]) -> Result<(), ClickseqError> {
    writeln!(w, "step,lr,train_loss,valid_top1")?;
    for row in log {
        let top1 = row.valid_top1.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", row.step, row.lr, row.train_loss, top1)?;
    }
    Ok(())
}
