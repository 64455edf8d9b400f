//! Reference predictors: Recency, Frequency (personal and global), and the
//! pairwise-feature Logistic Regression / Bernoulli Naive Bayes models.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::coord_bin;
use crate::types::{ClickEvent, ClickSequence, ElemType, PredictionRequest, Screen, UiElement};

/// Preorder element indices of the current screen, best first.
pub type Ranking = Vec<usize>;

/// Cross-visit element identity: text, type, and preorder position.
pub type ElementKey = (String, ElemType, usize);

pub fn element_key(e: &UiElement) -> ElementKey {
    (e.text.clone(), e.elem_type, e.preorder_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Personal,
    Global,
}

/// Per-user and pooled click statistics keyed by (screen_hash, element_key).
#[derive(Debug, Clone, Default)]
pub struct ClickCounter {
    per_user: HashMap<String, HashMap<(u128, ElementKey), (u64, i64)>>,
    global: HashMap<(u128, ElementKey), u64>,
}

impl ClickCounter {
    pub fn new() -> ClickCounter {
        ClickCounter::default()
    }

    pub fn observe(&mut self, user_id: &str, event: &ClickEvent) {
        let key = (event.screen.screen_hash, element_key(event.clicked_element()));
        let entry = self
            .per_user
            .entry(user_id.to_string())
            .or_default()
            .entry(key.clone())
            .or_insert((0, i64::MIN));
        entry.0 += 1;
        entry.1 = entry.1.max(event.time.timestamp_ms);
        *self.global.entry(key).or_insert(0) += 1;
    }

    pub fn observe_sequences(&mut self, sequences: &[ClickSequence]) {
        for seq in sequences {
            for event in &seq.events {
                self.observe(&seq.user_id, event);
            }
        }
    }

    pub fn personal_count(&self, user_id: &str, screen_hash: u128, key: &ElementKey) -> u64 {
        self.per_user
            .get(user_id)
            .and_then(|m| m.get(&(screen_hash, key.clone())))
            .map(|(c, _)| *c)
            .unwrap_or(0)
    }

    pub fn global_count(&self, screen_hash: u128, key: &ElementKey) -> u64 {
        *self.global.get(&(screen_hash, key.clone())).unwrap_or(&0)
    }

    pub fn last_clicked_ms(&self, user_id: &str, screen_hash: u128, key: &ElementKey) -> Option<i64> {
        self.per_user
            .get(user_id)
            .and_then(|m| m.get(&(screen_hash, key.clone())))
            .map(|(_, ts)| *ts)
    }
}

/// Most recently clicked first; never-clicked elements follow in preorder.
pub fn recency_rank(counter: &ClickCounter, user_id: &str, screen: &Screen) -> Ranking {
    let mut order: Vec<usize> = (0..screen.len()).collect();
    let ts: Vec<Option<i64>> = screen
        .elements
        .iter()
        .map(|e| counter.last_clicked_ms(user_id, screen.screen_hash, &element_key(e)))
        .collect();
    order.sort_by(|&a, &b| match (ts[a], ts[b]) {
        (Some(x), Some(y)) => y.cmp(&x).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    order
}

/// Most clicked first in the chosen scope; zero-count elements follow in
/// preorder.
pub fn frequency_rank(
    counter: &ClickCounter,
    user_id: &str,
    screen: &Screen,
    scope: Scope,
) -> Ranking {
    let counts: Vec<u64> = screen
        .elements
        .iter()
        .map(|e| match scope {
            Scope::Personal => counter.personal_count(user_id, screen.screen_hash, &element_key(e)),
            Scope::Global => counter.global_count(screen.screen_hash, &element_key(e)),
        })
        .collect();
    let mut order: Vec<usize> = (0..screen.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
}

// ---------------------------------------------------------------------------
// Pairwise-feature models.

const TYPE_BINS: usize = ElemType::ALL.len() + 1; // +1 missing-prev bin
const COORD_FEATURE_BINS: usize = 11; // 10 coarse bins + missing
const DAY_BINS: usize = 7;
const HOUR_BINS: usize = 24;

/// Sparse binary feature vector: exactly one active bit per block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseFeature {
    pub active: Vec<usize>,
}

/// Fixed featurization layout built from the training corpus: full-text and
/// app-id interning plus the block offsets.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    texts: HashMap<String, usize>,
    apps: HashMap<String, usize>,
}

impl FeatureSpace {
    pub fn build(sequences: &[ClickSequence]) -> FeatureSpace {
        let mut texts = HashMap::new();
        let mut apps = HashMap::new();
        for seq in sequences {
            for event in &seq.events {
                let n = apps.len();
                apps.entry(event.app_id.clone()).or_insert(n);
                for e in &event.screen.elements {
                    let n = texts.len();
                    texts.entry(e.text.clone()).or_insert(n);
                }
            }
        }
        FeatureSpace { texts, apps }
    }

    fn text_bins(&self) -> usize {
        self.texts.len() + 1
    }

    fn app_bins(&self) -> usize {
        self.apps.len() + 1
    }

    /// One element side: text, type, 4 coarse position bins.
    fn element_block_sizes(&self) -> [usize; 6] {
        [
            self.text_bins(),
            TYPE_BINS,
            COORD_FEATURE_BINS,
            COORD_FEATURE_BINS,
            COORD_FEATURE_BINS,
            COORD_FEATURE_BINS,
        ]
    }

    /// Total feature dimensionality.
    pub fn dim(&self) -> usize {
        2 * self.element_block_sizes().iter().sum::<usize>() + DAY_BINS + HOUR_BINS + self.app_bins()
    }

    /// Number of active bits in every feature vector (one per block).
    pub fn n_blocks(&self) -> usize {
        15
    }

    fn element_bins(&self, element: Option<(&UiElement, &Screen)>) -> [usize; 6] {
        match element {
            Some((e, screen)) => [
                *self.texts.get(&e.text).unwrap_or(&self.texts.len()),
                e.elem_type.ordinal(),
                coord_bin(e.bbox.left, screen.screen_width) / 10,
                coord_bin(e.bbox.top, screen.screen_height) / 10,
                coord_bin(e.bbox.right, screen.screen_width) / 10,
                coord_bin(e.bbox.bottom, screen.screen_height) / 10,
            ],
            // missing previous element: the dedicated last bin of each block
            None => [
                self.text_bins() - 1,
                TYPE_BINS - 1,
                COORD_FEATURE_BINS - 1,
                COORD_FEATURE_BINS - 1,
                COORD_FEATURE_BINS - 1,
                COORD_FEATURE_BINS - 1,
            ],
        }
    }

    pub fn featurize(
        &self,
        prev: Option<(&UiElement, &Screen)>,
        candidate: (&UiElement, &Screen),
        time: &crate::types::EventTime,
        app_id: &str,
    ) -> PairwiseFeature {
        let sizes = self.element_block_sizes();
        let mut active = Vec::with_capacity(self.n_blocks());
        let mut offset = 0;
        for bins in [self.element_bins(prev), self.element_bins(Some(candidate))] {
            for (bin, size) in bins.into_iter().zip(sizes) {
                active.push(offset + bin);
                offset += size;
            }
        }
        active.push(offset + time.day_of_week as usize);
        offset += DAY_BINS;
        active.push(offset + time.hour_of_day as usize);
        offset += HOUR_BINS;
        active.push(offset + *self.apps.get(app_id).unwrap_or(&self.apps.len()));
        PairwiseFeature { active }
    }
}

/// Builds (feature, is_clicked) training pairs: per event, one positive and
/// `n − 1` negatives, with the previous event's clicked element as context.
pub fn make_training_pairs(
    space: &FeatureSpace,
    sequences: &[ClickSequence],
) -> Vec<(PairwiseFeature, bool)> {
    let mut pairs = Vec::new();
    for seq in sequences {
        let mut prev: Option<&ClickEvent> = None;
        for event in &seq.events {
            let prev_ctx = prev.map(|p| (p.clicked_element(), &p.screen));
            for (j, e) in event.screen.elements.iter().enumerate() {
                let f = space.featurize(prev_ctx, (e, &event.screen), &event.time, &event.app_id);
                pairs.push((f, j == event.clicked_index));
            }
            prev = Some(event);
        }
    }
    pairs
}

/// Weighted-cross-entropy logistic regression over sparse binary features.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticRegression {
    pub fn zeros(dim: usize) -> LogisticRegression {
        LogisticRegression { weights: vec![0.0; dim], bias: 0.0 }
    }

    fn logit(&self, f: &PairwiseFeature) -> f64 {
        self.bias + f.active.iter().map(|&i| self.weights[i]).sum::<f64>()
    }

    pub fn probability(&self, f: &PairwiseFeature) -> f64 {
        1.0 / (1.0 + (-self.logit(f)).exp())
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LrTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub pos_weight: f64,
    pub seed: u64,
}

impl Default for LrTrainConfig {
    fn default() -> Self {
        LrTrainConfig { epochs: 2, learning_rate: 0.01, pos_weight: 5.0, seed: 0 }
    }
}

pub fn train_lr(
    pairs: &[(PairwiseFeature, bool)],
    dim: usize,
    config: &LrTrainConfig,
) -> LogisticRegression {
    let mut model = LogisticRegression::zeros(dim);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (f, label) = &pairs[i];
            let y = if *label { 1.0 } else { 0.0 };
            let w = if *label { config.pos_weight } else { 1.0 };
            let err = (model.probability(f) - y) * w * config.learning_rate;
            model.bias -= err;
            for &d in &f.active {
                model.weights[d] -= err;
            }
        }
    }
    model
}

/// Bernoulli Naive Bayes with add-one smoothing and incremental batch
/// fitting. Positives count `pos_weight`-fold.
#[derive(Debug, Clone)]
pub struct NaiveBayes {
    dim: usize,
    pos_total: f64,
    neg_total: f64,
    pos_feat: Vec<f64>,
    neg_feat: Vec<f64>,
}

impl NaiveBayes {
    pub fn new(dim: usize) -> NaiveBayes {
        NaiveBayes {
            dim,
            pos_total: 0.0,
            neg_total: 0.0,
            pos_feat: vec![0.0; dim],
            neg_feat: vec![0.0; dim],
        }
    }

    pub fn fit_batch(&mut self, pairs: &[(PairwiseFeature, bool)], pos_weight: f64) {
        for (f, label) in pairs {
            let (total, feat, w) = if *label {
                (&mut self.pos_total, &mut self.pos_feat, pos_weight)
            } else {
                (&mut self.neg_total, &mut self.neg_feat, 1.0)
            };
            *total += w;
            for &d in &f.active {
                feat[d] += w;
            }
        }
    }

    fn p_feat(&self, d: usize, positive: bool) -> f64 {
        let (total, feat) = if positive {
            (self.pos_total, &self.pos_feat)
        } else {
            (self.neg_total, &self.neg_feat)
        };
        (feat[d] + 1.0) / (total + 2.0)
    }

    /// Full Bernoulli log-odds `log P(1|x) − log P(0|x)`, iterating every
    /// dimension. Exact but O(dim).
    pub fn log_odds_exact(&self, f: &PairwiseFeature) -> f64 {
        let prior = ((self.pos_total + 1.0) / (self.neg_total + 1.0)).ln();
        let mut score = prior;
        for d in 0..self.dim {
            let x = f.active.contains(&d);
            let (p1, p0) = (self.p_feat(d, true), self.p_feat(d, false));
            score += if x {
                (p1 / p0).ln()
            } else {
                ((1.0 - p1) / (1.0 - p0)).ln()
            };
        }
        score
    }

    pub fn posterior(&self, f: &PairwiseFeature) -> f64 {
        1.0 / (1.0 + (-self.log_odds_exact(f)).exp())
    }

    /// Ranking score: the log-odds up to a candidate-independent constant,
    /// O(active bits).
    fn score(&self, f: &PairwiseFeature) -> f64 {
        f.active
            .iter()
            .map(|&d| {
                let (p1, p0) = (self.p_feat(d, true), self.p_feat(d, false));
                (p1 / p0).ln() - ((1.0 - p1) / (1.0 - p0)).ln()
            })
            .sum()
    }
}

/// Anything that scores a pairwise feature vector; higher means more likely
/// to be clicked.
pub trait PairScorer {
    fn pair_score(&self, f: &PairwiseFeature) -> f64;
}

impl PairScorer for LogisticRegression {
    fn pair_score(&self, f: &PairwiseFeature) -> f64 {
        self.logit(f)
    }
}

impl PairScorer for NaiveBayes {
    fn pair_score(&self, f: &PairwiseFeature) -> f64 {
        self.score(f)
    }
}

/// Ranks the current screen's elements by model score, descending, with
/// exact ties broken by preorder index.
pub fn pairwise_rank<M: PairScorer>(
    model: &M,
    space: &FeatureSpace,
    request: &PredictionRequest,
) -> Ranking {
    let prev = request.history.last().map(|p| (p.clicked_element(), &p.screen));
    let scores: Vec<f64> = request
        .current_screen
        .elements
        .iter()
        .map(|e| {
            let f = space.featurize(
                prev,
                (e, &request.current_screen),
                &request.current_time,
                &request.current_app,
            );
            model.pair_score(&f)
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}
