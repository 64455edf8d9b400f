//! Seeded synthetic click-sequence generator.
//!
//! Builds a world of apps, screens, and elements, then simulates users whose
//! clicks follow a known conditional distribution: global word
//! attractiveness, per-user word preferences, time-of-day structure, a
//! word-persistence chain between consecutive screens, per-(screen, element)
//! biases, and a recency/frequency habit loop. The realized distribution of
//! every generated event is exposed so tests can compare learned models
//! against the Bayes ceiling.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fan_out_seed;
use crate::types::{BBox, ClickEvent, ClickSequence, ElemType, EventTime, Screen, UiElement};
use crate::ClickseqError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_apps: usize,
    pub screens_per_app: usize,
    pub n_users: usize,
    pub weeks: usize,
    pub elem_count_mean: f64,
    pub elem_count_std: f64,
    pub cross_app_rate: f64,
    pub zipf_s: f64,
    pub seed: u64,
    // behavior shaping; defaults tuned so the corpus is learnable but not
    // trivial
    pub gain: f64,
    pub time_bonus: f64,
    pub chain_bonus: f64,
    pub persona_dev_std: f64,
    pub element_noise_std: f64,
    pub habit_min: f64,
    pub habit_max: f64,
    /// Fraction of screens that carry a per-visit changing text token (their
    /// screen hash never repeats).
    pub volatile_screen_rate: f64,
    pub session_clicks_mean: f64,
    pub gap_median_secs: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_apps: 12,
            screens_per_app: 6,
            n_users: 50,
            weeks: 2,
            elem_count_mean: 18.0,
            elem_count_std: 12.0,
            cross_app_rate: 0.30,
            zipf_s: 1.2,
            seed: 0,
            gain: 1.75,
            time_bonus: 2.2,
            chain_bonus: 2.6,
            persona_dev_std: 1.0,
            element_noise_std: 1.0,
            habit_min: 0.25,
            habit_max: 0.55,
            volatile_screen_rate: 0.45,
            session_clicks_mean: 11.0,
            gap_median_secs: 5.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ClickseqError> {
        if self.n_apps == 0 || self.screens_per_app == 0 || self.n_users == 0 || self.weeks == 0 {
            return Err(ClickseqError::Config("world sizes must be positive".into()));
        }
        for (name, rate) in [
            ("cross_app_rate", self.cross_app_rate),
            ("volatile_screen_rate", self.volatile_screen_rate),
            ("habit_min", self.habit_min),
            ("habit_max", self.habit_max),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(ClickseqError::Config(format!("{name} {rate} outside [0,1]")));
            }
        }
        if self.habit_min > self.habit_max {
            return Err(ClickseqError::Config("habit_min > habit_max".into()));
        }
        if self.elem_count_std < 0.0 || self.session_clicks_mean < 1.0 || self.gap_median_secs <= 0.0 {
            return Err(ClickseqError::Config("bad distribution parameters".into()));
        }
        Ok(())
    }
}

pub const MIN_ELEMENTS: usize = 2;
pub const MAX_ELEMENTS: usize = 64;
const WORD_BANK_SIZE: usize = 400;
const SCREEN_WIDTH: u32 = 1080;
const SCREEN_HEIGHT: u32 = 1920;
/// Monday 2023-01-02 00:00:00 UTC.
const EPOCH_MONDAY_MS: i64 = 1_672_617_600_000;
const MS_PER_DAY: i64 = 86_400_000;

/// Relative weight of each local hour as a session start time: quiet nights,
/// a morning shoulder, and heavy evenings.
const HOUR_WEIGHTS: [f64; 24] = [
    1.0, 0.5, 0.3, 0.3, 0.5, 1.0, 2.0, 4.0, 5.0, 5.0, 5.0, 5.0, 6.0, 5.0, 5.0, 5.0, 6.0, 7.0,
    9.0, 10.0, 10.0, 8.0, 5.0, 2.0,
];

const TYPE_CHOICES: [(ElemType, f64); 10] = [
    (ElemType::Button, 4.0),
    (ElemType::TextView, 6.0),
    (ElemType::ImageView, 3.0),
    (ElemType::ImageButton, 3.0),
    (ElemType::Switch, 1.5),
    (ElemType::CheckBox, 1.0),
    (ElemType::EditText, 1.0),
    (ElemType::RadioButton, 0.5),
    (ElemType::Spinner, 0.5),
    (ElemType::Chip, 0.5),
];

const SYLLABLES: [&str; 24] = [
    "al", "ar", "ba", "ca", "da", "el", "fo", "ga", "hi", "in", "ka", "lo", "ma", "ne", "or",
    "pa", "qu", "ra", "se", "ta", "un", "va", "wo", "zy",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordInfo {
    pub text: String,
    pub attractiveness: f64,
}

#[derive(Debug, Clone)]
pub struct ElementTemplate {
    /// Indices into the world word bank.
    pub words: Vec<usize>,
    pub elem_type: ElemType,
    pub bbox: BBox,
    /// Transition target (app, screen) followed when this element is clicked.
    pub edge: (usize, usize),
    /// Per-(screen, element) bias, fixed across users.
    pub base_logit: f64,
    /// Preferred 6-hour band in [0, 4).
    pub pref_band: usize,
    pub pref_weekend: bool,
    pub volatile: bool,
}

#[derive(Debug, Clone)]
pub struct ScreenTemplate {
    pub elements: Vec<ElementTemplate>,
    pub volatile: bool,
}

#[derive(Debug, Clone)]
pub struct AppTemplate {
    pub id: String,
    pub screens: Vec<ScreenTemplate>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub apps: Vec<AppTemplate>,
    /// Zipf app popularity, normalized.
    pub popularity: Vec<f64>,
    pub words: Vec<WordInfo>,
}

pub fn hour_band(hour: u8) -> usize {
    (hour / 6) as usize
}

fn grid_bbox(index: usize) -> BBox {
    let col = (index % 3) as i32;
    let row = (index / 3) as i32;
    let w = SCREEN_WIDTH as i32 / 3;
    let h = 84;
    BBox::new(col * w + 8, row * h + 8, col * w + w - 8, row * h + h - 8)
}

/// Builds the world deterministically from the config seed.
pub fn build_world(config: &WorldConfig) -> Result<World, ClickseqError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(fan_out_seed(config.seed, "world", 0));

    // word bank: short pronounceable strings with global attractiveness
    let mut words = Vec::with_capacity(WORD_BANK_SIZE);
    let mut seen = std::collections::HashSet::new();
    while words.len() < WORD_BANK_SIZE {
        let n = rng.gen_range(2..=3);
        let mut text = String::new();
        for _ in 0..n {
            text.push_str(SYLLABLES[rng.gen_range(0..SYLLABLES.len())]);
        }
        if !seen.insert(text.clone()) {
            continue;
        }
        let attractiveness: f64 = rng.sample::<f64, _>(StandardNormal);
        words.push(WordInfo { text, attractiveness });
    }

    let popularity: Vec<f64> = {
        let raw: Vec<f64> = (0..config.n_apps)
            .map(|a| 1.0 / ((a + 1) as f64).powf(config.zipf_s))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    };

    let count_dist = Normal::new(config.elem_count_mean, config.elem_count_std)
        .map_err(|e| ClickseqError::Config(e.to_string()))?;
    let type_weights = WeightedIndex::new(TYPE_CHOICES.iter().map(|(_, w)| *w)).unwrap();

    // screen sizes are drawn up front: transitions land on screens weighted
    // by element count (hub screens are large), so every app's sizes must be
    // known before any edge is drawn
    let mut sizes: Vec<Vec<usize>> = Vec::with_capacity(config.n_apps);
    for _a in 0..config.n_apps {
        let app_sizes: Vec<usize> = (0..config.screens_per_app)
            .map(|_| {
                let raw: f64 = rng.sample(count_dist);
                (raw.round().max(MIN_ELEMENTS as f64) as usize).min(MAX_ELEMENTS)
            })
            .collect();
        sizes.push(app_sizes);
    }
    let screen_pick: Vec<WeightedIndex<f64>> = sizes
        .iter()
        .map(|app_sizes| WeightedIndex::new(app_sizes.iter().map(|&n| n as f64)).unwrap())
        .collect();

    let mut apps = Vec::with_capacity(config.n_apps);
    for a in 0..config.n_apps {
        let mut screens = Vec::with_capacity(config.screens_per_app);
        for s in 0..config.screens_per_app {
            let count = sizes[a][s];
            let volatile = rng.gen::<f64>() < config.volatile_screen_rate;
            let volatile_slot = if volatile { rng.gen_range(0..count) } else { usize::MAX };
            let mut elements = Vec::with_capacity(count);
            for i in 0..count {
                let n_words = rng.gen_range(1..=3);
                let mut ws: Vec<usize> = (0..n_words)
                    .map(|_| rng.gen_range(0..WORD_BANK_SIZE))
                    .collect();
                ws.dedup();
                let same_app = config.n_apps == 1 || rng.gen::<f64>() >= config.cross_app_rate;
                let edge = if same_app {
                    (a, rng.sample(&screen_pick[a]))
                } else {
                    // popularity-weighted choice among the other apps
                    let mut weights: Vec<f64> = popularity.clone();
                    weights[a] = 0.0;
                    let pick = WeightedIndex::new(&weights).unwrap();
                    let ta = rng.sample(&pick);
                    (ta, rng.sample(&screen_pick[ta]))
                };
                elements.push(ElementTemplate {
                    words: ws,
                    elem_type: TYPE_CHOICES[rng.sample(&type_weights)].0,
                    bbox: grid_bbox(i),
                    edge,
                    base_logit: rng.sample::<f64, _>(StandardNormal) * config.element_noise_std,
                    pref_band: rng.gen_range(0..4),
                    pref_weekend: rng.gen::<bool>(),
                    volatile: i == volatile_slot,
                });
            }
            screens.push(ScreenTemplate { elements, volatile });
        }
        apps.push(AppTemplate { id: format!("com.app{a:02}"), screens });
    }

    // word persistence: each element plants its first word on one element of
    // its transition-target screen, so consecutive clicks tend to share words
    let mut injections: Vec<((usize, usize, usize), usize)> = Vec::new();
    for app in &apps {
        for screen in &app.screens {
            for element in &screen.elements {
                let (ta, ts) = element.edge;
                let target_len = apps[ta].screens[ts].elements.len();
                let slot = rng.gen_range(0..target_len);
                injections.push(((ta, ts, slot), element.words[0]));
            }
        }
    }
    for ((ta, ts, slot), word) in injections {
        let words = &mut apps[ta].screens[ts].elements[slot].words;
        if words.len() < 4 && !words.contains(&word) {
            words.push(word);
        }
    }

    Ok(World { config: config.clone(), apps, popularity, words })
}

/// Per-user behavioral parameters; together with the world they determine
/// the exact conditional click distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserPersona {
    pub user_id: String,
    /// Popularity-skewed app preference, normalized.
    pub app_affinity: Vec<f64>,
    /// Per-word preference deviation from the global attractiveness.
    pub word_dev: Vec<f64>,
    /// Recency/frequency mixing weight in [0, 1].
    pub habit_strength: f64,
    pub tz_offset_min: i32,
}

const TZ_CHOICES: [i32; 8] = [-480, -300, -120, 0, 60, 120, 330, 540];

pub fn build_persona(world: &World, user_index: usize) -> UserPersona {
    let config = &world.config;
    let mut rng =
        ChaCha8Rng::seed_from_u64(fan_out_seed(config.seed, "persona", user_index as u64));
    let raw: Vec<f64> = world
        .popularity
        .iter()
        .map(|p| p * (rng.sample::<f64, _>(StandardNormal) * 0.8).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let app_affinity = raw.into_iter().map(|x| x / total).collect();
    let word_dev = (0..world.words.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal) * config.persona_dev_std)
        .collect();
    UserPersona {
        user_id: format!("user{user_index:03}"),
        app_affinity,
        word_dev,
        habit_strength: rng.gen_range(config.habit_min..=config.habit_max),
        tz_offset_min: TZ_CHOICES[rng.gen_range(0..TZ_CHOICES.len())],
    }
}

/// The exact conditional click distribution over a screen's elements, given
/// the user, local time, the words of the previously clicked element (same
/// session), and the user's accumulated click counts on this screen.
pub fn click_distribution(
    world: &World,
    persona: &UserPersona,
    location: (usize, usize),
    hour: u8,
    weekend: bool,
    prev_words: &[usize],
    counts: &HashMap<(usize, usize, usize), u64>,
) -> Vec<f64> {
    let config = &world.config;
    let (a, s) = location;
    let elements = &world.apps[a].screens[s].elements;
    let band = hour_band(hour);

    let mut logits = Vec::with_capacity(elements.len());
    for e in elements {
        let k = e.words.len() as f64;
        let attr: f64 = e.words.iter().map(|&w| world.words[w].attractiveness).sum::<f64>() / k;
        let dev: f64 = e.words.iter().map(|&w| persona.word_dev[w]).sum::<f64>() / k;
        let mut bonus = 0.0;
        if e.pref_band == band {
            bonus += config.time_bonus;
        }
        if e.pref_weekend == weekend {
            bonus += 0.5 * config.time_bonus;
        }
        if e.words.iter().any(|w| prev_words.contains(w)) {
            bonus += config.chain_bonus;
        }
        logits.push(config.gain * (attr + dev + e.base_logit + bonus));
    }

    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let soft: Vec<f64> = exps.into_iter().map(|x| x / denom).collect();

    let total: u64 = (0..elements.len()).map(|j| *counts.get(&(a, s, j)).unwrap_or(&0)).sum();
    if total == 0 {
        return soft;
    }
    let h = persona.habit_strength;
    (0..elements.len())
        .map(|j| {
            let freq = *counts.get(&(a, s, j)).unwrap_or(&0) as f64 / total as f64;
            (1.0 - h) * soft[j] + h * freq
        })
        .collect()
}

fn realize_screen(
    world: &World,
    location: (usize, usize),
    tag: &str,
    visits: &mut HashMap<(usize, usize), u64>,
) -> Screen {
    let (a, s) = location;
    let template = &world.apps[a].screens[s];
    let visit = visits.entry(location).or_insert(0);
    *visit += 1;
    let visit = *visit;
    let elements = template
        .elements
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut text = e
                .words
                .iter()
                .map(|&w| world.words[w].text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if e.volatile {
                text.push_str(&format!(" {tag}v{visit}"));
            }
            UiElement { text, elem_type: e.elem_type, bbox: e.bbox, preorder_index: i }
        })
        .collect();
    Screen::new(elements, SCREEN_WIDTH, SCREEN_HEIGHT, world.apps[a].id.clone()).unwrap()
}

/// One simulated user: the event sequence plus the exact conditional
/// distribution behind every event (same indexing).
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    pub sequence: ClickSequence,
    pub truth: Vec<Vec<f64>>,
}

pub fn simulate_user(
    world: &World,
    persona: &UserPersona,
    weeks: usize,
    seed: u64,
) -> SimulatedUser {
    let config = &world.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hour_pick = WeightedIndex::new(HOUR_WEIGHTS).unwrap();
    let affinity_pick = WeightedIndex::new(&persona.app_affinity).unwrap();
    // sessions open on hub screens: entry weighted by element count
    let entry_pick: Vec<WeightedIndex<f64>> = world
        .apps
        .iter()
        .map(|app| {
            WeightedIndex::new(app.screens.iter().map(|s| s.elements.len() as f64)).unwrap()
        })
        .collect();
    let gap_dist = LogNormal::new(config.gap_median_secs.ln(), 0.9).unwrap();

    let mut counts: HashMap<(usize, usize, usize), u64> = HashMap::new();
    let mut visits: HashMap<(usize, usize), u64> = HashMap::new();
    let mut events = Vec::new();
    let mut truth = Vec::new();
    let mut last_local_ms = i64::MIN;

    for day in 0..(weeks * 7) as i64 {
        let weekday = (day % 7) < 5;
        let lambda = if weekday { 5.5 } else { 3.5 };
        let n_sessions: f64 = rng.sample(Poisson::new(lambda).unwrap());
        let mut starts: Vec<i64> = (0..n_sessions as usize)
            .map(|_| {
                let hour = rng.sample(&hour_pick) as i64;
                let within = rng.gen_range(0..3_600_000_i64);
                day * MS_PER_DAY + hour * 3_600_000 + within
            })
            .collect();
        starts.sort_unstable();

        for start in starts {
            // sessions never overlap: push a late session past the previous one
            let mut local_ms = start.max(last_local_ms + 60_000);
            let n_clicks =
                1 + rng.sample(Poisson::new(config.session_clicks_mean - 1.0).unwrap()) as usize;

            // each session opens a fresh affinity-drawn app; in-session
            // concentration pulls the realized cross-app pair rate below the
            // edge-level rate, and these app-hopping boundaries pull it back
            let app = rng.sample(&affinity_pick);
            let mut location = (app, rng.sample(&entry_pick[app]));
            let mut prev_words: Vec<usize> = Vec::new();

            for _ in 0..n_clicks {
                let screen = realize_screen(world, location, &persona.user_id, &mut visits);
                let ts = local_ms - i64::from(persona.tz_offset_min) * 60_000 + EPOCH_MONDAY_MS;
                let time = EventTime::new(ts, persona.tz_offset_min);
                let weekend = time.day_of_week >= 5;
                let p = click_distribution(
                    world,
                    persona,
                    location,
                    time.hour_of_day,
                    weekend,
                    &prev_words,
                    &counts,
                );
                let clicked = rng.sample(WeightedIndex::new(&p).unwrap());

                truth.push(p);
                events.push(ClickEvent::new(screen, clicked, time).unwrap());

                let element = &world.apps[location.0].screens[location.1].elements[clicked];
                *counts.entry((location.0, location.1, clicked)).or_insert(0) += 1;
                prev_words = element.words.clone();
                location = element.edge;

                let gap_ms = (rng.sample(gap_dist) * 1000.0).max(500.0) as i64;
                local_ms += gap_ms;
            }
            last_local_ms = local_ms;
        }
    }

    let sequence = ClickSequence::new(persona.user_id.clone(), events).unwrap();
    SimulatedUser { sequence, truth }
}

/// A full generated corpus with its ground truth.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub world: World,
    pub personas: Vec<UserPersona>,
    pub sequences: Vec<ClickSequence>,
    /// `truth[u][i]` is the exact click distribution behind event `i` of
    /// user `u`.
    pub truth: Vec<Vec<Vec<f64>>>,
}

/// Generates the whole corpus. Deterministic in the config; per-user
/// simulation is parallelized but output order is fixed.
pub fn generate(config: &WorldConfig) -> Result<Corpus, ClickseqError> {
    let world = build_world(config)?;
    let personas: Vec<UserPersona> =
        (0..config.n_users).map(|u| build_persona(&world, u)).collect();
    let simulated: Vec<SimulatedUser> = personas
        .par_iter()
        .enumerate()
        .map(|(u, persona)| {
            let seed = fan_out_seed(config.seed, "simulate", u as u64);
            simulate_user(&world, persona, config.weeks, seed)
        })
        .collect();
    let mut sequences = Vec::with_capacity(simulated.len());
    let mut truth = Vec::with_capacity(simulated.len());
    for sim in simulated {
        sequences.push(sim.sequence);
        truth.push(sim.truth);
    }
    Ok(Corpus { world, personas, sequences, truth })
}

impl Corpus {
    pub fn n_events(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    /// Top-1 accuracy of the Bayes oracle that reads the exact conditional
    /// distribution (ties broken by preorder index). Upper-bounds any
    /// learned model in expectation.
    pub fn bayes_top1(&self) -> f64 {
        let mut hits = 0usize;
        let mut total = 0usize;
        for (seq, user_truth) in self.sequences.iter().zip(&self.truth) {
            for (event, p) in seq.events.iter().zip(user_truth) {
                let best = p
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .unwrap()
                    .0;
                if best == event.clicked_index {
                    hits += 1;
                }
                total += 1;
            }
        }
        hits as f64 / total as f64
    }
}

/// Writes the ground-truth sidecar: persona parameters as JSON.
pub fn write_ground_truth<W: Write>(w: &mut W, personas: &[UserPersona]) -> Result<(), ClickseqError> {
    serde_json::to_writer_pretty(&mut *w, personas)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes the corpus (JSONL event log) and the ground-truth sidecar into a
/// directory.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), ClickseqError> {
    std::fs::create_dir_all(dir)?;
    let mut events = std::io::BufWriter::new(std::fs::File::create(dir.join("events.jsonl"))?);
    crate::types::write_jsonl(&mut events, &corpus.sequences)?;
    let mut gt = std::io::BufWriter::new(std::fs::File::create(dir.join("ground_truth.json"))?);
    write_ground_truth(&mut gt, &corpus.personas)?;
    Ok(())
}
