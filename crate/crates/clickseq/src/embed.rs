//! Featurization of domain objects into model inputs: word vocabulary,
//! element content/positional embeddings, click-event embeddings, context
//! embeddings, and elapsed-time positional encodings.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::nn::params::{ParameterStore, Session};
use crate::nn::tape::{cast, Scalar, Var};
use crate::types::{elapsed_bucket, ElemType, EventTime, Screen, MAX_ELAPSED_BUCKET};
use crate::ClickseqError;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const EMPTY_ID: usize = 2;
const RESERVED: usize = 3;

/// Width of each context slot (hour, day, app) in the click-event and
/// pointer-query embeddings.
pub const CTX_SLOT: usize = 32;
/// Total context width: hour + day + app slots.
pub const CTX_WIDTH: usize = 3 * CTX_SLOT;

/// Number of positional bins per coordinate.
pub const COORD_BINS: usize = 100;

/// Lowercases and splits text into tokens at whitespace, punctuation, and
/// camelCase boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    crate::vh::split_identifier(text)
}

/// Token → id map with reserved PAD/UNK/EMPTY ids. Built from training-split
/// text only and frozen before use on validation or test data.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    entries: Vec<(String, u64)>, // (token, count) in id order, reserved first
    min_count: u64,
    frozen: bool,
}

impl Vocabulary {
    /// Builds a vocabulary from an iterator of tokens. Tokens below
    /// `min_count` stay unknown. Ids are assigned in (count desc, token asc)
    /// order for determinism.
    pub fn build<I: IntoIterator<Item = String>>(tokens: I, min_count: u64) -> Vocabulary {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for tok in tokens {
            *counts.entry(tok).or_insert(0) += 1;
        }
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut entries = vec![
            ("<pad>".to_string(), 0),
            ("<unk>".to_string(), 0),
            ("<empty>".to_string(), 0),
        ];
        entries.extend(kept);
        let ids = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        Vocabulary { ids, entries, min_count, frozen: false }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Table size including reserved ids.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() <= RESERVED
    }

    pub fn id(&self, token: &str) -> usize {
        *self.ids.get(token).unwrap_or(&UNK_ID)
    }

    /// Ids for an element text; `[EMPTY_ID]` when tokenization yields nothing.
    pub fn text_ids(&self, text: &str) -> Vec<usize> {
        let toks = tokenize(text);
        if toks.is_empty() {
            vec![EMPTY_ID]
        } else {
            toks.iter().map(|t| self.id(t)).collect()
        }
    }

    /// Writes the sidecar format: one `token<TAB>id<TAB>count` line per
    /// entry, in id order.
    pub fn write_sidecar<W: Write>(&self, w: &mut W) -> Result<(), ClickseqError> {
        writeln!(w, "# min_count={}", self.min_count)?;
        for (id, (token, count)) in self.entries.iter().enumerate() {
            writeln!(w, "{token}\t{id}\t{count}")?;
        }
        Ok(())
    }

    pub fn read_sidecar<R: BufRead>(r: R) -> Result<Vocabulary, ClickseqError> {
        let mut entries = Vec::new();
        let mut min_count = 1;
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# min_count=") {
                min_count = rest
                    .parse()
                    .map_err(|_| ClickseqError::InvalidData("bad vocabulary header".into()))?;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let token = parts
                .next()
                .ok_or_else(|| ClickseqError::InvalidData("bad vocabulary line".into()))?;
            let id: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ClickseqError::InvalidData("bad vocabulary id".into()))?;
            let count: u64 = parts.next().and_then(|s| s.parse().ok()).unwrap_or(0);
            if id != entries.len() {
                return Err(ClickseqError::InvalidData("vocabulary ids not contiguous".into()));
            }
            entries.push((token.to_string(), count));
        }
        let ids = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        Ok(Vocabulary { ids, entries, min_count, frozen: true })
    }
}

/// Feature toggles driving the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FeatureFlags {
    pub use_text: bool,
    pub use_type: bool,
    pub use_position: bool,
    pub use_time: bool,
    pub use_app: bool,
    pub use_screen_encoder: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        FeatureFlags {
            use_text: true,
            use_type: true,
            use_position: true,
            use_time: true,
            use_app: true,
            use_screen_encoder: true,
        }
    }
}

impl FeatureFlags {
    pub fn validate(&self) -> Result<(), ClickseqError> {
        if !self.use_text && !self.use_type {
            return Err(ClickseqError::Config(
                "at least one of use_text / use_type must be enabled".into(),
            ));
        }
        Ok(())
    }
}

/// Positional bin of a coordinate: `floor(100·x/dim)` clamped to `[0, 99]`.
pub fn coord_bin(x: i32, dim: u32) -> usize {
    debug_assert!(dim > 0);
    let bin = (100.0 * f64::from(x) / f64::from(dim)).floor();
    (bin.max(0.0) as usize).min(COORD_BINS - 1)
}

/// Defines all embedding parameters.
pub fn def_embedder_params<F: Scalar>(
    store: &mut ParameterStore<F>,
    word_vocab_size: usize,
    app_vocab_size: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) {
    let std = crate::nn::layers::INIT_STD;
    store.def_trunc_normal("embed.word", word_vocab_size, d, std, rng);
    store.def_trunc_normal("embed.type", ElemType::ALL.len(), d, std, rng);
    for coord in ["left", "top", "right", "bottom"] {
        store.def_trunc_normal(&format!("embed.coord.{coord}"), COORD_BINS, d, std, rng);
    }
    store.def_trunc_normal("embed.hour", 24, CTX_SLOT, std, rng);
    store.def_trunc_normal("embed.day", 7, CTX_SLOT, std, rng);
    store.def_trunc_normal("embed.app", app_vocab_size, CTX_SLOT, std, rng);
    store.def_trunc_normal("embed.elapsed", MAX_ELAPSED_BUCKET as usize + 1, d, std, rng);
    store.def_trunc_normal("embed.wc", d + CTX_WIDTH, d, std, rng);
}

/// Embeds all elements of a screen as an `(n, d)` matrix: text mean +
/// type + four positional embeddings, with disabled features contributing
/// zero.
pub fn element_embeddings<F: Scalar>(
    s: &Session<F>,
    vocab: &Vocabulary,
    screen: &Screen,
    flags: &FeatureFlags,
) -> Result<Var, ClickseqError> {
    element_embeddings_range(s, vocab, screen, 0, screen.len(), flags)
}

/// Same as [`element_embeddings`] but over `elements[start..end]` only, for
/// screens truncated to a window.
pub fn element_embeddings_range<F: Scalar>(
    s: &Session<F>,
    vocab: &Vocabulary,
    screen: &Screen,
    start: usize,
    end: usize,
    flags: &FeatureFlags,
) -> Result<Var, ClickseqError> {
    flags.validate()?;
    assert!(start < end && end <= screen.len(), "element window out of range");
    let elements = &screen.elements[start..end];
    let n = elements.len();
    let mut parts: Vec<Var> = Vec::new();

    if flags.use_text {
        // Gather every token of every element at once, then average per
        // element with a constant row-averaging matrix.
        let mut all_ids = Vec::new();
        let mut spans = Vec::with_capacity(n);
        for e in elements {
            let ids = vocab.text_ids(&e.text);
            spans.push((all_ids.len(), ids.len()));
            all_ids.extend(ids);
        }
        let tokens = s.tape.gather_rows(s.p("embed.word"), &all_ids)?;
        let mut avg = Array2::zeros((n, all_ids.len()));
        for (i, (start, len)) in spans.iter().enumerate() {
            let w = cast::<F>(1.0 / *len as f64);
            for j in 0..*len {
                avg[(i, start + j)] = w;
            }
        }
        let avg = s.tape.constant(avg);
        parts.push(s.tape.matmul(avg, tokens));
    }

    if flags.use_type {
        let type_ids: Vec<usize> = elements.iter().map(|e| e.elem_type.ordinal()).collect();
        parts.push(s.tape.gather_rows(s.p("embed.type"), &type_ids)?);
    }

    if flags.use_position {
        let w = screen.screen_width;
        let h = screen.screen_height;
        for (coord, bins) in [
            ("left", elements.iter().map(|e| coord_bin(e.bbox.left, w)).collect::<Vec<_>>()),
            ("top", elements.iter().map(|e| coord_bin(e.bbox.top, h)).collect()),
            ("right", elements.iter().map(|e| coord_bin(e.bbox.right, w)).collect()),
            ("bottom", elements.iter().map(|e| coord_bin(e.bbox.bottom, h)).collect()),
        ] {
            parts.push(s.tape.gather_rows(s.p(&format!("embed.coord.{coord}")), &bins)?);
        }
    }

    let mut acc = parts[0];
    for p in &parts[1..] {
        acc = s.tape.add(acc, *p);
    }
    Ok(acc)
}

/// Hour/day/app context embedding as a `(1, CTX_WIDTH)` row; disabled slots
/// are zeros.
pub fn context_embedding<F: Scalar>(
    s: &Session<F>,
    time: &EventTime,
    app_id: usize,
    flags: &FeatureFlags,
) -> Result<Var, ClickseqError> {
    let zero = || s.tape.constant(Array2::zeros((1, CTX_SLOT)));
    let (hour, day) = if flags.use_time {
        (
            s.tape.gather_rows(s.p("embed.hour"), &[time.hour_of_day as usize])?,
            s.tape.gather_rows(s.p("embed.day"), &[time.day_of_week as usize])?,
        )
    } else {
        (zero(), zero())
    };
    let app = if flags.use_app {
        s.tape.gather_rows(s.p("embed.app"), &[app_id])?
    } else {
        zero()
    };
    Ok(s.tape.concat_cols(&[hour, day, app]))
}

/// Click-event embedding: `[h_clicked; hour; day; app] · W_c`, width `d`.
pub fn click_event_embedding<F: Scalar>(
    s: &Session<F>,
    h_clicked: Var,
    time: &EventTime,
    app_id: usize,
    flags: &FeatureFlags,
) -> Result<Var, ClickseqError> {
    let ctx = context_embedding(s, time, app_id, flags)?;
    let cat = s.tape.concat_cols(&[h_clicked, ctx]);
    Ok(s.tape.matmul(cat, s.p("embed.wc")))
}

/// Adds the elapsed-time positional encoding to an event embedding.
pub fn event_input_embedding<F: Scalar>(
    s: &Session<F>,
    event_emb: Var,
    v_seconds: f64,
) -> Result<Var, ClickseqError> {
    let bucket = elapsed_bucket(v_seconds).0 as usize;
    let enc = s.tape.gather_rows(s.p("embed.elapsed"), &[bucket])?;
    Ok(s.tape.add(event_emb, enc))
}
