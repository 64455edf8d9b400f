//! The full click-prediction model: screen encoder, sequence encoder over
//! the click history, pointer generator, alignment scoring, and the
//! probability output.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{self, FeatureFlags, Vocabulary, CTX_WIDTH};
use crate::nn::layers::{
    def_attention, def_encoder, def_layernorm, def_linear, layernorm, linear,
    multi_head_attention, transformer_encoder, INIT_STD,
};
use crate::nn::params::{ParameterStore, Session};
use crate::nn::tape::{Scalar, Tape, Var};
use crate::types::{ClickEvent, EventTime, PredictionRequest, Screen};
use crate::ClickseqError;

/// Word and app vocabularies used by the model. App ids are looked up as
/// whole strings, not tokenized.
#[derive(Debug, Clone)]
pub struct Vocabs {
    pub words: Vocabulary,
    pub apps: Vocabulary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d: usize,
    pub screen_encoder_layers: usize,
    pub sequence_encoder_layers: usize,
    /// Pointer-generator depth M.
    pub pointer_layers: usize,
    pub heads: usize,
    /// History size H: how many past clicks the sequence encoder sees.
    pub history_size: usize,
    pub dropout: f64,
    pub max_elements: usize,
    pub flags: FeatureFlags,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 128,
            screen_encoder_layers: 2,
            sequence_encoder_layers: 2,
            pointer_layers: 2,
            heads: 4,
            history_size: 9,
            dropout: 0.1,
            max_elements: 64,
            flags: FeatureFlags::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ClickseqError> {
        if self.d == 0 || self.d % self.heads != 0 {
            return Err(ClickseqError::Config(format!(
                "hidden size {} must be a positive multiple of {} heads",
                self.d, self.heads
            )));
        }
        if self.pointer_layers == 0 {
            return Err(ClickseqError::Config("pointer_layers must be >= 1".into()));
        }
        if self.max_elements == 0 {
            return Err(ClickseqError::Config("max_elements must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ClickseqError::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        self.flags.validate()
    }
}

/// Ranked prediction over one screen (or its truncation window).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionResult {
    /// `probabilities[i]` belongs to element `window_start + i`; sums to 1.
    pub probabilities: Vec<f64>,
    /// Original preorder indices, best first; exact ties broken by ascending
    /// preorder index.
    pub ranked_indices: Vec<usize>,
    pub window_start: usize,
    pub target_rank: Option<usize>,
}

impl PredictionResult {
    pub fn top1(&self) -> usize {
        self.ranked_indices[0]
    }

    /// Fills in `target_rank` for a known clicked element.
    pub fn with_target(mut self, target: usize) -> Self {
        self.target_rank = self.ranked_indices.iter().position(|&i| i == target);
        self
    }
}

/// Defines every model parameter on a fresh store.
pub fn def_model_params<F: Scalar>(
    store: &mut ParameterStore<F>,
    config: &ModelConfig,
    vocabs: &Vocabs,
    rng: &mut ChaCha8Rng,
) {
    let d = config.d;
    embed::def_embedder_params(store, vocabs.words.len(), vocabs.apps.len(), d, rng);
    def_encoder(store, "screen_enc", config.screen_encoder_layers, d, rng);
    def_encoder(store, "seq_enc", config.sequence_encoder_layers, d, rng);
    store.def_trunc_normal("seq_enc.null", 1, d, INIT_STD, rng);
    def_linear(store, "ptr.q0", CTX_WIDTH, d, rng);
    for m in 0..config.pointer_layers {
        def_attention(store, &format!("ptr.l{m}.attn"), d, rng);
        def_layernorm(store, &format!("ptr.l{m}.ln"), d);
        def_linear(store, &format!("ptr.l{m}.dense"), d, d, rng);
    }
    store.def_trunc_normal("ptr.wq", d, d, INIT_STD, rng);
}

/// Element window kept when a screen exceeds `max_elements`: first
/// `max_elements` elements by preorder, shifted right just enough to keep
/// `keep` inside (training targets must survive truncation).
pub fn truncation_window(n: usize, max_elements: usize, keep: Option<usize>) -> (usize, usize) {
    if n <= max_elements {
        return (0, n);
    }
    match keep {
        Some(t) if t >= max_elements => (t + 1 - max_elements, t + 1),
        _ => (0, max_elements),
    }
}

/// Encodes a screen into per-element latents `(n, d)`. Returns the latents
/// and the truncation window they cover. With `use_screen_encoder` disabled
/// the raw element embeddings pass through unchanged.
pub fn encode_screen<F: Scalar>(
    s: &Session<F>,
    vocabs: &Vocabs,
    screen: &Screen,
    keep: Option<usize>,
    config: &ModelConfig,
) -> Result<(Var, (usize, usize)), ClickseqError> {
    if screen.is_empty() {
        return Err(ClickseqError::EmptyScreen);
    }
    let (start, end) = truncation_window(screen.len(), config.max_elements, keep);
    let x = embed::element_embeddings_range(s, &vocabs.words, screen, start, end, &config.flags)?;
    if !config.flags.use_screen_encoder {
        return Ok((x, (start, end)));
    }
    let mask = vec![true; end - start];
    let h = transformer_encoder(
        s,
        "screen_enc",
        x,
        config.screen_encoder_layers,
        config.heads,
        &mask,
        config.dropout,
    )?;
    Ok((h, (start, end)))
}

/// Encodes the click history into latents `(n, d)`. The most recent at most
/// `history_size` events are used; an empty history yields the learned
/// null-history row `(1, d)`.
pub fn encode_history<F: Scalar>(
    s: &Session<F>,
    vocabs: &Vocabs,
    history: &[ClickEvent],
    prediction_time: &EventTime,
    config: &ModelConfig,
) -> Result<Var, ClickseqError> {
    for w in history.windows(2) {
        if w[1].time.timestamp_ms < w[0].time.timestamp_ms {
            return Err(ClickseqError::HistoryOutOfOrder);
        }
    }
    let start = history.len().saturating_sub(config.history_size);
    let recent = &history[start..];
    if recent.is_empty() {
        return Ok(s.p("seq_enc.null"));
    }
    let mut rows = Vec::with_capacity(recent.len());
    for event in recent {
        let (latents, (win_start, _)) =
            encode_screen(s, vocabs, &event.screen, Some(event.clicked_index), config)?;
        let clicked = s.tape.select_row(latents, event.clicked_index - win_start);
        let app_ord = vocabs.apps.id(&event.app_id);
        let ev = embed::click_event_embedding(s, clicked, &event.time, app_ord, &config.flags)?;
        let v_seconds =
            ((prediction_time.timestamp_ms - event.time.timestamp_ms).max(0)) as f64 / 1000.0;
        rows.push(embed::event_input_embedding(s, ev, v_seconds)?);
    }
    let x = s.tape.concat_rows(&rows);
    let mask = vec![true; recent.len()];
    transformer_encoder(
        s,
        "seq_enc",
        x,
        config.sequence_encoder_layers,
        config.heads,
        &mask,
        config.dropout,
    )
}

/// Builds the pointer query q^M: context-seeded, refined by M rounds of
/// attention into the history latents, each followed by layer norm and a
/// gated dense residual.
pub fn generate_pointer<F: Scalar>(
    s: &Session<F>,
    current_time: &EventTime,
    current_app_ord: usize,
    history_latents: Var,
    config: &ModelConfig,
) -> Result<Var, ClickseqError> {
    let ctx = embed::context_embedding(s, current_time, current_app_ord, &config.flags)?;
    let mut q = linear(s, "ptr.q0", ctx);
    let (n_hist, _) = s.tape.shape(history_latents);
    let mask = vec![true; n_hist];
    for m in 0..config.pointer_layers {
        let attn = multi_head_attention(
            s,
            &format!("ptr.l{m}.attn"),
            q,
            history_latents,
            config.heads,
            &mask,
        )?;
        let attn = s.tape.dropout(attn, config.dropout);
        let a = layernorm(s, &format!("ptr.l{m}.ln"), s.tape.add(q, attn));
        let h = s.tape.gelu(linear(s, &format!("ptr.l{m}.dense"), a));
        q = s.tape.add(a, h);
    }
    Ok(q)
}

/// Alignment scores `α_j = (q^M W^q) · h_j` for every element in the kept
/// window of the current screen. Returns `(1, n)` scores and the window.
pub fn alignment_scores<F: Scalar>(
    s: &Session<F>,
    vocabs: &Vocabs,
    request: &PredictionRequest,
    keep: Option<usize>,
    config: &ModelConfig,
) -> Result<(Var, (usize, usize)), ClickseqError> {
    let hist = encode_history(s, vocabs, &request.history, &request.current_time, config)?;
    let (latents, window) = encode_screen(s, vocabs, &request.current_screen, keep, config)?;
    let app_ord = vocabs.apps.id(&request.current_app);
    let q = generate_pointer(s, &request.current_time, app_ord, hist, config)?;
    let qw = s.tape.matmul(q, s.p("ptr.wq"));
    Ok((s.tape.matmul_nt(qw, latents), window))
}

/// Full inference: probabilities over the current screen, ranked with the
/// deterministic preorder tie-break.
pub fn predict<F: Scalar>(
    store: &ParameterStore<F>,
    vocabs: &Vocabs,
    request: &PredictionRequest,
    config: &ModelConfig,
) -> Result<PredictionResult, ClickseqError> {
    config.validate()?;
    let tape: Tape<F> = Tape::new();
    let s = Session::new(&tape, store);
    let (scores, (start, end)) = alignment_scores(&s, vocabs, request, None, config)?;
    let n = end - start;
    let probs = tape.softmax_rows(scores, &vec![true; n]);
    let row = tape.value(probs);
    let probabilities: Vec<f64> = (0..n).map(|j| row[(0, j)].to_f64().unwrap()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        probabilities[b]
            .partial_cmp(&probabilities[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    Ok(PredictionResult {
        probabilities,
        ranked_indices: order.into_iter().map(|i| start + i).collect(),
        window_start: start,
        target_rank: None,
    })
}

/// Cross-entropy loss `−log p(target)` on an existing tape/session, so the
/// caller controls training mode and can run the backward pass.
pub fn loss<F: Scalar>(
    s: &Session<F>,
    vocabs: &Vocabs,
    request: &PredictionRequest,
    target: usize,
    config: &ModelConfig,
) -> Result<Var, ClickseqError> {
    if target >= request.current_screen.len() {
        return Err(ClickseqError::IndexOutOfRange {
            id: target,
            size: request.current_screen.len(),
        });
    }
    let (scores, (start, end)) = alignment_scores(s, vocabs, request, Some(target), config)?;
    if target < start || target >= end {
        return Err(ClickseqError::TargetMasked);
    }
    s.tape.softmax_xent(scores, target - start, &vec![true; end - start])
}
