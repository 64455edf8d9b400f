//! Domain model shared by every other module: UI elements, screens, click
//! events, per-user sequences, and prediction requests, together with the
//! canonical JSONL event-log codec.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, Write};

use crate::ClickseqError;

/// Default history size for prediction requests.
pub const DEFAULT_HISTORY_SIZE: usize = 9;

/// Largest elapsed-time bucket; everything above clamps here.
pub const MAX_ELAPSED_BUCKET: u32 = 20;

/// The closed registry of UI element types: 24 widget names plus a catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElemType {
    Button,
    ImageButton,
    TextView,
    ImageView,
    EditText,
    CheckBox,
    RadioButton,
    Switch,
    ToggleButton,
    Spinner,
    SeekBar,
    RatingBar,
    ProgressBar,
    ListView,
    RecyclerView,
    GridView,
    ScrollView,
    TabWidget,
    WebView,
    VideoView,
    CheckedTextView,
    AutoCompleteTextView,
    FloatingActionButton,
    Chip,
    #[serde(other)]
    Other,
}

impl ElemType {
    /// All 25 registry values, `Other` last.
    pub const ALL: [ElemType; 25] = [
        ElemType::Button,
        ElemType::ImageButton,
        ElemType::TextView,
        ElemType::ImageView,
        ElemType::EditText,
        ElemType::CheckBox,
        ElemType::RadioButton,
        ElemType::Switch,
        ElemType::ToggleButton,
        ElemType::Spinner,
        ElemType::SeekBar,
        ElemType::RatingBar,
        ElemType::ProgressBar,
        ElemType::ListView,
        ElemType::RecyclerView,
        ElemType::GridView,
        ElemType::ScrollView,
        ElemType::TabWidget,
        ElemType::WebView,
        ElemType::VideoView,
        ElemType::CheckedTextView,
        ElemType::AutoCompleteTextView,
        ElemType::FloatingActionButton,
        ElemType::Chip,
        ElemType::Other,
    ];

    /// Stable ordinal in `[0, 25)`, usable as an embedding id.
    pub fn ordinal(self) -> usize {
        Self::ALL.iter().position(|t| *t == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemType::Button => "Button",
            ElemType::ImageButton => "ImageButton",
            ElemType::TextView => "TextView",
            ElemType::ImageView => "ImageView",
            ElemType::EditText => "EditText",
            ElemType::CheckBox => "CheckBox",
            ElemType::RadioButton => "RadioButton",
            ElemType::Switch => "Switch",
            ElemType::ToggleButton => "ToggleButton",
            ElemType::Spinner => "Spinner",
            ElemType::SeekBar => "SeekBar",
            ElemType::RatingBar => "RatingBar",
            ElemType::ProgressBar => "ProgressBar",
            ElemType::ListView => "ListView",
            ElemType::RecyclerView => "RecyclerView",
            ElemType::GridView => "GridView",
            ElemType::ScrollView => "ScrollView",
            ElemType::TabWidget => "TabWidget",
            ElemType::WebView => "WebView",
            ElemType::VideoView => "VideoView",
            ElemType::CheckedTextView => "CheckedTextView",
            ElemType::AutoCompleteTextView => "AutoCompleteTextView",
            ElemType::FloatingActionButton => "FloatingActionButton",
            ElemType::Chip => "Chip",
            ElemType::Other => "Other",
        }
    }

    /// Looks up a type by registry name; unknown names map to `Other`.
    pub fn from_name(name: &str) -> ElemType {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == name)
            .unwrap_or(ElemType::Other)
    }
}

impl fmt::Display for ElemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bounding box in screen pixels: left, top, right, bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl BBox {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> BBox {
        debug_assert!(left <= right && top <= bottom);
        BBox { left, top, right, bottom }
    }

    pub fn as_array(&self) -> [i32; 4] {
        [self.left, self.top, self.right, self.bottom]
    }
}

/// One actionable element on a screen.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UiElement {
    pub text: String,
    pub elem_type: ElemType,
    pub bbox: BBox,
    pub preorder_index: usize,
}

/// A flattened screen: actionable elements in preorder, plus dimensions and
/// an identity hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screen {
    pub elements: Vec<UiElement>,
    pub screen_width: u32,
    pub screen_height: u32,
    pub screen_hash: u128,
    pub app_id: String,
}

impl Screen {
    /// Builds a screen and computes its hash from the element features.
    pub fn new(
        elements: Vec<UiElement>,
        screen_width: u32,
        screen_height: u32,
        app_id: String,
    ) -> Result<Screen, ClickseqError> {
        if elements.is_empty() {
            return Err(ClickseqError::EmptyScreen);
        }
        for (i, e) in elements.iter().enumerate() {
            if e.preorder_index != i {
                return Err(ClickseqError::InvalidData(format!(
                    "element {} carries preorder_index {}",
                    i, e.preorder_index
                )));
            }
        }
        let screen_hash = crate::vh::screen_hash_of_elements(&elements);
        Ok(Screen { elements, screen_width, screen_height, screen_hash, app_id })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Event time: raw UTC timestamp plus the timezone it happened in, with the
/// derived local hour and weekday cached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTime {
    pub timestamp_ms: i64,
    pub tz_offset_min: i32,
    pub hour_of_day: u8,
    pub day_of_week: u8,
}

impl EventTime {
    pub fn new(timestamp_ms: i64, tz_offset_min: i32) -> EventTime {
        let (hour_of_day, day_of_week) = derive_local_time(timestamp_ms, tz_offset_min);
        EventTime { timestamp_ms, tz_offset_min, hour_of_day, day_of_week }
    }
}

const MS_PER_DAY: i64 = 86_400_000;
const MS_PER_HOUR: i64 = 3_600_000;

/// Derives (hour of day, day of week) from a UTC timestamp shifted by the
/// event's timezone offset. Monday is day 0; epoch day 1970-01-01 was a
/// Thursday, hence the +3.
pub fn derive_local_time(timestamp_ms: i64, tz_offset_min: i32) -> (u8, u8) {
    let local_ms = timestamp_ms + i64::from(tz_offset_min) * 60_000;
    let hour = (local_ms.rem_euclid(MS_PER_DAY) / MS_PER_HOUR) as u8;
    let day = (local_ms.div_euclid(MS_PER_DAY) + 3).rem_euclid(7) as u8;
    (hour, day)
}

/// Elapsed-time bucket: floor of the natural log of the elapsed seconds,
/// clamped to `[0, MAX_ELAPSED_BUCKET]`. Spans under one second land in
/// bucket 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElapsedBucket(pub u32);

pub fn elapsed_bucket(v_seconds: f64) -> ElapsedBucket {
    let v = v_seconds.max(1.0);
    let b = v.ln().floor();
    ElapsedBucket((b as u32).min(MAX_ELAPSED_BUCKET))
}

/// A single click: the screen it happened on, which element was clicked,
/// and when.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickEvent {
    pub screen: Screen,
    pub clicked_index: usize,
    pub time: EventTime,
    pub app_id: String,
}

impl ClickEvent {
    pub fn new(screen: Screen, clicked_index: usize, time: EventTime) -> Result<ClickEvent, ClickseqError> {
        if clicked_index >= screen.len() {
            return Err(ClickseqError::InvalidData(format!(
                "clicked_index {} out of range for screen with {} elements",
                clicked_index,
                screen.len()
            )));
        }
        let app_id = screen.app_id.clone();
        Ok(ClickEvent { screen, clicked_index, time, app_id })
    }

    pub fn clicked_element(&self) -> &UiElement {
        &self.screen.elements[self.clicked_index]
    }
}

/// Chronologically ordered clicks of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickSequence {
    pub user_id: String,
    pub events: Vec<ClickEvent>,
}

impl ClickSequence {
    pub fn new(user_id: String, events: Vec<ClickEvent>) -> Result<ClickSequence, ClickseqError> {
        for w in events.windows(2) {
            if w[1].time.timestamp_ms < w[0].time.timestamp_ms {
                return Err(ClickseqError::HistoryOutOfOrder);
            }
        }
        Ok(ClickSequence { user_id, events })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// What the model sees at prediction time: a bounded history (most recent
/// last), the current screen, and the current context.
#[derive(Debug, Clone)]
pub struct PredictionRequest {
    pub history: Vec<ClickEvent>,
    pub current_screen: Screen,
    pub current_time: EventTime,
    pub current_app: String,
}

// ---------------------------------------------------------------------------
// Canonical JSONL event-log format.

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ElementRecord {
    text: String,
    #[serde(rename = "type")]
    elem_type: ElemType,
    bbox: [i32; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScreenRecord {
    width: u32,
    height: u32,
    elements: Vec<ElementRecord>,
}

/// One line of the canonical event log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRecord {
    pub user_id: String,
    pub timestamp_ms: i64,
    pub tz_offset_min: i32,
    pub app_id: String,
    pub clicked_index: usize,
    screen: ScreenRecord,
}

impl EventRecord {
    pub fn from_event(user_id: &str, event: &ClickEvent) -> EventRecord {
        EventRecord {
            user_id: user_id.to_string(),
            timestamp_ms: event.time.timestamp_ms,
            tz_offset_min: event.time.tz_offset_min,
            app_id: event.app_id.clone(),
            clicked_index: event.clicked_index,
            screen: ScreenRecord {
                width: event.screen.screen_width,
                height: event.screen.screen_height,
                elements: event
                    .screen
                    .elements
                    .iter()
                    .map(|e| ElementRecord {
                        text: e.text.clone(),
                        elem_type: e.elem_type,
                        bbox: e.bbox.as_array(),
                    })
                    .collect(),
            },
        }
    }

    pub fn into_event(self) -> Result<ClickEvent, ClickseqError> {
        let elements = self
            .screen
            .elements
            .into_iter()
            .enumerate()
            .map(|(i, e)| UiElement {
                text: e.text,
                elem_type: e.elem_type,
                bbox: BBox::new(e.bbox[0], e.bbox[1], e.bbox[2], e.bbox[3]),
                preorder_index: i,
            })
            .collect();
        let screen = Screen::new(elements, self.screen.width, self.screen.height, self.app_id)?;
        let time = EventTime::new(self.timestamp_ms, self.tz_offset_min);
        ClickEvent::new(screen, self.clicked_index, time)
    }
}

/// Writes sequences as one JSON object per line, one user after another,
/// each user's events in timestamp order.
pub fn write_jsonl<W: Write>(w: &mut W, sequences: &[ClickSequence]) -> Result<(), ClickseqError> {
    for seq in sequences {
        for event in &seq.events {
            let record = EventRecord::from_event(&seq.user_id, event);
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads the canonical JSONL format back into per-user sequences. Events of
/// one user must be contiguous and time-sorted; user order is preserved.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<ClickSequence>, ClickseqError> {
    let mut sequences: Vec<ClickSequence> = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord = serde_json::from_str(&line)?;
        let user_id = record.user_id.clone();
        let event = record.into_event()?;
        match sequences.last_mut() {
            Some(seq) if seq.user_id == user_id => {
                if let Some(last) = seq.events.last() {
                    if event.time.timestamp_ms < last.time.timestamp_ms {
                        return Err(ClickseqError::HistoryOutOfOrder);
                    }
                }
                seq.events.push(event);
            }
            _ => sequences.push(ClickSequence { user_id, events: vec![event] }),
        }
    }
    Ok(sequences)
}
