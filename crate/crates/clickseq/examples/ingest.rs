//! Ingest raw view-hierarchy logs into the canonical event format.
//!
//! Builds a tiny raw JSONL log in memory (two users, nested trees with
//! non-actionable containers), runs it through the ingestion pipeline, and
//! prints the canonical events.

use clickseq::pipeline;
use clickseq::types::read_jsonl;

fn raw_event(user: &str, ts: i64, clicked: usize) -> String {
    serde_json::json!({
        "user_id": user,
        "timestamp_ms": ts,
        "tz_offset_min": -480,
        "app_id": "com.example.mail",
        "clicked_index": clicked,
        "screen_width": 1080,
        "screen_height": 1920,
        "root": {
            "class_name": "android.widget.FrameLayout",
            "visible": true, "enabled": true,
            "bbox": [0, 0, 1080, 1920],
            "children": [
                {"text": "Inbox", "class_name": "android.widget.TextView",
                 "clickable": true, "visible": true, "enabled": true,
                 "bbox": [0, 100, 540, 200]},
                {"resource_id": "com.example.mail:id/composeButton",
                 "class_name": "android.widget.ImageButton",
                 "clickable": true, "visible": true, "enabled": true,
                 "bbox": [900, 1700, 1040, 1840]},
                {"text": "hidden", "class_name": "android.widget.Button",
                 "clickable": true, "visible": false, "enabled": true,
                 "bbox": [0, 0, 10, 10]}
            ]
        }
    })
    .to_string()
}

fn main() {
    let raw = [
        raw_event("alice", 1_700_000_000_000, 0),
        raw_event("alice", 1_700_000_030_000, 1),
        raw_event("bob", 1_700_000_010_000, 1),
    ]
    .join("\n");

    let mut canonical = Vec::new();
    let n = pipeline::ingest(raw.as_bytes(), &mut canonical).expect("ingest");
    println!("ingested {n} raw events\n");
    print!("{}", String::from_utf8_lossy(&canonical));

    let sequences = read_jsonl(canonical.as_slice()).expect("round-trip");
    for seq in &sequences {
        println!("\nuser {}:", seq.user_id);
        for event in &seq.events {
            let e = event.clicked_element();
            println!(
                "  t={} clicked #{} {:?} \"{}\" ({} candidates on screen)",
                event.time.timestamp_ms,
                event.clicked_index,
                e.elem_type,
                e.text,
                event.screen.len()
            );
        }
    }
}
