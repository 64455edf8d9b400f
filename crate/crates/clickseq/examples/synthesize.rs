//! Generate a synthetic click corpus and inspect it.
//!
//! The generator is fully seeded: the same config always produces the same
//! corpus, byte for byte, and it carries its exact ground-truth click
//! distribution so any model can be compared to the Bayes ceiling.

use clickseq::synth::{generate, WorldConfig};

fn main() {
    let config = WorldConfig {
        n_apps: 4,
        screens_per_app: 5,
        n_users: 8,
        weeks: 2,
        seed: 42,
        ..WorldConfig::default()
    };
    let corpus = generate(&config).expect("valid config");

    println!("{} users, {} events total", corpus.sequences.len(), corpus.n_events());
    println!("Bayes-oracle top-1 ceiling: {:.4}\n", corpus.bayes_top1());

    let seq = &corpus.sequences[0];
    println!("first session of {}:", seq.user_id);
    let mut last_ts = None;
    for event in seq.events.iter().take(8) {
        let gap = last_ts.map(|t: i64| event.time.timestamp_ms - t).unwrap_or(0);
        last_ts = Some(event.time.timestamp_ms);
        let e = event.clicked_element();
        println!(
            "  {} (+{:>6}ms) {:>2}:00 {} -> \"{}\" [{} elements]",
            event.time.timestamp_ms,
            gap,
            event.time.hour_of_day,
            event.app_id,
            e.text,
            event.screen.len()
        );
    }

    // screen-size distribution
    let mut counts = [0usize; 7];
    for seq in &corpus.sequences {
        for event in &seq.events {
            counts[(event.screen.len() - 1) / 10] += 1;
        }
    }
    println!("\nscreen-size histogram (events per 10-element bucket):");
    for (bucket, n) in counts.iter().enumerate() {
        println!("  {:>2}-{:>2} elements: {}", bucket * 10 + 1, bucket * 10 + 10, n);
    }
}
