//! Train a small model, then predict the next click for one request and
//! print the ranked candidates with their probabilities.

use clickseq::embed::FeatureFlags;
use clickseq::model::{predict, ModelConfig};
use clickseq::synth::{generate, WorldConfig};
use clickseq::train::{
    request_for, split_examples, train, SplitMode, SplitSpec, TrainConfig, DEFAULT_SEGMENT,
};

fn main() {
    let world = WorldConfig {
        n_apps: 3,
        screens_per_app: 4,
        n_users: 6,
        weeks: 1,
        seed: 11,
        ..WorldConfig::default()
    };
    let corpus = generate(&world).expect("valid config");

    let config = TrainConfig {
        model: ModelConfig {
            d: 16,
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
        max_steps: 200,
        eval_every: 100,
        valid_sample: 100,
        seed: 11,
        ..TrainConfig::default()
    };
    let spec = SplitSpec { mode: SplitMode::ByTime, seed: 11, ..SplitSpec::default() };
    let split = split_examples(&corpus.sequences, &spec, config.model.history_size, DEFAULT_SEGMENT)
        .expect("split");
    let outcome = train(&corpus.sequences, &split.train, &split.valid, &config).expect("training");

    // predict one held-out test event
    let example = split.test[split.test.len() / 2];
    let (request, clicked) = request_for(&corpus.sequences, &example);
    println!(
        "user {} at {} on {} ({} candidates, {} history clicks)\n",
        corpus.sequences[example.user].user_id,
        request.current_time.timestamp_ms,
        request.current_app,
        request.current_screen.len(),
        request.history.len()
    );

    let result = predict(&outcome.store, &outcome.vocabs, &request, &config.model)
        .expect("prediction")
        .with_target(clicked);
    println!("rank  p        element");
    for (rank, &idx) in result.ranked_indices.iter().take(5).enumerate() {
        let e = &request.current_screen.elements[idx];
        let p = result.probabilities[idx - result.window_start];
        let marker = if idx == clicked { "  <- actually clicked" } else { "" };
        println!("{rank:>4}  {p:.4}   #{idx} {:?} \"{}\"{marker}", e.elem_type, e.text);
    }
    println!(
        "\nclicked element ranked {} of {}",
        result.target_rank.map(|r| r.to_string()).unwrap_or_else(|| "missing".into()),
        request.current_screen.len()
    );
}
