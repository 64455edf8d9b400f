//! Run the ablation grid — feature drop-outs and history sizes — on a small
//! synthetic corpus and print the comparison table.
//!
//! Trains twelve model variants sequentially, so this is the slowest example;
//! expect a couple of minutes on one core.

use clickseq::embed::FeatureFlags;
use clickseq::eval::{run_ablations, write_comparison_csv};
use clickseq::model::ModelConfig;
use clickseq::synth::{generate, WorldConfig};
use clickseq::train::{split_examples, SplitMode, SplitSpec, TrainConfig, DEFAULT_SEGMENT};

fn main() {
    env_logger::init();
    let world = WorldConfig { n_users: 8, weeks: 1, seed: 7, ..WorldConfig::default() };
    let corpus = generate(&world).expect("valid config");

    let base = TrainConfig {
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
        max_steps: 300,
        eval_every: 150,
        valid_sample: 100,
        seed: 7,
        ..TrainConfig::default()
    };
    let spec = SplitSpec { mode: SplitMode::ByTime, seed: 7, ..SplitSpec::default() };
    let split = split_examples(&corpus.sequences, &spec, base.model.history_size, DEFAULT_SEGMENT)
        .expect("split");
    println!("{} events, {} test\n", corpus.n_events(), split.test.len());

    let table = run_ablations(&corpus.sequences, &split, &base).expect("ablations");
    let mut csv = Vec::new();
    write_comparison_csv(&mut csv, &table).expect("csv");
    print!("{}", String::from_utf8_lossy(&csv));
}
