//! Train the hierarchical Transformer + pointer model on a small synthetic
//! corpus and watch the loss curve and validation top-1.

use clickseq::embed::FeatureFlags;
use clickseq::model::ModelConfig;
use clickseq::synth::{generate, WorldConfig};
use clickseq::train::{split_examples, train, SplitMode, SplitSpec, TrainConfig, DEFAULT_SEGMENT};

fn main() {
    let world = WorldConfig {
        n_apps: 3,
        screens_per_app: 4,
        n_users: 6,
        weeks: 1,
        seed: 7,
        ..WorldConfig::default()
    };
    let corpus = generate(&world).expect("valid config");
    println!("{} events from {} users", corpus.n_events(), corpus.sequences.len());

    let model = ModelConfig {
        d: 16,
        screen_encoder_layers: 1,
        sequence_encoder_layers: 1,
        pointer_layers: 1,
        heads: 2,
        history_size: 3,
        dropout: 0.1,
        max_elements: 64,
        flags: FeatureFlags::default(),
    };
    let config = TrainConfig {
        model,
        batch_size: 32,
        max_steps: 300,
        eval_every: 50,
        valid_sample: 200,
        seed: 7,
        ..TrainConfig::default()
    };

    let spec = SplitSpec { mode: SplitMode::ByTime, seed: 7, ..SplitSpec::default() };
    let split = split_examples(&corpus.sequences, &spec, config.model.history_size, DEFAULT_SEGMENT)
        .expect("split");
    println!(
        "split: {} train / {} valid / {} test\n",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );

    let outcome = train(&corpus.sequences, &split.train, &split.valid, &config).expect("training");
    println!("step    lr        train_loss  valid_top1");
    for row in &outcome.log {
        println!(
            "{:<7} {:<9.6} {:<11.4} {}",
            row.step,
            row.lr,
            row.train_loss,
            row.valid_top1.map(|v| format!("{v:.4}")).unwrap_or_default()
        );
    }
    println!("\nbest validation top-1: {:.4}", outcome.best_valid_top1);
    println!("Bayes ceiling on this corpus: {:.4}", corpus.bayes_top1());
}
