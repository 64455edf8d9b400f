//! Fit and score the reference predictors — Recency, Frequency, Global
//! Frequency, Logistic Regression, Naive Bayes — on one synthetic corpus
//! and print the comparison.

use clickseq::baselines::LrTrainConfig;
use clickseq::eval::{
    evaluate_counter_baseline, evaluate_pairwise_baseline, write_comparison_csv, CounterBaseline,
    PairwiseBaseline,
};
use clickseq::synth::{generate, WorldConfig};
use clickseq::train::{split_examples, SplitMode, SplitSpec, DEFAULT_SEGMENT};

fn main() {
    let world = WorldConfig { n_users: 12, weeks: 1, seed: 5, ..WorldConfig::default() };
    let corpus = generate(&world).expect("valid config");
    let spec = SplitSpec { mode: SplitMode::ByTime, seed: 5, ..SplitSpec::default() };
    let split = split_examples(&corpus.sequences, &spec, 9, DEFAULT_SEGMENT).expect("split");
    println!("{} events, {} held out for test\n", corpus.n_events(), split.test.len());

    let mut table = Vec::new();
    for (name, kind) in [
        ("Recency", CounterBaseline::Recency),
        ("Frequency", CounterBaseline::Frequency),
        ("Global Frequency", CounterBaseline::GlobalFrequency),
    ] {
        let report =
            evaluate_counter_baseline(&corpus.sequences, &split.test, kind).expect("evaluation");
        table.push((name.to_string(), report));
    }
    let lr_config = LrTrainConfig::default();
    for (name, kind) in [
        ("LR", PairwiseBaseline::LogisticRegression),
        ("NB", PairwiseBaseline::NaiveBayes),
    ] {
        let report = evaluate_pairwise_baseline(&corpus.sequences, &split, kind, &lr_config)
            .expect("evaluation");
        table.push((name.to_string(), report));
    }

    let mut csv = Vec::new();
    write_comparison_csv(&mut csv, &table).expect("csv");
    print!("{}", String::from_utf8_lossy(&csv));
    println!("\nBayes ceiling for reference: {:.4}", corpus.bayes_top1());
}
