#![allow(dead_code)]

use argqual_core::{ArgClass, Corpus, Label, LabeledSentence, Task};
use argqual_nn::{EncoderConfig, ModelOptions, MultiTaskModel, TrainConfig};
use argqual_nn::{EarlyStoppingMetric, OptimizerKind};

const WORDS: [&str; 16] = [
    "school", "uniforms", "reduce", "bullying", "nuclear", "power", "is", "cheap", "cloning", "harms", "animals",
    "taxes", "fund", "roads", "guns", "kill",
];

pub fn sentence(i: usize) -> String {
    let mut words: Vec<String> = (0..5).map(|k| WORDS[(i * 7 + k * (i % 5 + 1)) % WORDS.len()].to_string()).collect();
    words.push(format!("w{i}"));
    words.join(" ")
}

fn record(i: usize, dataset: &str, label: Label) -> LabeledSentence {
    LabeledSentence {
        id: format!("{dataset}-{i}"),
        text: sentence(i),
        topic: format!("topic {}", i % 4),
        label,
        dataset: dataset.into(),
        annotations: None,
    }
}

pub fn regression_corpus(n: usize, dataset: &str, target: impl Fn(usize) -> f64) -> Corpus {
    score_corpus(Task::ArgumentQuality, n, dataset, target)
}

pub fn score_corpus(task: Task, n: usize, dataset: &str, target: impl Fn(usize) -> f64) -> Corpus {
    Corpus::new(task, (0..n).map(|i| record(i, dataset, Label::Score(target(i)))).collect()).unwrap()
}

pub fn spread(i: usize) -> f64 {
    0.1 + 0.8 * ((i * 37) % 32) as f64 / 31.0
}

pub fn class_corpus(task: Task, n: usize, dataset: &str) -> Corpus {
    let label = |i: usize| Label::Class(if i % 2 == 0 { ArgClass::Argumentative } else { ArgClass::NonArgumentative });
    Corpus::new(task, (0..n).map(|i| record(i, dataset, label(i))).collect()).unwrap()
}

pub fn no_dropout_encoder() -> EncoderConfig {
    EncoderConfig { hidden_dropout: 0.0, attention_dropout: 0.0, ..EncoderConfig::tiny() }
}

pub fn model(tasks: &[Task], seed: u64) -> MultiTaskModel {
    MultiTaskModel::tiny(no_dropout_encoder(), tasks, ModelOptions { seed, head_dropout: 0.0, ..Default::default() }).unwrap()
}

pub fn fast_config(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        weight_decay: 0.0,
        batch_size: 8,
        optimizer: OptimizerKind::AdamW,
        dropout: 0.0,
        early_stopping_metric: EarlyStoppingMetric::ValidationMse,
        patience: max_epochs,
        eval_frequency: 1,
        warmup_fraction: 0.0,
        seed: 3,
        max_epochs,
    }
}
