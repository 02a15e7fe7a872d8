#![allow(dead_code)]

use std::path::{Path, PathBuf};

use argqual_core::{ArgClass, Corpus, EmotionLabel, Label, LabeledSentence, Task};

const WORDS: [&str; 20] = [
    "school", "uniforms", "reduce", "bullying", "nuclear", "power", "is", "cheap", "cloning", "harms", "animals",
    "taxes", "fund", "roads", "guns", "kill", "i", "feel", "angry", "we",
];

pub const TOPICS: usize = 10;
pub const PER_TOPIC: usize = 6;

pub fn sentence(i: usize) -> String {
    let mut words: Vec<String> = (0..5).map(|k| WORDS[(i * 7 + k * (i % 5 + 1)) % WORDS.len()].to_string()).collect();
    words.push(format!("w{i}"));
    words.join(" ")
}

fn label_for(task: Task, i: usize) -> Label {
    match task {
        Task::ArgumentIdentification => {
            Label::Class(if i % 2 == 0 { ArgClass::Argumentative } else { ArgClass::NonArgumentative })
        }
        Task::EmotionBinary => {
            Label::Emotion(if i % 3 == 0 { EmotionLabel::Emotional } else { EmotionLabel::NonEmotional })
        }
        _ => Label::Score(0.1 + 0.8 * ((i * 37 + task.code().len()) % 32) as f64 / 31.0),
    }
}

pub fn corpus(task: Task, dataset: &str, n_topics: usize, per_topic: usize, annotated: bool) -> Corpus {
    let records = (0..n_topics * per_topic)
        .map(|i| {
            let label = label_for(task, i);
            let annotations = (annotated && task == Task::EmotionBinary).then(|| {
                let Label::Emotion(gold) = label else { unreachable!() };
                let other = if gold == EmotionLabel::Emotional { EmotionLabel::NonEmotional } else { EmotionLabel::Emotional };
                vec![Some(gold), Some(gold), Some(if i % 4 == 0 { other } else { gold })]
            });
            LabeledSentence {
                id: format!("{dataset}-{i}"),
                text: sentence(i),
                topic: format!("topic {}", i % n_topics),
                label,
                dataset: dataset.into(),
                annotations,
            }
        })
        .collect();
    Corpus::new(task, records).unwrap()
}

/// Write a corpus and a matching manifest; returns the dataset entry of an experiment config.
pub fn dataset(dir: &Path, task: Task, name: &str, n_topics: usize, general: bool) -> serde_json::Value {
    let c = corpus(task, name, n_topics, PER_TOPIC, !general);
    let data = dir.join(format!("{name}.jsonl"));
    c.save_jsonl(&data).unwrap();
    let manifest = dir.join(format!("{name}.toml"));
    let topics = if task == Task::EmotionBinary { String::new() } else { format!("expected_topic_count = {n_topics}\n") };
    std::fs::write(
        &manifest,
        format!("name = \"{name}\"\ntask = \"{}\"\nexpected_sentence_count = {}\n{topics}", task.code(), c.len()),
    )
    .unwrap();
    serde_json::json!({"name": name, "path": data, "manifest": manifest, "general": general})
}

pub fn tiny_encoder() -> serde_json::Value {
    serde_json::json!({"kind": "tiny", "config": {
        "vocab_size": 256, "hidden_size": 16, "n_layers": 4, "n_heads": 2, "intermediate_size": 32,
        "max_positions": 64, "type_vocab_size": 2, "layer_norm_eps": 1e-12,
        "hidden_dropout": 0.0, "attention_dropout": 0.0
    }})
}

pub fn fast_train(metric: &str) -> serde_json::Value {
    serde_json::json!({
        "learning_rate": 1e-3, "weight_decay": 0.0, "batch_size": 8, "optimizer": "adam_w", "dropout": 0.0,
        "early_stopping_metric": metric, "patience": 2, "eval_frequency": 1, "warmup_fraction": 0.0,
        "seed": 0, "max_epochs": 2
    })
}

pub fn write_config(dir: &Path, name: &str, mut cfg: serde_json::Value) -> PathBuf {
    let obj = cfg.as_object_mut().unwrap();
    obj.entry("out_dir").or_insert(serde_json::json!("runs"));
    obj.entry("encoder").or_insert(tiny_encoder());
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

pub fn zero_shot_config(dir: &Path, seeds: &[u64]) -> PathBuf {
    let datasets = vec![
        dataset(dir, Task::ArgumentQuality, "aq", TOPICS, false),
        dataset(dir, Task::ArgumentIdentification, "ai", TOPICS, false),
        dataset(dir, Task::EvidenceDetection, "ed", TOPICS, false),
    ];
    write_config(
        dir,
        "zero_shot.json",
        serde_json::json!({"kind": "zero_shot", "datasets": datasets, "seeds": seeds, "train": fast_train("validation_mse")}),
    )
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
