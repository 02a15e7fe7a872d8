mod support;

use std::collections::BTreeMap;

use argqual_core::Task;
use argqual_nn::model::Example;
use argqual_nn::optim::Optimizer;
use argqual_nn::training::optimization_step;
use argqual_nn::{
    train_multi_dataset, train_multi_task, train_single_task, EarlyStoppingMetric, LossWeighting, NnError, OptimizerKind,
    TrainConfig,
};
use candle_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::{class_corpus, fast_config, model, regression_corpus, score_corpus, spread};

fn snapshot(m: &argqual_nn::MultiTaskModel, names: &[String]) -> Vec<Vec<f64>> {
    names
        .iter()
        .map(|n| m.params().get(n).unwrap().as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap())
        .collect()
}

#[test]
fn tiny_model_overfits_thirty_two_samples() {
    let mut m = model(&[Task::ArgumentQuality], 1);
    let data = regression_corpus(32, "toy", spread);
    let log = train_single_task(&mut m, &data, &data, &fast_config(200)).unwrap();
    let best = log.best_val_metric();
    assert!(best < 0.01, "best training MSE {best}");
    let preds = m.predict(&data, Task::ArgumentQuality, 16).unwrap();
    let mse = preds
        .iter()
        .zip(data.records())
        .map(|(p, r)| (p.as_score().unwrap() - r.label.as_score().unwrap()).powi(2))
        .sum::<f64>()
        / 32.0;
    assert!((mse - best).abs() < 1e-9, "restored model MSE {mse} vs logged best {best}");
}

#[test]
fn identical_runs_give_identical_logs() {
    let train = regression_corpus(24, "toy", spread);
    let val = regression_corpus(8, "toy", |i| spread(i + 3));
    let cfg = TrainConfig { max_epochs: 3, eval_frequency: 2, ..fast_config(3) };
    let run = || {
        let mut m = argqual_nn::MultiTaskModel::tiny(
            argqual_nn::EncoderConfig::tiny(),
            &[Task::ArgumentQuality],
            argqual_nn::ModelOptions { seed: 2, ..Default::default() },
        )
        .unwrap();
        let log = train_single_task(&mut m, &train, &val, &TrainConfig { dropout: 0.1, ..cfg.clone() }).unwrap();
        let mut csv = Vec::new();
        log.write_csv(&mut csv).unwrap();
        (log, csv)
    };
    let (a, csv_a) = run();
    let (b, csv_b) = run();
    assert_eq!(a, b);
    assert_eq!(csv_a, csv_b);
    assert_eq!(a.rows.len(), 6);
}

/// Training targets sit at 0.9 while validation asks for 0.1 on the same sentences, so
/// validation loss gets worse with every step after the first evaluation.
fn diverging_run(patience: usize, eval_frequency: usize) -> argqual_nn::TrainingLog {
    let mut m = model(&[Task::ArgumentQuality], 7);
    let train = regression_corpus(16, "toy", |_| 0.9);
    let val = regression_corpus(16, "toy", |_| 0.1);
    let cfg = TrainConfig { patience, eval_frequency, batch_size: 4, learning_rate: 3e-3, ..fast_config(50) };
    train_single_task(&mut m, &train, &val, &cfg).unwrap()
}

#[test]
fn patience_counts_epochs() {
    let log = diverging_run(5, 1);
    assert!(log.stopped_early);
    assert_eq!(log.best_row, 0);
    assert_eq!(log.rows.len(), 6);
    assert_eq!(log.rows.last().unwrap().epoch_fraction, 6.0);

    let log = diverging_run(2, 4);
    assert!(log.stopped_early);
    assert_eq!(log.rows.len(), 9);
}

#[test]
fn returned_checkpoint_is_best_in_log() {
    let mut m = model(&[Task::ArgumentQuality], 8);
    let train = regression_corpus(24, "toy", spread);
    let val = regression_corpus(12, "toy", |i| spread(i * 5 + 1));
    let log = train_single_task(&mut m, &train, &val, &TrainConfig { patience: 2, ..fast_config(12) }).unwrap();
    let best = log.best_val_metric();
    assert!(log.rows.iter().all(|r| best <= r.val_metric));
    assert!(log.rows[log.best_row + 1..].iter().all(|r| r.val_metric >= best));
}

#[test]
fn single_dataset_list_matches_single_task() {
    let train = regression_corpus(16, "toy", spread);
    let val = regression_corpus(8, "toy", |i| spread(i + 1));
    let cfg = fast_config(2);
    let mut a = model(&[Task::ArgumentQuality], 3);
    let mut b = model(&[Task::ArgumentQuality], 3);
    let la = train_single_task(&mut a, &train, &val, &cfg).unwrap();
    let lb = train_multi_dataset(&mut b, &[(&train, 1.0)], &val, &cfg).unwrap();
    assert_eq!(la, lb);
}

#[test]
fn multi_dataset_runs_and_rejects_mixed_tasks() {
    let a = regression_corpus(12, "alpha", spread);
    let b = regression_corpus(20, "beta", |i| spread(i + 2));
    let val = regression_corpus(8, "gamma", spread);
    let mut m = model(&[Task::ArgumentQuality, Task::ArgumentIdentification], 3);
    let log = train_multi_dataset(&mut m, &[(&a, 1.0), (&b, 1.0)], &val, &fast_config(2)).unwrap();
    // Joint steps: the larger corpus sets the epoch length.
    assert_eq!(log.steps_per_epoch, 3);

    let ai = class_corpus(Task::ArgumentIdentification, 8, "ai");
    let err = train_multi_dataset(&mut m, &[(&a, 1.0), (&ai, 1.0)], &val, &fast_config(1)).unwrap_err();
    assert!(matches!(err, NnError::Config(_)));
}

#[test]
fn head_and_metric_mismatches_are_config_errors() {
    let aq = regression_corpus(8, "toy", spread);
    let mut m = model(&[Task::ArgumentIdentification], 3);
    assert!(matches!(train_single_task(&mut m, &aq, &aq, &fast_config(1)), Err(NnError::Config(_))));
    let ai = class_corpus(Task::ArgumentIdentification, 8, "ai");
    let cfg = TrainConfig { early_stopping_metric: EarlyStoppingMetric::ValidationMse, ..fast_config(1) };
    assert!(matches!(train_single_task(&mut m, &ai, &ai, &cfg), Err(NnError::Config(_))));
    let cfg = TrainConfig { early_stopping_metric: EarlyStoppingMetric::ValidationCrossEntropy, ..cfg };
    assert!(train_single_task(&mut m, &ai, &ai, &cfg).is_ok());
}

#[test]
fn non_finite_loss_is_a_training_error() {
    let mut m = model(&[Task::ArgumentQuality], 3);
    let b = m.params().get("heads.AQ.out.bias").unwrap();
    b.set(&Tensor::new(&[f64::NAN], b.device()).unwrap()).unwrap();
    let data = regression_corpus(8, "toy", spread);
    match train_single_task(&mut m, &data, &data, &fast_config(1)) {
        Err(NnError::Training { step, message }) => {
            assert_eq!(step, 1);
            assert!(message.contains("toy"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn multi_task_emits_one_curve_per_task() {
    let tasks = [Task::ArgumentQuality, Task::ArgumentIdentification, Task::EvidenceDetection];
    let mut m = model(&tasks, 4);
    let corpora: BTreeMap<Task, _> = [
        (Task::ArgumentQuality, (regression_corpus(16, "aq", spread), regression_corpus(8, "aq", spread))),
        (Task::ArgumentIdentification, (class_corpus(Task::ArgumentIdentification, 16, "ai"), class_corpus(Task::ArgumentIdentification, 8, "ai"))),
        (Task::EvidenceDetection, (score_corpus(Task::EvidenceDetection, 8, "ed", spread), score_corpus(Task::EvidenceDetection, 8, "ed", spread))),
    ]
    .into();
    let log = train_multi_task(&mut m, &corpora, &fast_config(2), &LossWeighting::uniform()).unwrap();
    assert_eq!(log.sources, vec!["AQ", "AI", "ED"]);
    assert_eq!(log.steps_per_epoch, 2 + 2 + 1);
    for row in &log.rows {
        assert!((row.val_metric - row.per_source.iter().sum::<f64>() / 3.0).abs() < 1e-9);
    }
    for task in ["AQ", "AI", "ED"] {
        assert_eq!(log.curve(task).unwrap().len(), log.rows.len());
    }
    let mut csv = Vec::new();
    log.write_csv(&mut csv).unwrap();
    let header = String::from_utf8(csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "step,epoch_fraction,train_loss,val_metric,val_AQ,val_AI,val_ED");

    let mut missing = corpora.clone();
    missing.remove(&Task::EvidenceDetection);
    let err = train_multi_task(&mut m, &missing, &fast_config(1), &LossWeighting::uniform()).unwrap_err();
    assert!(matches!(err, NnError::Config(_)));
}

#[test]
fn one_task_step_moves_the_shared_encoder_only() {
    let m = model(&[Task::ArgumentQuality, Task::ArgumentIdentification], 6);
    let encoder = m.encoder_param_names();
    let ai_head: Vec<String> = m.params().iter().map(|(k, _)| k.clone()).filter(|k| k.starts_with("heads.AI")).collect();
    let (enc0, ai0) = (snapshot(&m, &encoder), snapshot(&m, &ai_head));

    let data = regression_corpus(8, "toy", spread);
    let examples = m.examples(&data, Task::ArgumentQuality).unwrap();
    let batch: Vec<&Example> = examples.iter().collect();
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    optimization_step(&m, &mut opt, Task::ArgumentQuality, &batch, 0.1, &mut rng).unwrap();

    assert_ne!(snapshot(&m, &encoder), enc0);
    assert_eq!(snapshot(&m, &ai_head), ai0);
}
