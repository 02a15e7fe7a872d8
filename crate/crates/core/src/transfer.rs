//! Zero-shot adapters between task heads and the source × target evaluation matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{ArgClass, Corpus, LabelKind, Task};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_seeds, binary_macro_f1, spearman, ClassCounts, PairedSeries};

/// Raw output of one task head for one sentence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskHeadOutput {
    /// Regression head output in [0, 1].
    Score(f64),
    /// Softmax over (positive, negative); index 0 is argumentative / emotional.
    ClassProbs([f64; 2]),
}

impl TaskHeadOutput {
    /// Score view: regression output as is, classifier output through [`cls_to_score`].
    pub fn as_score(&self) -> Result<f64> {
        match *self {
            TaskHeadOutput::Score(s) => Ok(s),
            TaskHeadOutput::ClassProbs(p) => cls_to_score(p),
        }
    }
}

/// Anything that maps a corpus to per-sentence head outputs, in record order.
pub trait TaskPredictor {
    /// The task whose head produces the outputs.
    fn task(&self) -> Task;
    fn predict(&self, corpus: &Corpus) -> Result<Vec<TaskHeadOutput>>;
}

const NORMALIZATION_TOL: f64 = 1e-6;

/// Positive-class probability of a normalized pair.
pub fn cls_to_score(class_probs: [f64; 2]) -> Result<f64> {
    let [pos, neg] = class_probs;
    if !(0.0..=1.0).contains(&pos) || !(0.0..=1.0).contains(&neg) || (pos + neg - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Validation(format!("class probabilities ({pos}, {neg}) are not normalized")));
    }
    Ok(pos)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub alpha: f64,
    pub achieved_macro_f1: f64,
    pub candidate_count: usize,
}

/// Argumentative iff `score >= alpha`.
pub fn apply_threshold(score: f64, alpha: f64) -> ArgClass {
    if score >= alpha {
        ArgClass::Argumentative
    } else {
        ArgClass::NonArgumentative
    }
}

fn edge_margin(x: f64) -> f64 {
    1e-9_f64.max(x.abs() * 1e-12)
}

fn macro_from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> f64 {
    let neg = ClassCounts { tp: tn, fp: fn_, fn_: fp }.f1();
    let pos = ClassCounts { tp, fp, fn_ }.f1();
    (neg + pos) / 2.0
}

/// Best Macro-F1 threshold over the midpoints of adjacent distinct scores plus one
/// candidate below the minimum and one above the maximum. Ties go to the smaller α.
pub fn calibrate_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdCalibration> {
    if scores.is_empty() {
        return Err(Error::Input("threshold calibration needs at least one score".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Input(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input("threshold calibration scores must be finite".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    // Start with everything predicted positive and sweep upwards.
    let (mut tp, mut fp, mut fn_, mut tn) = (positives, negatives, 0, 0);
    let lo = scores[order[0]];
    let hi = scores[order[order.len() - 1]];
    let mut best_alpha = lo - edge_margin(lo);
    let mut best = macro_from_counts(tp, fp, fn_, tn);
    let mut candidates = 1;

    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            if labels[order[i]] {
                tp -= 1;
                fn_ += 1;
            } else {
                fp -= 1;
                tn += 1;
            }
            i += 1;
        }
        let alpha = if i < order.len() {
            value + (scores[order[i]] - value) / 2.0
        } else {
            hi + edge_margin(hi)
        };
        candidates += 1;
        let f1 = macro_from_counts(tp, fp, fn_, tn);
        if f1 > best {
            best = f1;
            best_alpha = alpha;
        }
    }

    let predicted: Vec<bool> = scores.iter().map(|&s| apply_threshold(s, best_alpha).is_positive()).collect();
    Ok(ThresholdCalibration {
        alpha: best_alpha,
        achieved_macro_f1: binary_macro_f1(&predicted, labels)?,
        candidate_count: candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMetric {
    Spearman,
    MacroF1,
}

impl TransferMetric {
    pub fn for_target(target: Task) -> Self {
        if target.is_regression() {
            TransferMetric::Spearman
        } else {
            TransferMetric::MacroF1
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransferMetric::Spearman => "spearman",
            TransferMetric::MacroF1 => "macro_f1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source: Task,
    pub target: Task,
    pub metric: TransferMetric,
    pub value: f64,
    /// Threshold used when a score-producing source was evaluated on a binary target.
    pub threshold: Option<ThresholdCalibration>,
}

/// One seed's matrix, cells in (source, target) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub cells: Vec<TransferCell>,
}

impl TransferMatrix {
    pub fn get(&self, source: Task, target: Task) -> Option<&TransferCell> {
        self.cells.iter().find(|c| c.source == source && c.target == target)
    }
}

fn gold_binary(corpus: &Corpus) -> Result<Vec<bool>> {
    corpus
        .records()
        .iter()
        .map(|r| {
            r.label
                .is_positive()
                .ok_or_else(|| Error::Validation(format!("record '{}' has no binary label", r.id)))
        })
        .collect()
}

fn predict_checked(model: &dyn TaskPredictor, corpus: &Corpus) -> Result<Vec<TaskHeadOutput>> {
    let out = model.predict(corpus)?;
    if out.len() != corpus.len() {
        return Err(Error::Backend(format!(
            "{} model returned {} outputs for {} sentences",
            model.task(),
            out.len(),
            corpus.len()
        )));
    }
    Ok(out)
}

fn evaluate_cell(model: &dyn TaskPredictor, test: &Corpus, calibration: Option<&Corpus>) -> Result<TransferCell> {
    let source = model.task();
    let target = test.task();
    let outputs = predict_checked(model, test)?;
    let metric = TransferMetric::for_target(target);
    let (value, threshold) = match metric {
        TransferMetric::Spearman => {
            let gold = test
                .scores()
                .ok_or_else(|| Error::Validation(format!("{target} test set lacks score labels")))?;
            let pred = outputs.iter().map(TaskHeadOutput::as_score).collect::<Result<Vec<_>>>()?;
            (spearman(&PairedSeries::new(pred, gold)?)?, None)
        }
        TransferMetric::MacroF1 => {
            let gold = gold_binary(test)?;
            if source.label_kind() == target.label_kind() {
                // Same label space: the classifier's own argmax decision.
                let pred = outputs
                    .iter()
                    .map(|o| match *o {
                        TaskHeadOutput::ClassProbs(p) => Ok(p[0] >= p[1]),
                        TaskHeadOutput::Score(_) => {
                            Err(Error::Backend(format!("{source} model emitted a score for a class task")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                (binary_macro_f1(&pred, &gold)?, None)
            } else {
                let cal = calibration.filter(|c| c.task() == target).ok_or_else(|| {
                    Error::Config(format!("{source} → {target} needs a {target} calibration set"))
                })?;
                let cal_scores = predict_checked(model, cal)?
                    .iter()
                    .map(TaskHeadOutput::as_score)
                    .collect::<Result<Vec<_>>>()?;
                let fitted = calibrate_threshold(&cal_scores, &gold_binary(cal)?)?;
                let pred = outputs
                    .iter()
                    .map(|o| Ok(apply_threshold(o.as_score()?, fitted.alpha).is_positive()))
                    .collect::<Result<Vec<_>>>()?;
                (binary_macro_f1(&pred, &gold)?, Some(fitted))
            }
        }
    };
    Ok(TransferCell { source, target, metric, value, threshold })
}

/// Evaluate every source model on every target test set.
///
/// Binary targets are scored with Macro-F1; a source whose outputs live in a different label
/// space gets a threshold fitted on `calibration`, which must carry the target task.
/// Score targets are scored with Spearman on raw or positive-class scores.
pub fn evaluate_transfer_matrix(
    models: &BTreeMap<Task, &dyn TaskPredictor>,
    test_sets: &BTreeMap<Task, Corpus>,
    calibration: Option<&Corpus>,
) -> Result<TransferMatrix> {
    if models.is_empty() {
        return Err(Error::Config("transfer matrix needs at least one model".into()));
    }
    for task in models.keys() {
        if !test_sets.contains_key(task) {
            return Err(Error::Config(format!("no {task} test set for the {task} model")));
        }
    }
    let mut cells = Vec::new();
    for (&source, &model) in models {
        if model.task() != source {
            return Err(Error::Config(format!("model registered for {source} predicts {}", model.task())));
        }
        for (&target, test) in test_sets {
            if test.task() != target {
                return Err(Error::Config(format!("test set registered for {target} holds {}", test.task())));
            }
            if target.label_kind() == LabelKind::Emotion && source.label_kind() != LabelKind::Emotion {
                return Err(Error::Config(format!("{source} → {target} is not a supported transfer")));
            }
            cells.push(evaluate_cell(model, test, calibration)?);
        }
    }
    Ok(TransferMatrix { cells })
}

/// Per-cell mean ± std across seeds; one CSV row each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub source_task: Task,
    pub target_task: Task,
    pub metric_name: TransferMetric,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

pub fn aggregate_transfer(per_seed: &[TransferMatrix]) -> Result<Vec<TransferRow>> {
    let mut values: BTreeMap<(Task, Task, TransferMetric), Vec<f64>> = BTreeMap::new();
    for m in per_seed {
        let mut seen = BTreeSet::new();
        for c in &m.cells {
            if !seen.insert((c.source, c.target)) {
                return Err(Error::Input(format!("duplicate cell {} → {}", c.source, c.target)));
            }
            values.entry((c.source, c.target, c.metric)).or_default().push(c.value);
        }
    }
    values
        .into_iter()
        .map(|((source_task, target_task, metric_name), v)| {
            let agg = aggregate_seeds(&v)?;
            Ok(TransferRow { source_task, target_task, metric_name, mean: agg.mean, std: agg.std, n_seeds: agg.n })
        })
        .collect()
}

pub fn write_transfer_csv<W: Write>(rows: &[TransferRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source_task", "target_task", "metric_name", "mean", "std", "n_seeds"])?;
    for r in rows {
        w.write_record([
            r.source_task.code(),
            r.target_task.code(),
            r.metric_name.as_str(),
            &r.mean.to_string(),
            &r.std.to_string(),
            &r.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
