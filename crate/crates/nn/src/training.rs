//! Single-task, multi-dataset and multi-task training loops with early stopping.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use argqual_core::{Corpus, Task};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::heads::HeadKind;
use crate::model::{Example, MultiTaskModel};
use crate::optim::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStoppingMetric {
    ValidationMse,
    ValidationCrossEntropy,
}

impl EarlyStoppingMetric {
    pub fn for_head(kind: HeadKind) -> Self {
        match kind {
            HeadKind::Regression => Self::ValidationMse,
            HeadKind::Classification => Self::ValidationCrossEntropy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Dropout rate applied in the task heads.
    pub dropout: f64,
    /// Single-task and multi-dataset runs only; multi-task runs stop on each head's own loss.
    pub early_stopping_metric: EarlyStoppingMetric,
    /// In epochs, whatever the evaluation frequency.
    pub patience: usize,
    /// Evaluations per epoch.
    pub eval_frequency: usize,
    /// Linear warm-up length as a fraction of one epoch.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub max_epochs: usize,
}

impl TrainConfig {
    /// Argument-quality regression profile: SGD, lr 9.1e-6, weight decay 0.35, batch 64.
    pub fn argument_quality() -> Self {
        Self {
            learning_rate: 9.1e-6,
            weight_decay: 0.35,
            batch_size: 64,
            optimizer: OptimizerKind::Sgd,
            dropout: 0.1,
            early_stopping_metric: EarlyStoppingMetric::ValidationMse,
            patience: 5,
            eval_frequency: 1,
            warmup_fraction: 0.0,
            seed: 0,
            max_epochs: 20,
        }
    }

    /// Cross-task transfer profile: lr 1e-5, batch 64, 0.1-epoch warm-up, 10 evaluations per epoch.
    pub fn zero_shot() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 0.0,
            batch_size: 64,
            optimizer: OptimizerKind::AdamW,
            dropout: 0.1,
            early_stopping_metric: EarlyStoppingMetric::ValidationCrossEntropy,
            patience: 5,
            eval_frequency: 10,
            warmup_fraction: 0.1,
            seed: 0,
            max_epochs: 20,
        }
    }

    /// Emotion detection profile: lr 5e-5, batch 32, weight decay 0.1, 4 evaluations per epoch.
    pub fn emotion() -> Self {
        Self {
            learning_rate: 5e-5,
            weight_decay: 0.1,
            batch_size: 32,
            optimizer: OptimizerKind::AdamW,
            dropout: 0.1,
            early_stopping_metric: EarlyStoppingMetric::ValidationCrossEntropy,
            patience: 3,
            eval_frequency: 4,
            warmup_fraction: 0.0,
            seed: 0,
            max_epochs: 20,
        }
    }

    pub const PRESETS: [&'static str; 3] = ["argument_quality", "zero_shot", "emotion"];

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "argument_quality" => Some(Self::argument_quality()),
            "zero_shot" => Some(Self::zero_shot()),
            "emotion" => Some(Self::emotion()),
            _ => None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.eval_frequency == 0 {
            return bad("eval_frequency must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.warmup_fraction >= 0.0 && self.warmup_fraction.is_finite()) {
            return bad(format!("warmup fraction must be non-negative, got {}", self.warmup_fraction));
        }
        Ok(())
    }
}

/// Per-source loss weights; sources without an entry weigh 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWeighting {
    weights: BTreeMap<String, f64>,
}

impl LossWeighting {
    pub fn uniform() -> Self {
        Self::default()
    }

    pub fn with(mut self, source: impl Into<String>, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(NnError::Config(format!("loss weight must be non-negative, got {weight}")));
        }
        self.weights.insert(source.into(), weight);
        Ok(self)
    }

    pub fn weight(&self, source: &str) -> f64 {
        self.weights.get(source).copied().unwrap_or(1.0)
    }

    /// Weighted mean Σ wᵢ·lᵢ / Σ wᵢ.
    pub fn combine<'a>(&self, losses: impl IntoIterator<Item = (&'a str, f64)>) -> Result<f64> {
        let (num, den) = losses
            .into_iter()
            .fold((0.0, 0.0), |(n, d), (s, l)| (n + self.weight(s) * l, d + self.weight(s)));
        if den <= 0.0 {
            return Err(NnError::Config("loss weights sum to zero".into()));
        }
        Ok(num / den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch_fraction: f64,
    /// Mean combined training loss since the previous evaluation.
    pub train_loss: f64,
    pub val_metric: f64,
    /// Validation loss per source, aligned with [`TrainingLog::sources`].
    pub per_source: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLog {
    pub sources: Vec<String>,
    pub rows: Vec<LogRow>,
    /// Row whose parameters were restored at the end.
    pub best_row: usize,
    pub stopped_early: bool,
    pub steps: usize,
    pub steps_per_epoch: usize,
}

impl TrainingLog {
    pub fn best_val_metric(&self) -> f64 {
        self.rows[self.best_row].val_metric
    }

    /// Validation curve for one source.
    pub fn curve(&self, source: &str) -> Option<Vec<f64>> {
        let i = self.sources.iter().position(|s| s == source)?;
        Some(self.rows.iter().map(|r| r.per_source[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string(), "epoch_fraction".into(), "train_loss".into(), "val_metric".into()];
        if self.sources.len() > 1 {
            header.extend(self.sources.iter().map(|s| format!("val_{s}")));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string(), r.epoch_fraction.to_string(), r.train_loss.to_string(), r.val_metric.to_string()];
            if self.sources.len() > 1 {
                rec.extend(r.per_source.iter().map(f64::to_string));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

struct Source {
    name: String,
    task: Task,
    examples: Vec<Example>,
    weight: f64,
}

struct Cursor {
    order: Vec<usize>,
    pos: usize,
}

impl Cursor {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    fn next_batch(&mut self, bs: usize, rng: &mut ChaCha8Rng) -> &[usize] {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let start = self.pos;
        self.pos = (start + bs).min(self.order.len());
        &self.order[start..self.pos]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schedule {
    /// One batch from every source per step, losses combined by weight.
    Joint,
    /// One source per step in turn, loss scaled so a full cycle averages to the weighted mean.
    RoundRobin,
}

fn batches(n: usize, bs: usize) -> usize {
    n.div_ceil(bs)
}

/// One optimizer step on a single task batch; returns the batch loss.
pub fn optimization_step(
    model: &MultiTaskModel,
    optimizer: &mut Optimizer,
    task: Task,
    batch: &[&Example],
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let loss = model.batch_loss(task, batch, Some(rng))?;
    let value = loss.to_scalar::<f64>()?;
    if !value.is_finite() {
        return Err(NnError::Training { step: 0, message: format!("non-finite loss {value} on task {task}") });
    }
    optimizer.step(model.params(), &loss.backward()?, lr)?;
    Ok(value)
}

fn evaluate(model: &MultiTaskModel, val: &[Source], batch_size: usize) -> Result<(f64, Vec<f64>)> {
    let mut per = Vec::with_capacity(val.len());
    for src in val {
        let mut total = 0.0;
        for chunk in src.examples.chunks(batch_size) {
            let refs: Vec<&Example> = chunk.iter().collect();
            total += model.batch_loss(src.task, &refs, None)?.to_scalar::<f64>()? * chunk.len() as f64;
        }
        per.push(total / src.examples.len() as f64);
    }
    let den: f64 = val.iter().map(|s| s.weight).sum();
    if den <= 0.0 {
        return Err(NnError::Config("validation weights sum to zero".into()));
    }
    let combined = val.iter().zip(&per).map(|(s, l)| s.weight * l).sum::<f64>() / den;
    Ok((combined, per))
}

fn fit(
    model: &mut MultiTaskModel,
    train: Vec<Source>,
    val: Vec<Source>,
    cfg: &TrainConfig,
    schedule: Schedule,
) -> Result<TrainingLog> {
    cfg.validate()?;
    model.set_head_dropout(cfg.dropout)?;
    if let Some(s) = train.iter().chain(&val).find(|s| s.examples.is_empty()) {
        return Err(NnError::Config(format!("source '{}' has no examples", s.name)));
    }
    let weight_sum: f64 = train.iter().map(|s| s.weight).sum();
    if weight_sum <= 0.0 {
        return Err(NnError::Config("training weights sum to zero".into()));
    }

    let bs = cfg.batch_size;
    let steps_per_epoch = match schedule {
        Schedule::Joint => train.iter().map(|s| batches(s.examples.len(), bs)).max().unwrap_or(0),
        Schedule::RoundRobin => train.iter().map(|s| batches(s.examples.len(), bs)).sum(),
    };
    let total_steps = steps_per_epoch * cfg.max_epochs;
    let warmup_steps = (cfg.warmup_fraction * steps_per_epoch as f64).round() as usize;
    let freq = cfg.eval_frequency;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cursors: Vec<Cursor> = train.iter().map(|s| Cursor::new(s.examples.len(), &mut rng)).collect();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.weight_decay);

    let mut rows: Vec<LogRow> = Vec::new();
    let mut best: Option<(usize, f64, crate::params::Snapshot)> = None;
    let mut stopped_early = false;
    let mut running = (0.0, 0usize);
    let mut step = 0;

    while step < total_steps {
        step += 1;
        let lr = if warmup_steps > 0 && step <= warmup_steps {
            cfg.learning_rate * step as f64 / warmup_steps as f64
        } else {
            cfg.learning_rate
        };

        let active: Vec<usize> = match schedule {
            Schedule::Joint => (0..train.len()).collect(),
            Schedule::RoundRobin => vec![(step - 1) % train.len()],
        };
        let mut combined = None;
        let mut value = 0.0;
        for i in active {
            let src = &train[i];
            let idx = cursors[i].next_batch(bs, &mut rng).to_vec();
            let batch: Vec<&Example> = idx.iter().map(|&j| &src.examples[j]).collect();
            let loss = model.batch_loss(src.task, &batch, Some(&mut rng))?;
            let l = loss.to_scalar::<f64>()?;
            if !l.is_finite() {
                return Err(NnError::Training {
                    step,
                    message: format!("non-finite loss {l} on source '{}' at lr {lr:e}", src.name),
                });
            }
            let scale = match schedule {
                Schedule::Joint => src.weight / weight_sum,
                Schedule::RoundRobin => src.weight * train.len() as f64 / weight_sum,
            };
            value += scale * l;
            let scaled = (loss * scale)?;
            combined = Some(match combined {
                None => scaled,
                Some(acc) => (acc + scaled)?,
            });
        }
        let combined = combined.expect("at least one source per step");
        optimizer.step(model.params(), &combined.backward()?, lr)?;
        running.0 += value;
        running.1 += 1;

        if step * freq / steps_per_epoch > (step - 1) * freq / steps_per_epoch {
            let (val_metric, per_source) = evaluate(model, &val, bs)?;
            if !val_metric.is_finite() {
                return Err(NnError::Training { step, message: format!("non-finite validation loss {val_metric}") });
            }
            let epoch_fraction = step as f64 / steps_per_epoch as f64;
            rows.push(LogRow { step, epoch_fraction, train_loss: running.0 / running.1 as f64, val_metric, per_source });
            running = (0.0, 0);
            if best.as_ref().is_none_or(|b| val_metric < b.1) {
                best = Some((rows.len() - 1, val_metric, model.params().snapshot()?));
            }
            let best_epoch = rows[best.as_ref().expect("set above").0].epoch_fraction;
            log::debug!("step {step} epoch {epoch_fraction:.2} val {val_metric:.6}");
            if epoch_fraction - best_epoch >= cfg.patience as f64 - 1e-9 {
                stopped_early = step < total_steps;
                break;
            }
        }
    }

    let (best_row, _, snapshot) = best.ok_or_else(|| NnError::Training { step, message: "no evaluation ran".into() })?;
    model.params().restore(&snapshot)?;
    Ok(TrainingLog {
        sources: val.iter().map(|s| s.name.clone()).collect(),
        rows,
        best_row,
        stopped_early,
        steps: step,
        steps_per_epoch,
    })
}

fn source_name(corpus: &Corpus, fallback: usize) -> String {
    corpus.dataset().map(str::to_string).unwrap_or_else(|| format!("source{fallback}"))
}

fn check_head(model: &MultiTaskModel, task: Task) -> Result<HeadKind> {
    model
        .head(task)
        .map(|h| h.kind())
        .map_err(|_| NnError::Config(format!("model has no head for task {task}")))
}

/// Train on one corpus, early stopping on `val`.
pub fn train_single_task(model: &mut MultiTaskModel, train: &Corpus, val: &Corpus, cfg: &TrainConfig) -> Result<TrainingLog> {
    train_multi_dataset(model, &[(train, 1.0)], val, cfg)
}

/// Train on several corpora of one task; each step combines one batch per corpus by weight.
pub fn train_multi_dataset(
    model: &mut MultiTaskModel,
    trains: &[(&Corpus, f64)],
    val: &Corpus,
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    let task = val.task();
    if trains.is_empty() {
        return Err(NnError::Config("no training corpora".into()));
    }
    if let Some((c, _)) = trains.iter().find(|(c, _)| c.task() != task) {
        return Err(NnError::Config(format!("{} training corpus mixed with {task} validation", c.task())));
    }
    let kind = check_head(model, task)?;
    if EarlyStoppingMetric::for_head(kind) != cfg.early_stopping_metric {
        return Err(NnError::Config(format!("{:?} cannot monitor a {kind:?} head", cfg.early_stopping_metric)));
    }
    let mut sources = Vec::with_capacity(trains.len());
    for (i, (c, w)) in trains.iter().enumerate() {
        if !(*w >= 0.0 && w.is_finite()) {
            return Err(NnError::Config(format!("loss weight must be non-negative, got {w}")));
        }
        sources.push(Source { name: source_name(c, i), task, examples: model.examples(c, task)?, weight: *w });
    }
    let val = vec![Source { name: source_name(val, 0), task, examples: model.examples(val, task)?, weight: 1.0 }];
    fit(model, sources, val, cfg, Schedule::Joint)
}

/// Train every head of `model` on its own corpora, one task batch per step in turn.
/// Early stopping monitors the weighted mean of the per-task validation losses.
pub fn train_multi_task(
    model: &mut MultiTaskModel,
    task_corpora: &BTreeMap<Task, (Corpus, Corpus)>,
    cfg: &TrainConfig,
    weighting: &LossWeighting,
) -> Result<TrainingLog> {
    let tasks: Vec<Task> = model.tasks().collect();
    if let Some(t) = tasks.iter().find(|t| !task_corpora.contains_key(t)) {
        return Err(NnError::Config(format!("no corpora for task {t}")));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (&task, (tr, va)) in task_corpora {
        check_head(model, task)?;
        let name = task.code().to_string();
        let weight = weighting.weight(&name);
        train.push(Source { name: name.clone(), task, examples: model.examples(tr, task)?, weight });
        val.push(Source { name, task, examples: model.examples(va, task)?, weight });
    }
    fit(model, train, val, cfg, Schedule::RoundRobin)
}

/// Split `corpora` into everything except the dataset named `held_out`, and that dataset.
pub fn leave_one_out<'a>(corpora: &'a [Corpus], held_out: &str) -> Result<(Vec<&'a Corpus>, &'a Corpus)> {
    let held = corpora
        .iter()
        .find(|c| c.dataset() == Some(held_out))
        .ok_or_else(|| NnError::Config(format!("no corpus named '{held_out}'")))?;
    let rest: Vec<&Corpus> = corpora.iter().filter(|c| c.dataset() != Some(held_out)).collect();
    if let Some(c) = rest.iter().find(|c| c.task() != held.task()) {
        return Err(NnError::Config(format!("mixed task types: {} and {}", c.task(), held.task())));
    }
    Ok((rest, held))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weighting_is_the_mean() {
        let w = LossWeighting::uniform();
        assert!((w.combine([("a", 0.2), ("b", 0.4)]).unwrap() - 0.3).abs() < 1e-12);
        assert!((w.combine([("AQ", 0.3), ("AI", 0.6), ("ED", 0.9)]).unwrap() - 0.6).abs() < 1e-9);
        let w = w.with("a", 3.0).unwrap();
        assert!((w.combine([("a", 0.2), ("b", 0.4)]).unwrap() - 0.25).abs() < 1e-12);
        assert!(LossWeighting::uniform().with("a", -1.0).is_err());
        let zero = LossWeighting::uniform().with("a", 0.0).unwrap();
        assert!(zero.combine([("a", 1.0)]).is_err());
    }

    #[test]
    fn presets_validate() {
        for name in TrainConfig::PRESETS {
            TrainConfig::preset(name).unwrap().validate().unwrap();
        }
        let aq = TrainConfig::argument_quality();
        assert_eq!((aq.learning_rate, aq.weight_decay, aq.batch_size, aq.patience), (9.1e-6, 0.35, 64, 5));
        assert_eq!(TrainConfig::zero_shot().eval_frequency, 10);
        assert_eq!(TrainConfig::emotion().batch_size, 32);
        let bad = [
            TrainConfig { learning_rate: 0.0, ..aq.clone() },
            TrainConfig { patience: 0, ..aq.clone() },
            TrainConfig { batch_size: 0, ..aq.clone() },
        ];
        assert!(bad.iter().all(|c| c.validate().is_err()));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = TrainConfig::emotion();
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn cursor_covers_each_example_once_per_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = Cursor::new(10, &mut rng);
        let mut seen: Vec<usize> = Vec::new();
        for _ in 0..batches(10, 4) {
            seen.extend_from_slice(c.next_batch(4, &mut rng));
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
