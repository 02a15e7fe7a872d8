//! Per-seed result cells, their aggregation, and the CSV tables built from them.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use argqual_core::metrics::aggregate_seeds;
use argqual_core::Task;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentKind;
use crate::error::{Result, RunError};

/// One measured value of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub train_source: String,
    pub eval_target: String,
    pub task: Task,
    pub metric: String,
    pub value: f64,
}

impl Cell {
    pub fn new(train_source: impl Into<String>, eval_target: impl Into<String>, task: Task, metric: &str, value: f64) -> Self {
        Self { train_source: train_source.into(), eval_target: eval_target.into(), task, metric: metric.into(), value }
    }

    fn key(&self) -> (String, String, Task, String) {
        (self.train_source.clone(), self.eval_target.clone(), self.task, self.metric.clone())
    }
}

/// Everything one seed produced, as persisted in `seed-<n>/cells.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub cells: Vec<Cell>,
}

impl SeedResult {
    pub const FILE: &'static str = "cells.json";

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(Self::FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(Self::FILE))?)?)
    }
}

/// One cell aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub train_source: String,
    pub eval_target: String,
    pub task: Task,
    pub metric: String,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
    /// Only one seed: `std` is a placeholder 0.
    pub single_seed: bool,
    pub config_hash: String,
}

/// Aggregate per-seed results cell by cell, keeping the first seed's cell order.
pub fn aggregate(per_seed: &[SeedResult]) -> Result<Vec<ExperimentResult>> {
    let first = per_seed.first().ok_or_else(|| RunError::Config("no seed results to aggregate".into()))?;
    let mut order = Vec::new();
    let mut values: BTreeMap<(String, String, Task, String), Vec<(u64, f64)>> = BTreeMap::new();
    for (i, r) in per_seed.iter().enumerate() {
        if r.config_hash != first.config_hash || r.kind != first.kind {
            return Err(RunError::Config(format!("seed {} comes from a different experiment", r.seed)));
        }
        for c in &r.cells {
            let entry = values.entry(c.key()).or_default();
            if entry.iter().any(|(s, _)| *s == r.seed) {
                return Err(RunError::Config(format!("seed {} reports {:?} twice", r.seed, c.key())));
            }
            if entry.is_empty() {
                if i > 0 {
                    return Err(RunError::Config(format!("cell {:?} is missing from seed {}", c.key(), first.seed)));
                }
                order.push(c.key());
            }
            entry.push((r.seed, c.value));
        }
    }
    order
        .into_iter()
        .map(|key| {
            let pairs = &values[&key];
            if pairs.len() != per_seed.len() {
                return Err(RunError::Config(format!("cell {key:?} is missing from some seeds")));
            }
            let vals: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let agg = aggregate_seeds(&vals)?;
            let (train_source, eval_target, task, metric) = key;
            Ok(ExperimentResult {
                kind: first.kind,
                train_source,
                eval_target,
                task,
                metric,
                seeds: pairs.iter().map(|p| p.0).collect(),
                values: vals,
                mean: agg.mean,
                std: agg.std,
                single_seed: agg.single_value,
                config_hash: first.config_hash.clone(),
            })
        })
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_results_csv<W: Write>(rows: &[ExperimentResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "kind", "train_source", "eval_target", "task", "metric", "n_seeds", "mean", "std", "std_estimator",
        "single_seed", "seeds", "values", "config_hash",
    ])?;
    for r in rows {
        w.write_record([
            r.kind.as_str(),
            &r.train_source,
            &r.eval_target,
            r.task.code(),
            &r.metric,
            &r.values.len().to_string(),
            &r.mean.to_string(),
            &r.std.to_string(),
            "sample",
            &r.single_seed.to_string(),
            &join(&r.seeds),
            &join(&r.values),
            &r.config_hash,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cells reported alongside the headline metric that stay out of `matrix.csv`.
pub const AUXILIARY_METRICS: [&str; 2] = ["threshold", "sentences"];

/// Train-source rows × eval-target columns of means, when every pair holds a single headline metric.
pub fn write_matrix_csv<W: Write>(rows: &[ExperimentResult], writer: W) -> Result<bool> {
    let mut sources: Vec<&str> = Vec::new();
    let mut targets: Vec<&str> = Vec::new();
    let mut grid: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| !AUXILIARY_METRICS.contains(&r.metric.as_str())) {
        if grid.insert((&r.train_source, &r.eval_target), r.mean).is_some() {
            return Ok(false);
        }
        if !sources.contains(&r.train_source.as_str()) {
            sources.push(&r.train_source);
        }
        if !targets.contains(&r.eval_target.as_str()) {
            targets.push(&r.eval_target);
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once("train").chain(targets.iter().copied()))?;
    for s in &sources {
        let mut rec = vec![s.to_string()];
        rec.extend(targets.iter().map(|t| grid.get(&(*s, *t)).map(f64::to_string).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(true)
}

pub fn seed_dir(experiment_dir: &Path, seed: u64) -> PathBuf {
    experiment_dir.join(format!("seed-{seed}"))
}

/// Re-read every `seed-*/cells.json` under an experiment directory, in seed order.
pub fn load_seed_results(experiment_dir: &Path) -> Result<Vec<SeedResult>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(experiment_dir)? {
        let path = entry?.path();
        let is_seed = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed-"));
        if is_seed && path.join(SeedResult::FILE).exists() {
            out.push(SeedResult::load(&path)?);
        }
    }
    out.sort_by_key(|r| r.seed);
    if out.is_empty() {
        return Err(RunError::Config(format!("no per-seed results under {}", experiment_dir.display())));
    }
    Ok(out)
}

/// Recompute and rewrite `results.csv` (and `matrix.csv` where it applies) from per-seed files.
pub fn aggregate_dir(experiment_dir: &Path) -> Result<Vec<ExperimentResult>> {
    let rows = aggregate(&load_seed_results(experiment_dir)?)?;
    write_results_csv(&rows, std::fs::File::create(experiment_dir.join("results.csv"))?)?;
    let mut matrix = Vec::new();
    if write_matrix_csv(&rows, &mut matrix)? {
        std::fs::write(experiment_dir.join("matrix.csv"), matrix)?;
    }
    Ok(rows)
}
