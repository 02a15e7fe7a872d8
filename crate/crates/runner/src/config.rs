//! Declarative experiment configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use argqual_core::corpus::LabelKind;
use argqual_core::metrics::PValueAdjustment;
use argqual_core::{DatasetManifest, Task};
use argqual_nn::{EncoderConfig, Pooling, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RunError};

/// Directory that relative pretrained-encoder paths are resolved against.
pub const CACHE_DIR_ENV: &str = "ARGQUAL_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CrossCorpus,
    LeaveOneOut,
    ZeroShot,
    MultiTask,
    EmotionDetect,
    EmotionAnalysis,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CrossCorpus => "cross_corpus",
            Self::LeaveOneOut => "leave_one_out",
            Self::ZeroShot => "zero_shot",
            Self::MultiTask => "multi_task",
            Self::EmotionDetect => "emotion_detect",
            Self::EmotionAnalysis => "emotion_analysis",
        }
    }

    pub fn default_preset(self) -> &'static str {
        match self {
            Self::CrossCorpus | Self::LeaveOneOut => "argument_quality",
            Self::ZeroShot | Self::MultiTask => "zero_shot",
            Self::EmotionDetect | Self::EmotionAnalysis => "emotion",
        }
    }

    /// Percentile of validation lengths used as the truncation length.
    pub fn default_truncation_percentile(self) -> f64 {
        match self {
            Self::CrossCorpus | Self::LeaveOneOut => 95.0,
            Self::ZeroShot | Self::MultiTask => 99.0,
            Self::EmotionDetect | Self::EmotionAnalysis => 99.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    /// Built-in manifest name, unless `manifest` points at a manifest file.
    pub name: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Source label schema of a raw emotion file; its labels are unified to the binary set on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    /// General-domain emotion corpus, as opposed to the annotated argument corpus.
    #[serde(default)]
    pub general: bool,
}

impl DatasetRef {
    pub fn manifest(&self) -> Result<DatasetManifest> {
        match &self.manifest {
            Some(p) => Ok(DatasetManifest::from_file(p)?),
            None => DatasetManifest::builtin(&self.name)
                .ok_or_else(|| RunError::Config(format!("no built-in manifest named '{}'; give a manifest path", self.name))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    /// Randomly initialized small transformer with a hashing tokenizer.
    Tiny {
        #[serde(default = "EncoderConfig::tiny")]
        config: EncoderConfig,
    },
    /// BERT weights in a Hugging Face model directory.
    Pretrained {
        path: PathBuf,
        #[serde(default = "default_true")]
        lowercase: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Tiny { config: EncoderConfig::tiny() }
    }
}

/// Where emotion labels come from in an analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmotionSource {
    Checkpoint { path: PathBuf },
    Pronoun,
    Lexicon { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub datasets: Vec<DatasetRef>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Named training preset; ignored when `train` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_percentile: Option<f64>,
    /// Cross-topic folds for the argument-quality protocols.
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Seed of the data splits; model seeds come from `seeds`.
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub strict_manifests: bool,
    /// Task sets trained jointly in a multi-task run; defaults to all configured tasks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub task_combinations: Vec<Vec<Task>>,
    /// Emotion lexicon for the lexicon baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion_source: Option<EmotionSource>,
    #[serde(default)]
    pub adjustment: PValueAdjustment,
}

fn default_folds() -> usize {
    1
}

impl ExperimentConfig {
    /// Parse a JSON config; relative paths inside it are taken relative to its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            fix(&mut d.path);
            if let Some(m) = &mut d.manifest {
                fix(m);
            }
        }
        fix(&mut self.out_dir);
        if let Some(l) = &mut self.lexicon {
            fix(l);
        }
        match &mut self.emotion_source {
            Some(EmotionSource::Checkpoint { path } | EmotionSource::Lexicon { path }) => fix(path),
            _ => {}
        }
        if let EncoderSpec::Pretrained { path, .. } = &mut self.encoder {
            let cached = std::env::var_os(CACHE_DIR_ENV).map(|d| PathBuf::from(d).join(&*path));
            match cached {
                Some(c) if path.is_relative() && c.exists() => *path = c,
                _ => fix(path),
            }
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = match &self.train {
            Some(t) => t.clone(),
            None => {
                let name = self.preset.as_deref().unwrap_or(self.kind.default_preset());
                TrainConfig::preset(name).ok_or_else(|| {
                    RunError::Config(format!("unknown preset '{name}' (known: {})", TrainConfig::PRESETS.join(", ")))
                })?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn truncation_percentile(&self) -> f64 {
        self.truncation_percentile.unwrap_or(self.kind.default_truncation_percentile())
    }

    /// Tasks of the configured datasets, resolved through their manifests.
    pub fn dataset_tasks(&self) -> Result<Vec<Task>> {
        self.datasets.iter().map(|d| Ok(d.manifest()?.task)).collect()
    }

    pub fn combinations(&self) -> Result<Vec<Vec<Task>>> {
        if !self.task_combinations.is_empty() {
            return Ok(self.task_combinations.clone());
        }
        Ok(vec![self.dataset_tasks()?])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.datasets.is_empty() {
            return bad("no datasets configured".into());
        }
        if self.folds == 0 {
            return bad("folds must be at least 1".into());
        }
        let p = self.truncation_percentile();
        if !(p > 0.0 && p <= 100.0) {
            return bad(format!("truncation percentile {p} outside (0, 100]"));
        }
        self.train_config()?;
        let names: BTreeSet<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        if names.len() != self.datasets.len() {
            return bad("dataset names must be distinct".into());
        }
        let tasks = self.dataset_tasks()?;
        let count = |t: Task| tasks.iter().filter(|&&x| x == t).count();
        match self.kind {
            ExperimentKind::CrossCorpus | ExperimentKind::LeaveOneOut => {
                if let Some(t) = tasks.iter().find(|&&t| t != Task::ArgumentQuality) {
                    return bad(format!("{} takes quality corpora only, got a {t} corpus", self.kind.as_str()));
                }
                if self.kind == ExperimentKind::LeaveOneOut && tasks.len() < 2 {
                    return bad("leave_one_out needs at least two corpora".into());
                }
            }
            ExperimentKind::ZeroShot | ExperimentKind::MultiTask => {
                for t in &tasks {
                    if t.label_kind() == LabelKind::Emotion {
                        return bad(format!("{} does not take emotion corpora", self.kind.as_str()));
                    }
                    if count(*t) > 1 {
                        return bad(format!("one corpus per task, got {} for {t}", count(*t)));
                    }
                }
                for combo in &self.task_combinations {
                    if combo.is_empty() {
                        return bad("empty task combination".into());
                    }
                    if let Some(t) = combo.iter().find(|t| !tasks.contains(t)) {
                        return bad(format!("task combination uses {t} but no {t} corpus is configured"));
                    }
                }
            }
            ExperimentKind::EmotionDetect => {
                if tasks.iter().any(|&t| t != Task::EmotionBinary) {
                    return bad("emotion_detect takes emotion corpora only".into());
                }
                let targets = self.datasets.iter().filter(|d| !d.general).count();
                if targets != 1 {
                    return bad(format!("emotion_detect needs exactly one non-general target corpus, got {targets}"));
                }
            }
            ExperimentKind::EmotionAnalysis => {
                if tasks.iter().any(|&t| t != Task::ArgumentQuality) {
                    return bad("emotion_analysis takes quality corpora only".into());
                }
                if self.emotion_source.is_none() {
                    return bad("emotion_analysis needs an emotion_source".into());
                }
            }
        }
        Ok(())
    }

    /// Content hash of everything that determines per-seed results.
    pub fn content_hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("train");
            obj.remove("preset");
            obj.remove("seeds");
            obj.remove("out_dir");
            obj.insert("train_resolved".into(), serde_json::to_value(self.train_config()?)?);
        }
        let digest = Sha256::digest(serde_json::to_vec(&value)?);
        Ok(hex::encode(&digest[..8]))
    }

    pub fn experiment_dir(&self) -> Result<PathBuf> {
        Ok(self.out_dir.join(format!("{}-{}", self.kind.as_str(), self.content_hash()?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: &str, datasets: &str) -> ExperimentConfig {
        serde_json::from_str(&format!(r#"{{"kind":"{kind}","datasets":{datasets},"seeds":[0],"out_dir":"runs"}}"#)).unwrap()
    }

    #[test]
    fn kind_checks() {
        let aq = r#"[{"name":"SwanRank","path":"a.jsonl"},{"name":"IBM-ArgQ","path":"b.jsonl"}]"#;
        minimal("leave_one_out", aq).validate().unwrap();
        let one = r#"[{"name":"SwanRank","path":"a.jsonl"}]"#;
        assert!(minimal("leave_one_out", one).validate().unwrap_err().is_config());
        let mixed = r#"[{"name":"SwanRank","path":"a.jsonl"},{"name":"UKP-Sentential","path":"b.jsonl"}]"#;
        assert!(minimal("cross_corpus", mixed).validate().is_err());
        minimal("zero_shot", mixed).validate().unwrap();
        let unknown = r#"[{"name":"nope","path":"a.jsonl"}]"#;
        assert!(minimal("cross_corpus", unknown).validate().unwrap_err().is_config());
        let mut c = minimal("cross_corpus", one);
        c.seeds.clear();
        assert!(c.validate().is_err());
        c.seeds = vec![1];
        c.preset = Some("nope".into());
        assert!(c.validate().is_err());
        assert!(minimal("emotion_analysis", one).validate().is_err());
    }

    #[test]
    fn hash_ignores_seeds_and_output_location() {
        let one = r#"[{"name":"SwanRank","path":"a.jsonl"}]"#;
        let a = minimal("cross_corpus", one);
        let mut b = a.clone();
        b.seeds = vec![4, 5];
        b.out_dir = "elsewhere".into();
        assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
        b.split_seed = 9;
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
        let mut c = a.clone();
        c.train = Some(TrainConfig::argument_quality());
        assert_eq!(a.content_hash().unwrap(), c.content_hash().unwrap());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"kind":"cross_corpus","datasets":[{"name":"SwanRank","path":"data/a.jsonl"}],"seeds":[0],"out_dir":"runs"}"#)
            .unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg.datasets[0].path, dir.path().join("data/a.jsonl"));
        assert_eq!(cfg.out_dir, dir.path().join("runs"));
    }
}
