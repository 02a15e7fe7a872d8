//! Topic-disjoint partitions and percentile-based truncation lengths.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Slack for floating-point products such as `10 * 0.7`.
const RATIO_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Config(format!("split ratios must lie in (0, 1): {self:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("split ratios must sum to 1: {self:?}")));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.train.min(self.val).min(self.test)
    }

    /// Generalization experiments: 60/20/20.
    pub const CROSS_CORPUS: SplitRatios = SplitRatios { train: 0.6, val: 0.2, test: 0.2 };
    /// Zero-shot and multi-task experiments: 70/10/20.
    pub const ZERO_SHOT: SplitRatios = SplitRatios { train: 0.7, val: 0.1, test: 0.2 };
    /// Annotated emotion arguments: 60/10/30.
    pub const EMOTION: SplitRatios = SplitRatios { train: 0.6, val: 0.1, test: 0.3 };

    /// Topic (or item) counts per split: floor for validation and test, the rest to train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let val = (n as f64 * self.val + RATIO_EPS).floor() as usize;
        let test = (n as f64 * self.test + RATIO_EPS).floor() as usize;
        (n - val - test, val, test)
    }
}

/// A cross-topic train/validation/test partition for one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_index: usize,
    pub train_topics: BTreeSet<String>,
    pub val_topics: BTreeSet<String>,
    pub test_topics: BTreeSet<String>,
    pub ratios: SplitRatios,
}

impl FoldPlan {
    /// Pairwise disjointness of the three topic sets.
    pub fn is_disjoint(&self) -> bool {
        self.train_topics.is_disjoint(&self.val_topics)
            && self.train_topics.is_disjoint(&self.test_topics)
            && self.val_topics.is_disjoint(&self.test_topics)
    }

    pub fn all_topics(&self) -> BTreeSet<String> {
        self.train_topics
            .iter()
            .chain(&self.val_topics)
            .chain(&self.test_topics)
            .cloned()
            .collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Save several plans as one JSON array.
pub fn save_plans(plans: &[FoldPlan], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(plans)?)?;
    Ok(())
}

pub fn load_plans(path: &Path) -> Result<Vec<FoldPlan>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn fold_rng(seed: u64, fold: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// `n_folds` independently shuffled topic partitions of `corpus`.
///
/// Each fold shuffles the sorted topic inventory with its own seed stream and cuts it into
/// test, validation and train blocks sized by [`SplitRatios::counts`].
pub fn make_cross_topic_folds(
    corpus: &Corpus,
    n_folds: usize,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<FoldPlan>> {
    ratios.validate()?;
    if n_folds == 0 {
        return Err(Error::Config("n_folds must be at least 1".into()));
    }
    let topics: Vec<String> = corpus.topics().iter().cloned().collect();
    let n = topics.len();
    if (n as f64) * ratios.min() + RATIO_EPS < 1.0 {
        return Err(Error::Config(format!(
            "{n} topics are too few for ratios {}/{}/{}; need at least {}",
            ratios.train,
            ratios.val,
            ratios.test,
            (1.0 / ratios.min() - RATIO_EPS).ceil()
        )));
    }
    let (_, n_val, n_test) = ratios.counts(n);
    Ok((0..n_folds)
        .map(|fold_index| {
            let mut shuffled = topics.clone();
            shuffled.shuffle(&mut fold_rng(seed, fold_index));
            let test_topics = shuffled[..n_test].iter().cloned().collect();
            let val_topics = shuffled[n_test..n_test + n_val].iter().cloned().collect();
            let train_topics = shuffled[n_test + n_val..].iter().cloned().collect();
            FoldPlan { fold_index, train_topics, val_topics, test_topics, ratios }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SplitCorpora {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
    pub warnings: Vec<String>,
}

impl SplitCorpora {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Route every sentence to the split that owns its topic.
pub fn assign_split(corpus: &Corpus, plan: &FoldPlan) -> Result<SplitCorpora> {
    if !plan.is_disjoint() {
        return Err(Error::Config(format!("fold {} has overlapping topic sets", plan.fold_index)));
    }
    if let Some(t) = plan.all_topics().iter().find(|t| !corpus.topics().contains(*t)) {
        return Err(Error::Routing(format!("plan topic '{t}' does not occur in the corpus")));
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, r) in corpus.records().iter().enumerate() {
        if plan.train_topics.contains(&r.topic) {
            train.push(i);
        } else if plan.val_topics.contains(&r.topic) {
            val.push(i);
        } else if plan.test_topics.contains(&r.topic) {
            test.push(i);
        } else {
            return Err(Error::Routing(format!(
                "record '{}' has topic '{}' which fold {} does not assign",
                r.id, r.topic, plan.fold_index
            )));
        }
    }
    let mut warnings = Vec::new();
    for (name, idx) in [("train", &train), ("validation", &val), ("test", &test)] {
        if idx.is_empty() {
            let msg = format!("fold {}: {name} split is empty", plan.fold_index);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(SplitCorpora {
        train: corpus.select(&train),
        val: corpus.select(&val),
        test: corpus.select(&test),
        warnings,
    })
}

/// Sentence-level random split, for corpora without a usable topic inventory.
pub fn split_sentences(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<SplitCorpora> {
    ratios.validate()?;
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (_, n_val, n_test) = ratios.counts(idx.len());
    let mut test = idx[..n_test].to_vec();
    let mut val = idx[n_test..n_test + n_val].to_vec();
    let mut train = idx[n_test + n_val..].to_vec();
    for part in [&mut train, &mut val, &mut test] {
        part.sort_unstable();
    }
    Ok(SplitCorpora {
        train: corpus.select(&train),
        val: corpus.select(&val),
        test: corpus.select(&test),
        warnings: Vec::new(),
    })
}

/// Maximum input length derived from a percentile of observed lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRule {
    pub percentile: f64,
    pub max_length: usize,
}

/// Nearest-rank percentile: the value at rank ⌈p/100 · n⌉ of the sorted lengths, at least 1.
pub fn compute_truncation_length(lengths: &[usize], percentile: f64) -> Result<TruncationRule> {
    if lengths.is_empty() {
        return Err(Error::Input("no lengths to take a percentile of".into()));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::Input(format!("percentile {percentile} outside (0, 100]")));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let rank = ((percentile * n as f64 / 100.0) - RATIO_EPS).ceil().max(1.0) as usize;
    let max_length = sorted[rank.min(n) - 1].max(1);
    Ok(TruncationRule { percentile, max_length })
}
