//! Data, evaluation and analysis layer for argument-quality experiments.
//!
//! Everything in this crate is model-agnostic: corpora are ingested into a
//! canonical line-delimited JSON schema, partitioned by topic, scored with the
//! metrics in [`metrics`], and models are consumed through the
//! [`transfer::TaskPredictor`] trait.

pub mod analysis;
pub mod baselines;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod special;
pub mod splitting;
pub mod text;
pub mod transfer;

pub use corpus::{ArgClass, Corpus, DatasetManifest, EmotionLabel, Label, LabeledSentence, Task};
pub use error::{Error, Result};
pub use transfer::{TaskHeadOutput, TaskPredictor};
