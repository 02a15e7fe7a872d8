//! Configuration-driven experiment runner: protocols, seed aggregation and result tables.

pub mod config;
pub mod error;
pub mod experiments;
pub mod results;

pub use config::{DatasetRef, EmotionSource, EncoderSpec, ExperimentConfig, ExperimentKind};
pub use error::{Result, RunError};
pub use experiments::{leave_one_out_sizes, load_datasets, run_experiment};
pub use results::{aggregate, aggregate_dir, Cell, ExperimentResult, SeedResult};
