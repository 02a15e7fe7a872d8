//! Pair encoder, task heads and training loops for argument-quality models.
//!
//! Tensors are f64 on the CPU throughout so that small models are exactly reproducible.

pub mod encoder;
pub mod error;
pub mod heads;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tokenizer;
pub mod training;

pub use encoder::{encode_pair, encode_pair_input, EncoderBackend, EncoderConfig, PairInput, Pooling, TransformerEncoder};
pub use error::{NnError, Result};
pub use heads::{ClassificationHead, Head, HeadKind, RegressionHead};
pub use model::{ModelOptions, MultiTaskModel};
pub use optim::OptimizerKind;
pub use training::{
    leave_one_out, train_multi_dataset, train_multi_task, train_single_task, EarlyStoppingMetric, LossWeighting,
    TrainConfig, TrainingLog,
};
