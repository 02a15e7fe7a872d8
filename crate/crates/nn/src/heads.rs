//! Task heads on top of the pair embedding.

use argqual_core::Task;
use candle_core::{Device, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::ops::{dropout, linear, log_softmax_last, sigmoid, softmax_last};
use crate::params::ParamStore;

/// Width of the regression MLP's hidden layer.
pub const REGRESSION_HIDDEN: usize = 100;
/// Keeps sigmoid outputs strictly inside (0, 1) in floating point.
const PROB_FLOOR: f64 = 1e-12;

fn expect_dims(name: &str, t: &Tensor, dims: &[usize]) -> Result<()> {
    if t.dims() != dims {
        return Err(NnError::Shape(format!("{name}: expected {dims:?}, got {:?}", t.dims())));
    }
    Ok(())
}

fn embedding_tensor(embedding: &[f64], input_dim: usize) -> Result<Tensor> {
    if embedding.len() != input_dim {
        return Err(NnError::Shape(format!("embedding of length {} for a head expecting {input_dim}", embedding.len())));
    }
    Ok(Tensor::from_vec(embedding.to_vec(), (1, input_dim), &Device::Cpu)?)
}

/// dropout → linear(in, 100) → ReLU → dropout → linear(100, 1) → sigmoid.
#[derive(Debug, Clone)]
pub struct RegressionHead {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    dropout: f64,
}

impl RegressionHead {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, dropout: f64) -> Result<Self> {
        Ok(Self {
            w1: store.normal(&format!("{prefix}.hidden.weight"), &[REGRESSION_HIDDEN, input_dim], 0.02)?,
            b1: store.constant(&format!("{prefix}.hidden.bias"), &[REGRESSION_HIDDEN], 0.0)?,
            w2: store.normal(&format!("{prefix}.out.weight"), &[1, REGRESSION_HIDDEN], 0.02)?,
            b2: store.constant(&format!("{prefix}.out.bias"), &[1], 0.0)?,
            dropout,
        })
    }

    /// Head from explicit weights, shaped (out, in) as stored.
    pub fn from_tensors(w1: &Tensor, b1: &Tensor, w2: &Tensor, b2: &Tensor, dropout: f64) -> Result<Self> {
        let input_dim = w1.dims().get(1).copied().unwrap_or(0);
        expect_dims("hidden weight", w1, &[REGRESSION_HIDDEN, input_dim])?;
        expect_dims("hidden bias", b1, &[REGRESSION_HIDDEN])?;
        expect_dims("output weight", w2, &[1, REGRESSION_HIDDEN])?;
        expect_dims("output bias", b2, &[1])?;
        Ok(Self {
            w1: Var::from_tensor(w1)?,
            b1: Var::from_tensor(b1)?,
            w2: Var::from_tensor(w2)?,
            b2: Var::from_tensor(b2)?,
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.dims()[1]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.input_dim(), REGRESSION_HIDDEN, 1]
    }

    /// Pre-sigmoid output, shape (B,).
    pub fn logits(&self, emb: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let x = dropout(emb, self.dropout, rng.as_deref_mut())?;
        let h = linear(&x, &self.w1, &self.b1)?.relu()?;
        let h = dropout(&h, self.dropout, rng.as_deref_mut())?;
        Ok(linear(&h, &self.w2, &self.b2)?.squeeze(1)?)
    }

    pub fn forward(&self, emb: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        Ok(sigmoid(&self.logits(emb, rng)?)?.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)?)
    }

    /// Score of one embedding in inference mode.
    pub fn score(&self, embedding: &[f64]) -> Result<f64> {
        let x = embedding_tensor(embedding, self.input_dim())?;
        Ok(self.forward(&x, None)?.to_vec1::<f64>()?[0])
    }

    pub fn vars(&self) -> [&Var; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}

/// dropout → linear(in, 2) → softmax over (positive, negative).
#[derive(Debug, Clone)]
pub struct ClassificationHead {
    w: Var,
    b: Var,
    dropout: f64,
}

impl ClassificationHead {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, dropout: f64) -> Result<Self> {
        Ok(Self {
            w: store.normal(&format!("{prefix}.out.weight"), &[2, input_dim], 0.02)?,
            b: store.constant(&format!("{prefix}.out.bias"), &[2], 0.0)?,
            dropout,
        })
    }

    pub fn from_tensors(w: &Tensor, b: &Tensor, dropout: f64) -> Result<Self> {
        let input_dim = w.dims().get(1).copied().unwrap_or(0);
        expect_dims("class weight", w, &[2, input_dim])?;
        expect_dims("class bias", b, &[2])?;
        Ok(Self { w: Var::from_tensor(w)?, b: Var::from_tensor(b)?, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.w.dims()[1]
    }

    pub fn logits(&self, emb: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        linear(&dropout(emb, self.dropout, rng)?, &self.w, &self.b)
    }

    /// Probabilities, shape (B, 2).
    pub fn forward(&self, emb: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        softmax_last(&self.logits(emb, rng)?)
    }

    pub fn probs(&self, embedding: &[f64]) -> Result<[f64; 2]> {
        let x = embedding_tensor(embedding, self.input_dim())?;
        let p = self.forward(&x, None)?.squeeze(0)?.to_vec1::<f64>()?;
        Ok([p[0], p[1]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Regression,
    Classification,
}

impl HeadKind {
    pub fn for_task(task: Task) -> Self {
        if task.is_regression() {
            HeadKind::Regression
        } else {
            HeadKind::Classification
        }
    }
}

#[derive(Debug, Clone)]
pub enum Head {
    Regression(RegressionHead),
    Classification(ClassificationHead),
}

impl Head {
    pub fn for_task(task: Task, store: &mut ParamStore, input_dim: usize, dropout: f64) -> Result<Self> {
        let prefix = format!("heads.{}", task.code());
        Ok(match HeadKind::for_task(task) {
            HeadKind::Regression => Head::Regression(RegressionHead::new(store, &prefix, input_dim, dropout)?),
            HeadKind::Classification => {
                Head::Classification(ClassificationHead::new(store, &prefix, input_dim, dropout)?)
            }
        })
    }

    pub fn set_dropout(&mut self, p: f64) {
        match self {
            Head::Regression(h) => h.dropout = p,
            Head::Classification(h) => h.dropout = p,
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Regression(_) => HeadKind::Regression,
            Head::Classification(_) => HeadKind::Classification,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Head::Regression(h) => h.input_dim(),
            Head::Classification(h) => h.input_dim(),
        }
    }

    /// Outputs: scores (B,) for regression, probabilities (B, 2) for classification.
    pub fn forward(&self, emb: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        match self {
            Head::Regression(h) => h.forward(emb, rng),
            Head::Classification(h) => h.forward(emb, rng),
        }
    }

    /// Training loss against `targets`: mean squared error on scores, or mean cross-entropy
    /// with class index 0 = positive.
    pub fn loss(&self, emb: &Tensor, targets: &Targets, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        match (self, targets) {
            (Head::Regression(h), Targets::Scores(y)) => {
                let y = Tensor::from_vec(y.clone(), y.len(), emb.device())?;
                Ok(h.forward(emb, rng)?.sub(&y)?.sqr()?.mean_all()?)
            }
            (Head::Classification(h), Targets::Classes(c)) => {
                let logp = log_softmax_last(&h.logits(emb, rng)?)?;
                let onehot: Vec<f64> = c.iter().flat_map(|&k| if k == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
                let onehot = Tensor::from_vec(onehot, (c.len(), 2), emb.device())?;
                Ok(logp.mul(&onehot)?.sum(1)?.mean_all()?.neg()?)
            }
            _ => Err(NnError::Config("head kind does not match the target kind".into())),
        }
    }
}

/// Batch targets in head-native form.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Scores(Vec<f64>),
    /// 0 = positive class, 1 = negative class.
    Classes(Vec<u32>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Scores(v) => v.len(),
            Targets::Classes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
