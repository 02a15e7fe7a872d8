//! First-order optimizers over a [`ParamStore`].

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain SGD with weight decay folded into the gradient (L2).
    Sgd,
    /// Adam with decoupled weight decay.
    AdamW,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug)]
struct Moments {
    m: Tensor,
    v: Tensor,
    t: i32,
}

#[derive(Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    moments: BTreeMap<String, Moments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64) -> Self {
        Self { kind, weight_decay, moments: BTreeMap::new() }
    }

    /// Update every parameter that received a gradient. Returns how many were updated.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore, lr: f64) -> Result<usize> {
        let mut updated = 0;
        for (name, var) in params.iter() {
            let Some(g) = grads.get(var.as_tensor()) else { continue };
            let theta = var.as_tensor().detach();
            let next = match self.kind {
                OptimizerKind::Sgd => {
                    let g = (g + (&theta * self.weight_decay)?)?;
                    (&theta - (g * lr)?)?
                }
                OptimizerKind::AdamW => {
                    let st = match self.moments.get_mut(name) {
                        Some(st) => st,
                        None => self
                            .moments
                            .entry(name.clone())
                            .or_insert(Moments { m: theta.zeros_like()?, v: theta.zeros_like()?, t: 0 }),
                    };
                    st.t += 1;
                    st.m = ((&st.m * BETA1)? + (g * (1.0 - BETA1))?)?;
                    st.v = ((&st.v * BETA2)? + (g.sqr()? * (1.0 - BETA2))?)?;
                    let m_hat = (&st.m / (1.0 - BETA1.powi(st.t)))?;
                    let v_hat = (&st.v / (1.0 - BETA2.powi(st.t)))?;
                    let adam = (m_hat / (v_hat.sqrt()? + EPS)?)?;
                    let decayed = (&theta * (1.0 - lr * self.weight_decay))?;
                    (decayed - (adam * lr)?)?
                }
            };
            var.set(&next)?;
            updated += 1;
        }
        Ok(updated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_grads(store: &ParamStore) -> GradStore {
        let w = store.get("w").unwrap();
        w.as_tensor().sqr().unwrap().sum_all().unwrap().backward().unwrap()
    }

    #[test]
    fn sgd_matches_hand_update() {
        let mut store = ParamStore::new(0);
        store.constant("w", &[2], 1.0).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.5);
        let grads = quadratic_grads(&store);
        assert_eq!(opt.step(&store, &grads, 0.1).unwrap(), 1);
        // grad 2 + decay 0.5 → 1 - 0.1 * 2.5
        let w = store.get("w").unwrap().as_tensor().to_vec1::<f64>().unwrap();
        assert!((w[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn adamw_first_step_is_lr_sized() {
        let mut store = ParamStore::new(0);
        store.constant("w", &[3], 2.0).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::AdamW, 0.0);
        let grads = quadratic_grads(&store);
        opt.step(&store, &grads, 0.01).unwrap();
        let w = store.get("w").unwrap().as_tensor().to_vec1::<f64>().unwrap();
        assert!(w.iter().all(|x| (x - 1.99).abs() < 1e-6));
    }

    #[test]
    fn adamw_decay_is_decoupled() {
        let mut store = ParamStore::new(0);
        store.constant("w", &[1], 0.0).unwrap();
        store.constant("u", &[1], 3.0).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::AdamW, 0.1);
        let grads = quadratic_grads(&store);
        assert_eq!(opt.step(&store, &grads, 0.5).unwrap(), 1);
        let u = store.get("u").unwrap().as_tensor().to_vec1::<f64>().unwrap();
        assert_eq!(u, vec![3.0]);
    }
}
