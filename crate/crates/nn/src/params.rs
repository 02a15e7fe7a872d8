//! Named trainable parameters with seeded initialization and safetensors checkpoints.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NnError, Result};

/// Parameter name → variable. Names follow the BERT checkpoint layout for encoder weights.
#[derive(Debug)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    device: Device,
}

/// Deep copies of parameter values, for best-checkpoint bookkeeping.
#[derive(Debug, Clone)]
pub struct Snapshot(BTreeMap<String, Tensor>);

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self { vars: BTreeMap::new(), rng: ChaCha8Rng::seed_from_u64(seed), device: Device::Cpu }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, t: Tensor) -> Result<Var> {
        if self.vars.contains_key(name) {
            return Err(NnError::Config(format!("parameter '{name}' registered twice")));
        }
        let v = Var::from_tensor(&t)?;
        self.vars.insert(name.to_string(), v.clone());
        Ok(v)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Var> {
        let dist = Normal::new(0.0, std).map_err(|e| NnError::Config(e.to_string()))?;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        let t = Tensor::from_vec(data, shape, &self.device)?;
        self.insert(name, t)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let t = (Tensor::ones(shape, DType::F64, &self.device)? * value)?;
        self.insert(name, t)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        Ok(Snapshot(
            self.vars.iter().map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?))).collect::<Result<_>>()?,
        ))
    }

    pub fn restore(&self, snap: &Snapshot) -> Result<()> {
        for (k, v) in &self.vars {
            let t = snap.0.get(k).ok_or_else(|| NnError::Checkpoint(format!("snapshot lacks '{k}'")))?;
            v.set(t)?;
        }
        Ok(())
    }

    /// Overwrite parameters from `tensors`, checking names and shapes.
    /// Every registered parameter must be present; extra tensors are ignored.
    pub fn assign(&self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        for (k, v) in &self.vars {
            let t = tensors.get(k).ok_or_else(|| NnError::Checkpoint(format!("missing tensor '{k}'")))?;
            if t.dims() != v.dims() {
                return Err(NnError::Shape(format!("'{k}': checkpoint {:?} vs model {:?}", t.dims(), v.dims())));
            }
            v.set(&t.to_dtype(DType::F64)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, metadata: HashMap<String, String>) -> Result<()> {
        let tensors: Vec<(&str, &Tensor)> = self.vars.iter().map(|(k, v)| (k.as_str(), v.as_tensor())).collect();
        safetensors::serialize_to_file(tensors, Some(metadata), path)?;
        Ok(())
    }
}

/// Tensors and the metadata block of a safetensors file.
pub fn read_checkpoint(path: &Path, device: &Device) -> Result<(HashMap<String, Tensor>, HashMap<String, String>)> {
    let bytes = std::fs::read(path)?;
    let (_, meta) = safetensors::SafeTensors::read_metadata(&bytes)?;
    let metadata = meta.metadata().clone().unwrap_or_default();
    let tensors = candle_core::safetensors::load_buffer(&bytes, device)?;
    Ok((tensors, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let mut a = ParamStore::new(5);
        let mut b = ParamStore::new(5);
        let va = a.normal("w", &[3, 4], 0.02).unwrap();
        let vb = b.normal("w", &[3, 4], 0.02).unwrap();
        assert_eq!(va.flatten_all().unwrap().to_vec1::<f64>().unwrap(), vb.flatten_all().unwrap().to_vec1::<f64>().unwrap());
        assert!(a.normal("w", &[1], 1.0).is_err());
    }

    #[test]
    fn snapshot_restore_and_checkpoint() {
        let mut s = ParamStore::new(1);
        let w = s.normal("w", &[2, 2], 1.0).unwrap();
        s.constant("b", &[2], 0.0).unwrap();
        let before = w.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let snap = s.snapshot().unwrap();
        w.set(&Tensor::zeros((2, 2), DType::F64, &Device::Cpu).unwrap()).unwrap();
        s.restore(&snap).unwrap();
        assert_eq!(w.flatten_all().unwrap().to_vec1::<f64>().unwrap(), before);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.safetensors");
        s.save(&path, [("hidden_size".to_string(), "8".to_string())].into()).unwrap();
        let (tensors, meta) = read_checkpoint(&path, &Device::Cpu).unwrap();
        assert_eq!(meta["hidden_size"], "8");
        w.set(&Tensor::zeros((2, 2), DType::F64, &Device::Cpu).unwrap()).unwrap();
        s.assign(&tensors).unwrap();
        assert_eq!(w.flatten_all().unwrap().to_vec1::<f64>().unwrap(), before);

        let mut wrong = tensors.clone();
        wrong.insert("b".into(), Tensor::zeros(3, DType::F64, &Device::Cpu).unwrap());
        assert!(matches!(s.assign(&wrong), Err(NnError::Shape(_))));
    }
}
