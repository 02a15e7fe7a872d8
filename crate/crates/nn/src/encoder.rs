//! BERT-style post-LN transformer encoder and (argument, topic) pair encoding.

use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::ops::{dropout, layer_norm, linear, softmax_last};
use crate::params::{read_checkpoint, ParamStore};
use crate::tokenizer::{HashingTokenizer, Tokenizer, WordPieceTokenizer};

/// Number of final layers whose pooled states form the pair embedding.
pub const POOLED_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
    pub type_vocab_size: usize,
    pub layer_norm_eps: f64,
    pub hidden_dropout: f64,
    pub attention_dropout: f64,
}

impl EncoderConfig {
    /// Small randomly initialized encoder for tests and desk-scale runs.
    pub fn tiny() -> Self {
        Self {
            vocab_size: 512,
            hidden_size: 32,
            n_layers: 4,
            n_heads: 4,
            intermediate_size: 64,
            max_positions: 128,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            hidden_dropout: 0.1,
            attention_dropout: 0.1,
        }
    }

    /// Shape of a base-size pretrained encoder.
    pub fn bert_base() -> Self {
        Self {
            vocab_size: 30_522,
            hidden_size: 768,
            n_layers: 12,
            n_heads: 12,
            intermediate_size: 3_072,
            max_positions: 512,
            ..Self::tiny()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.n_heads == 0 || self.hidden_size % self.n_heads != 0 {
            return Err(NnError::Config(format!(
                "hidden size {} must be a positive multiple of the head count {}",
                self.hidden_size, self.n_heads
            )));
        }
        if self.n_layers < POOLED_LAYERS {
            return Err(NnError::Config(format!(
                "encoder needs at least {POOLED_LAYERS} layers to pool, has {}",
                self.n_layers
            )));
        }
        if self.vocab_size == 0 || self.intermediate_size == 0 || self.max_positions < 2 || self.type_vocab_size < 2 {
            return Err(NnError::Config(format!("degenerate encoder dimensions: {self:?}")));
        }
        for p in [self.hidden_dropout, self.attention_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(NnError::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Length of the pair embedding: the last four layers concatenated.
    pub fn pair_embedding_dim(&self) -> usize {
        POOLED_LAYERS * self.hidden_size
    }

    /// Read a Hugging Face BERT `config.json`.
    pub fn from_hf_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Hf {
            vocab_size: usize,
            hidden_size: usize,
            num_hidden_layers: usize,
            num_attention_heads: usize,
            intermediate_size: usize,
            max_position_embeddings: usize,
            #[serde(default = "two")]
            type_vocab_size: usize,
            #[serde(default = "eps")]
            layer_norm_eps: f64,
            #[serde(default = "tenth")]
            hidden_dropout_prob: f64,
            #[serde(default = "tenth")]
            attention_probs_dropout_prob: f64,
        }
        fn two() -> usize {
            2
        }
        fn eps() -> f64 {
            1e-12
        }
        fn tenth() -> f64 {
            0.1
        }
        let hf: Hf = serde_json::from_str(text)?;
        let cfg = Self {
            vocab_size: hf.vocab_size,
            hidden_size: hf.hidden_size,
            n_layers: hf.num_hidden_layers,
            n_heads: hf.num_attention_heads,
            intermediate_size: hf.intermediate_size,
            max_positions: hf.max_position_embeddings,
            type_vocab_size: hf.type_vocab_size,
            layer_norm_eps: hf.layer_norm_eps,
            hidden_dropout: hf.hidden_dropout_prob,
            attention_dropout: hf.attention_probs_dropout_prob,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How one layer's token states collapse to a sentence vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// The state of the leading [CLS] token.
    #[default]
    FirstToken,
    /// Mean over non-padding tokens.
    Mean,
}

/// An argument paired with its topic, to be truncated to `max_length` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInput {
    pub argument: String,
    pub topic: String,
    pub max_length: usize,
}

/// Token ids ready for the encoder: [CLS] followed by the rendered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub ids: Vec<u32>,
    pub type_ids: Vec<u32>,
}

impl PairInput {
    pub fn new(argument: impl Into<String>, topic: impl Into<String>, max_length: usize) -> Self {
        Self { argument: argument.into(), topic: topic.into(), max_length }
    }

    /// `tokens(argument) ++ [SEP] ++ tokens(topic)`, cut to `max_length`.
    pub fn render(&self, tokenizer: &dyn Tokenizer) -> Result<Vec<u32>> {
        if self.argument.trim().is_empty() {
            return Err(NnError::Input("argument text is empty".into()));
        }
        if self.max_length == 0 {
            return Err(NnError::Input("max_length 0 leaves no tokens".into()));
        }
        let mut ids = tokenizer.encode(&self.argument);
        if ids.is_empty() {
            return Err(NnError::Input(format!("argument '{}' has no tokens", self.argument)));
        }
        ids.push(tokenizer.special().sep);
        ids.extend(tokenizer.encode(&self.topic));
        ids.truncate(self.max_length);
        Ok(ids)
    }

    pub fn encode(&self, tokenizer: &dyn Tokenizer) -> Result<EncodedPair> {
        let rendered = self.render(tokenizer)?;
        let sep = tokenizer.special().sep;
        let mut ids = Vec::with_capacity(rendered.len() + 1);
        let mut type_ids = Vec::with_capacity(rendered.len() + 1);
        ids.push(tokenizer.special().cls);
        type_ids.push(0);
        let mut segment = 0;
        for id in rendered {
            ids.push(id);
            type_ids.push(segment);
            if id == sep {
                segment = 1;
            }
        }
        Ok(EncodedPair { ids, type_ids })
    }
}

/// A padded batch of encoded pairs.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Tensor,
    pub type_ids: Tensor,
    /// 1 for real tokens, 0 for padding; shape (B, T).
    pub mask: Tensor,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn collate(pairs: &[&EncodedPair], pad: u32, device: &Device) -> Result<Self> {
        if pairs.is_empty() {
            return Err(NnError::Input("cannot collate an empty batch".into()));
        }
        let t = pairs.iter().map(|p| p.ids.len()).max().unwrap_or(0);
        let b = pairs.len();
        let mut ids = vec![pad; b * t];
        let mut types = vec![0u32; b * t];
        let mut mask = vec![0.0f64; b * t];
        for (i, p) in pairs.iter().enumerate() {
            for (j, (&id, &ty)) in p.ids.iter().zip(&p.type_ids).enumerate() {
                ids[i * t + j] = id;
                types[i * t + j] = ty;
                mask[i * t + j] = 1.0;
            }
        }
        Ok(Self {
            ids: Tensor::from_vec(ids, (b, t), device)?,
            type_ids: Tensor::from_vec(types, (b, t), device)?,
            mask: Tensor::from_vec(mask, (b, t), device)?,
            lengths: pairs.iter().map(|p| p.ids.len()).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }
}

/// A text encoder exposing per-layer hidden states.
pub trait EncoderBackend: Send + Sync {
    fn config(&self) -> &EncoderConfig;
    fn tokenizer(&self) -> &dyn Tokenizer;
    /// Hidden states after each layer, each of shape (B, T, H). Dropout is active iff `rng` is given.
    fn hidden_states(&self, batch: &Batch, rng: Option<&mut ChaCha8Rng>) -> Result<Vec<Tensor>>;

    fn hidden_size(&self) -> usize {
        self.config().hidden_size
    }

    fn n_layers(&self) -> usize {
        self.config().n_layers
    }
}

/// Pool each of the last four layers and concatenate: shape (B, 4·H).
pub fn encode_pair(
    backend: &dyn EncoderBackend,
    batch: &Batch,
    pooling: Pooling,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor> {
    let states = backend.hidden_states(batch, rng)?;
    if states.len() < POOLED_LAYERS {
        return Err(NnError::Config(format!("backend returned {} layers, need {POOLED_LAYERS}", states.len())));
    }
    let pooled = states[states.len() - POOLED_LAYERS..]
        .iter()
        .map(|s| pool(s, &batch.mask, pooling))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::cat(&pooled, 1)?)
}

/// Pair embedding of a single input in inference mode.
pub fn encode_pair_input(backend: &dyn EncoderBackend, input: &PairInput, pooling: Pooling) -> Result<Vec<f64>> {
    let enc = input.encode(backend.tokenizer())?;
    let batch = Batch::collate(&[&enc], backend.tokenizer().special().pad, &Device::Cpu)?;
    Ok(encode_pair(backend, &batch, pooling, None)?.squeeze(0)?.to_vec1::<f64>()?)
}

fn pool(states: &Tensor, mask: &Tensor, pooling: Pooling) -> Result<Tensor> {
    match pooling {
        Pooling::FirstToken => Ok(states.narrow(1, 0, 1)?.squeeze(1)?),
        Pooling::Mean => {
            let m = mask.unsqueeze(2)?;
            let summed = states.broadcast_mul(&m)?.sum(1)?;
            Ok(summed.broadcast_div(&m.sum(1)?)?)
        }
    }
}

struct Dense {
    w: Var,
    b: Var,
}

impl Dense {
    fn new(store: &mut ParamStore, name: &str, out: usize, inp: usize) -> Result<Self> {
        Ok(Self { w: store.normal(&format!("{name}.weight"), &[out, inp], 0.02)?, b: store.constant(&format!("{name}.bias"), &[out], 0.0)? })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        linear(x, &self.w, &self.b)
    }
}

struct Norm {
    gamma: Var,
    beta: Var,
    eps: f64,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            gamma: store.constant(&format!("{name}.weight"), &[dim], 1.0)?,
            beta: store.constant(&format!("{name}.bias"), &[dim], 0.0)?,
            eps,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &self.gamma, &self.beta, self.eps)
    }
}

struct Layer {
    query: Dense,
    key: Dense,
    value: Dense,
    attn_out: Dense,
    attn_norm: Norm,
    intermediate: Dense,
    output: Dense,
    out_norm: Norm,
}

/// Post-LN transformer encoder with word, position and segment embeddings.
pub struct TransformerEncoder {
    config: EncoderConfig,
    tokenizer: Box<dyn Tokenizer>,
    word: Var,
    position: Var,
    segment: Var,
    emb_norm: Norm,
    layers: Vec<Layer>,
}

impl std::fmt::Debug for TransformerEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformerEncoder").field("config", &self.config).finish_non_exhaustive()
    }
}

impl TransformerEncoder {
    /// Register freshly initialized encoder parameters in `store`.
    pub fn new(config: EncoderConfig, tokenizer: Box<dyn Tokenizer>, store: &mut ParamStore) -> Result<Self> {
        config.validate()?;
        if tokenizer.vocab_size() > config.vocab_size {
            return Err(NnError::Config(format!(
                "tokenizer vocabulary {} exceeds embedding rows {}",
                tokenizer.vocab_size(),
                config.vocab_size
            )));
        }
        let h = config.hidden_size;
        let eps = config.layer_norm_eps;
        let word = store.normal("embeddings.word_embeddings.weight", &[config.vocab_size, h], 0.02)?;
        let position = store.normal("embeddings.position_embeddings.weight", &[config.max_positions, h], 0.02)?;
        let segment = store.normal("embeddings.token_type_embeddings.weight", &[config.type_vocab_size, h], 0.02)?;
        let emb_norm = Norm::new(store, "embeddings.LayerNorm", h, eps)?;
        let layers = (0..config.n_layers)
            .map(|i| {
                let p = format!("encoder.layer.{i}");
                Ok(Layer {
                    query: Dense::new(store, &format!("{p}.attention.self.query"), h, h)?,
                    key: Dense::new(store, &format!("{p}.attention.self.key"), h, h)?,
                    value: Dense::new(store, &format!("{p}.attention.self.value"), h, h)?,
                    attn_out: Dense::new(store, &format!("{p}.attention.output.dense"), h, h)?,
                    attn_norm: Norm::new(store, &format!("{p}.attention.output.LayerNorm"), h, eps)?,
                    intermediate: Dense::new(store, &format!("{p}.intermediate.dense"), config.intermediate_size, h)?,
                    output: Dense::new(store, &format!("{p}.output.dense"), h, config.intermediate_size)?,
                    out_norm: Norm::new(store, &format!("{p}.output.LayerNorm"), h, eps)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, tokenizer, word, position, segment, emb_norm, layers })
    }

    /// Tiny encoder over a hashing tokenizer sized to the embedding table.
    pub fn tiny(config: EncoderConfig, store: &mut ParamStore) -> Result<Self> {
        let tok = HashingTokenizer::new(config.vocab_size)?;
        Self::new(config, Box::new(tok), store)
    }

    /// Build from a Hugging Face BERT directory (`config.json`, `vocab.txt`, `model.safetensors`)
    /// and copy the pretrained weights into `store`.
    pub fn from_pretrained(dir: &Path, lowercase: bool, store: &mut ParamStore) -> Result<Self> {
        let config = EncoderConfig::from_hf_json(&std::fs::read_to_string(dir.join("config.json"))?)?;
        let tok = WordPieceTokenizer::from_vocab_file(&dir.join("vocab.txt"), lowercase)?;
        let enc = Self::new(config, Box::new(tok), store)?;
        let (raw, _) = read_checkpoint(&dir.join("model.safetensors"), store.device())?;
        let tensors = raw
            .into_iter()
            .map(|(k, v)| {
                let k = k.strip_prefix("bert.").unwrap_or(&k).to_string();
                let k = k.replace("LayerNorm.gamma", "LayerNorm.weight").replace("LayerNorm.beta", "LayerNorm.bias");
                (k, v)
            })
            .collect();
        store.assign(&tensors)?;
        Ok(enc)
    }

    fn embed(&self, batch: &Batch, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (b, t) = batch.ids.dims2()?;
        if t > self.config.max_positions {
            return Err(NnError::Input(format!("sequence of {t} tokens exceeds {} positions", self.config.max_positions)));
        }
        let h = self.config.hidden_size;
        let words = self.word.index_select(&batch.ids.flatten_all()?, 0)?.reshape((b, t, h))?;
        let segments = self.segment.index_select(&batch.type_ids.flatten_all()?, 0)?.reshape((b, t, h))?;
        let positions = self.position.narrow(0, 0, t)?.unsqueeze(0)?;
        let x = words.add(&segments)?.broadcast_add(&positions)?;
        let x = self.emb_norm.forward(&x)?;
        dropout(&x, self.config.hidden_dropout, rng.as_deref_mut())
    }

    fn layer_forward(&self, layer: &Layer, x: &Tensor, additive_mask: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (b, t, h) = x.dims3()?;
        let nh = self.config.n_heads;
        let dh = h / nh;
        let split = |y: Tensor| -> Result<Tensor> { Ok(y.reshape((b, t, nh, dh))?.transpose(1, 2)?.contiguous()?) };
        let q = split(layer.query.forward(x)?)?;
        let k = split(layer.key.forward(x)?)?;
        let v = split(layer.value.forward(x)?)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? / (dh as f64).sqrt())?.broadcast_add(additive_mask)?;
        let probs = dropout(&softmax_last(&scores)?, self.config.attention_dropout, rng.as_deref_mut())?;
        let ctx = probs.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, t, h))?;
        let attn = dropout(&layer.attn_out.forward(&ctx)?, self.config.hidden_dropout, rng.as_deref_mut())?;
        let x = layer.attn_norm.forward(&x.add(&attn)?)?;
        let inter = layer.intermediate.forward(&x)?.gelu_erf()?;
        let out = dropout(&layer.output.forward(&inter)?, self.config.hidden_dropout, rng.as_deref_mut())?;
        layer.out_norm.forward(&x.add(&out)?)
    }
}

impl EncoderBackend for TransformerEncoder {
    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        self.tokenizer.as_ref()
    }

    fn hidden_states(&self, batch: &Batch, mut rng: Option<&mut ChaCha8Rng>) -> Result<Vec<Tensor>> {
        let (b, t) = batch.ids.dims2()?;
        // 0 for real tokens, a large negative number for padding, broadcast over heads and queries
        let additive = ((batch.mask.to_dtype(DType::F64)? - 1.0)? * 1e9)?.reshape((b, 1, 1, t))?;
        let mut x = self.embed(batch, rng.as_deref_mut())?;
        let mut states = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = self.layer_forward(layer, &x, &additive, rng.as_deref_mut())?;
            states.push(x.clone());
        }
        Ok(states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_with(h: usize) -> (TransformerEncoder, ParamStore) {
        let mut store = ParamStore::new(11);
        let cfg = EncoderConfig { hidden_size: h, n_heads: 2, intermediate_size: 2 * h, ..EncoderConfig::tiny() };
        (TransformerEncoder::tiny(cfg, &mut store).unwrap(), store)
    }

    #[test]
    fn render_contract() {
        let tok = HashingTokenizer::new(64).unwrap();
        let sep = tok.special().sep;
        let p = PairInput::new("Nuclear power is clean", "nuclear energy", 100);
        let r = p.render(&tok).unwrap();
        assert_eq!(r.len(), 4 + 1 + 2);
        assert_eq!(r[4], sep);
        let short = PairInput { max_length: 3, ..p.clone() }.render(&tok).unwrap();
        assert_eq!(short, r[..3]);
        let enc = p.encode(&tok).unwrap();
        assert_eq!(enc.ids[0], tok.special().cls);
        assert_eq!(enc.type_ids, vec![0, 0, 0, 0, 0, 0, 1, 1]);
        assert!(matches!(PairInput::new("  ", "t", 10).render(&tok), Err(NnError::Input(_))));
        assert!(matches!(PairInput::new("a", "t", 0).render(&tok), Err(NnError::Input(_))));
        assert_eq!(PairInput::new("a", "t", 1).render(&tok).unwrap().len(), 1);
    }

    #[test]
    fn pair_embedding_is_four_times_hidden_and_deterministic() {
        for h in [8, 32] {
            let (enc, _store) = tiny_with(h);
            let input = PairInput::new("School uniforms limit expression", "school uniforms", 64);
            for pooling in [Pooling::FirstToken, Pooling::Mean] {
                let a = encode_pair_input(&enc, &input, pooling).unwrap();
                assert_eq!(a.len(), 4 * h);
                assert_eq!(a, encode_pair_input(&enc, &input, pooling).unwrap());
            }
        }
        assert_eq!(EncoderConfig::bert_base().pair_embedding_dim(), 3_072);
    }

    #[test]
    fn padding_does_not_change_states() {
        let (enc, store) = tiny_with(8);
        let tok = enc.tokenizer();
        let short = PairInput::new("short claim", "t", 32).encode(tok).unwrap();
        let long = PairInput::new("a much longer claim with many more words in it", "t", 32).encode(tok).unwrap();
        let alone = Batch::collate(&[&short], 0, store.device()).unwrap();
        let padded = Batch::collate(&[&short, &long], 0, store.device()).unwrap();
        for pooling in [Pooling::FirstToken, Pooling::Mean] {
            let a = encode_pair(&enc, &alone, pooling, None).unwrap().to_vec2::<f64>().unwrap();
            let b = encode_pair(&enc, &padded, pooling, None).unwrap().to_vec2::<f64>().unwrap();
            for (x, y) in a[0].iter().zip(&b[0]) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig { n_layers: 3, ..EncoderConfig::tiny() }.validate().is_err());
        assert!(EncoderConfig { n_heads: 5, ..EncoderConfig::tiny() }.validate().is_err());
        let json = r#"{"vocab_size": 100, "hidden_size": 16, "num_hidden_layers": 4, "num_attention_heads": 2,
                       "intermediate_size": 32, "max_position_embeddings": 64}"#;
        let cfg = EncoderConfig::from_hf_json(json).unwrap();
        assert_eq!((cfg.hidden_size, cfg.type_vocab_size, cfg.pair_embedding_dim()), (16, 2, 64));
    }
}
