//! Shared encoder with one head per task, plus checkpointing and prediction.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use argqual_core::{Corpus, Label, Task, TaskHeadOutput, TaskPredictor};
use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_pair, Batch, EncodedPair, EncoderBackend, EncoderConfig, PairInput, Pooling, TransformerEncoder};
use crate::error::{NnError, Result};
use crate::heads::{Head, HeadKind, Targets};
use crate::params::{read_checkpoint, ParamStore};
use crate::tokenizer::{HashingTokenizer, Tokenizer, WordPieceTokenizer};

/// Settings shared by every head and the input pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub pooling: Pooling,
    /// Maximum rendered pair length in tokens, excluding the leading [CLS].
    pub max_length: usize,
    pub head_dropout: f64,
    pub seed: u64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { pooling: Pooling::FirstToken, max_length: 64, head_dropout: 0.1, seed: 0 }
    }
}

/// How the tokenizer is reconstructed from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TokenizerSpec {
    Hashing,
    WordPiece { lowercase: bool, vocab: Vec<String> },
}

/// One example in encoder-ready form.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub pair: EncodedPair,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Score(f64),
    /// 0 = positive, 1 = negative.
    Class(u32),
}

pub struct MultiTaskModel {
    store: ParamStore,
    encoder: Box<dyn EncoderBackend>,
    heads: BTreeMap<Task, Head>,
    options: ModelOptions,
    tokenizer_spec: TokenizerSpec,
}

impl std::fmt::Debug for MultiTaskModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiTaskModel")
            .field("config", self.encoder.config())
            .field("tasks", &self.heads.keys().collect::<Vec<_>>())
            .field("options", &self.options)
            .finish()
    }
}

const MAX_LENGTH_CAP_MSG: &str = "max_length must leave room for [CLS] within the position table";

impl MultiTaskModel {
    fn assemble(
        mut store: ParamStore,
        encoder: Box<dyn EncoderBackend>,
        tasks: &[Task],
        options: ModelOptions,
        tokenizer_spec: TokenizerSpec,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(NnError::Config("a model needs at least one task head".into()));
        }
        if options.max_length == 0 || options.max_length + 1 > encoder.config().max_positions {
            return Err(NnError::Config(format!("{MAX_LENGTH_CAP_MSG}: {}", options.max_length)));
        }
        if !(0.0..1.0).contains(&options.head_dropout) {
            return Err(NnError::Config(format!("head dropout {} outside [0, 1)", options.head_dropout)));
        }
        let dim = encoder.config().pair_embedding_dim();
        let mut heads = BTreeMap::new();
        for &task in tasks {
            if heads.insert(task, Head::for_task(task, &mut store, dim, options.head_dropout)?).is_some() {
                return Err(NnError::Config(format!("task {task} listed twice")));
            }
        }
        Ok(Self { store, encoder, heads, options, tokenizer_spec })
    }

    /// Randomly initialized tiny encoder with a hashing tokenizer.
    pub fn tiny(config: EncoderConfig, tasks: &[Task], options: ModelOptions) -> Result<Self> {
        let mut store = ParamStore::new(options.seed);
        let encoder = TransformerEncoder::tiny(config, &mut store)?;
        Self::assemble(store, Box::new(encoder), tasks, options, TokenizerSpec::Hashing)
    }

    /// Pretrained BERT weights from a Hugging Face directory; heads are freshly initialized.
    pub fn from_pretrained(dir: &Path, lowercase: bool, tasks: &[Task], options: ModelOptions) -> Result<Self> {
        let mut store = ParamStore::new(options.seed);
        let encoder = TransformerEncoder::from_pretrained(dir, lowercase, &mut store)?;
        let vocab = std::fs::read_to_string(dir.join("vocab.txt"))?.lines().map(str::to_string).collect();
        Self::assemble(store, Box::new(encoder), tasks, options, TokenizerSpec::WordPiece { lowercase, vocab })
    }

    pub fn tasks(&self) -> impl Iterator<Item = Task> + '_ {
        self.heads.keys().copied()
    }

    pub fn has_task(&self, task: Task) -> bool {
        self.heads.contains_key(&task)
    }

    pub fn head(&self, task: Task) -> Result<&Head> {
        self.heads.get(&task).ok_or(NnError::UnregisteredTask(task))
    }

    pub fn encoder(&self) -> &dyn EncoderBackend {
        self.encoder.as_ref()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn options(&self) -> &ModelOptions {
        &self.options
    }

    pub fn set_max_length(&mut self, max_length: usize) -> Result<()> {
        if max_length == 0 || max_length + 1 > self.encoder.config().max_positions {
            return Err(NnError::Config(format!("{MAX_LENGTH_CAP_MSG}: {max_length}")));
        }
        self.options.max_length = max_length;
        Ok(())
    }

    /// Untruncated rendered length of an input pair, in tokens.
    pub fn rendered_length(&self, argument: &str, topic: &str) -> Result<usize> {
        Ok(PairInput::new(argument, topic, usize::MAX).render(self.encoder.tokenizer())?.len())
    }

    pub fn set_head_dropout(&mut self, p: f64) -> Result<()> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::Config(format!("head dropout {p} outside [0, 1)")));
        }
        self.options.head_dropout = p;
        self.heads.values_mut().for_each(|h| h.set_dropout(p));
        Ok(())
    }

    /// Names of parameters owned by the shared encoder.
    pub fn encoder_param_names(&self) -> Vec<String> {
        self.store.iter().map(|(k, _)| k).filter(|k| !k.starts_with("heads.")).cloned().collect()
    }

    pub fn encode_input(&self, argument: &str, topic: &str) -> Result<EncodedPair> {
        PairInput::new(argument, topic, self.options.max_length).encode(self.encoder.tokenizer())
    }

    /// Convert a labeled corpus for the given task's head.
    pub fn examples(&self, corpus: &Corpus, task: Task) -> Result<Vec<Example>> {
        let kind = self.head(task)?.kind();
        if corpus.task() != task {
            return Err(NnError::Config(format!("{} corpus offered to the {task} head", corpus.task())));
        }
        corpus
            .records()
            .iter()
            .map(|r| {
                let target = match (kind, r.label) {
                    (HeadKind::Regression, Label::Score(s)) => Target::Score(s),
                    (HeadKind::Classification, l) => match l.is_positive() {
                        Some(pos) => Target::Class(if pos { 0 } else { 1 }),
                        None => return Err(NnError::Config(format!("record '{}' lacks a class label", r.id))),
                    },
                    _ => return Err(NnError::Config(format!("record '{}' does not fit a {kind:?} head", r.id))),
                };
                Ok(Example { pair: self.encode_input(&r.text, &r.topic)?, target })
            })
            .collect()
    }

    pub fn collate(&self, pairs: &[&EncodedPair]) -> Result<Batch> {
        Batch::collate(pairs, self.encoder.tokenizer().special().pad, self.store.device())
    }

    /// Pair embeddings (B, 4·H); dropout is active iff `rng` is given.
    pub fn embed(&self, batch: &Batch, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        encode_pair(self.encoder.as_ref(), batch, self.options.pooling, rng)
    }

    /// Mean loss of `task`'s head on a batch of examples.
    pub fn batch_loss(&self, task: Task, examples: &[&Example], mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let head = self.head(task)?;
        let pairs: Vec<&EncodedPair> = examples.iter().map(|e| &e.pair).collect();
        let batch = self.collate(&pairs)?;
        let targets = targets_of(examples)?;
        let emb = self.embed(&batch, rng.as_deref_mut())?;
        head.loss(&emb, &targets, rng)
    }

    /// Head outputs for a single input in inference mode.
    pub fn multitask_forward(&self, input: &PairInput, task: Task) -> Result<TaskHeadOutput> {
        let head = self.head(task)?;
        let enc = input.encode(self.encoder.tokenizer())?;
        let emb = self.embed(&self.collate(&[&enc])?, None)?;
        Ok(outputs_of(head, &head.forward(&emb, None)?)?.remove(0))
    }

    /// Inference-mode outputs for every record, in order.
    pub fn predict(&self, corpus: &Corpus, task: Task, batch_size: usize) -> Result<Vec<TaskHeadOutput>> {
        let head = self.head(task)?;
        let pairs = corpus
            .records()
            .iter()
            .map(|r| self.encode_input(&r.text, &r.topic))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(batch_size.max(1)) {
            let refs: Vec<&EncodedPair> = chunk.iter().collect();
            let emb = self.embed(&self.collate(&refs)?, None)?;
            out.extend(outputs_of(head, &head.forward(&emb, None)?)?);
        }
        Ok(out)
    }

    /// A [`TaskPredictor`] view onto one head.
    pub fn predictor(&self, task: Task) -> Result<HeadPredictor<'_>> {
        self.head(task)?;
        Ok(HeadPredictor { model: self, task, batch_size: 64 })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let heads: BTreeMap<String, (HeadKind, usize)> =
            self.heads.iter().map(|(t, h)| (t.code().to_string(), (h.kind(), h.input_dim()))).collect();
        let meta: HashMap<String, String> = [
            ("format".to_string(), "argqual-multitask-v1".to_string()),
            ("hidden_size".to_string(), self.encoder.hidden_size().to_string()),
            ("encoder".to_string(), serde_json::to_string(self.encoder.config())?),
            ("pooling".to_string(), serde_json::to_string(&self.options.pooling)?),
            ("options".to_string(), serde_json::to_string(&self.options)?),
            ("heads".to_string(), serde_json::to_string(&heads)?),
            ("tokenizer".to_string(), serde_json::to_string(&self.tokenizer_spec)?),
        ]
        .into();
        self.store.save(path, meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (tensors, meta) = read_checkpoint(path, &candle_core::Device::Cpu)?;
        let field = |k: &str| meta.get(k).ok_or_else(|| NnError::Checkpoint(format!("metadata lacks '{k}'")));
        if field("format")? != "argqual-multitask-v1" {
            return Err(NnError::Checkpoint(format!("unknown checkpoint format '{}'", field("format")?)));
        }
        let config: EncoderConfig = serde_json::from_str(field("encoder")?)?;
        let options: ModelOptions = serde_json::from_str(field("options")?)?;
        let heads: BTreeMap<String, (HeadKind, usize)> = serde_json::from_str(field("heads")?)?;
        let spec: TokenizerSpec = serde_json::from_str(field("tokenizer")?)?;
        let tasks = heads.keys().map(|c| c.parse::<Task>()).collect::<std::result::Result<Vec<_>, _>>()?;
        let mut store = ParamStore::new(options.seed);
        let tokenizer: Box<dyn Tokenizer> = match &spec {
            TokenizerSpec::Hashing => Box::new(HashingTokenizer::new(config.vocab_size)?),
            TokenizerSpec::WordPiece { lowercase, vocab } => {
                Box::new(WordPieceTokenizer::from_vocab(vocab.iter().cloned(), *lowercase)?)
            }
        };
        let encoder = TransformerEncoder::new(config, tokenizer, &mut store)?;
        let model = Self::assemble(store, Box::new(encoder), &tasks, options, spec)?;
        for (code, (kind, dim)) in &heads {
            let head = model.head(code.parse()?)?;
            if head.kind() != *kind || head.input_dim() != *dim {
                return Err(NnError::Checkpoint(format!("head {code} metadata disagrees with the model")));
            }
        }
        model.store.assign(&tensors)?;
        Ok(model)
    }
}

fn targets_of(examples: &[&Example]) -> Result<Targets> {
    match examples.first().map(|e| e.target) {
        Some(Target::Score(_)) => examples
            .iter()
            .map(|e| match e.target {
                Target::Score(s) => Ok(s),
                Target::Class(_) => Err(NnError::Config("mixed target kinds in one batch".into())),
            })
            .collect::<Result<Vec<_>>>()
            .map(Targets::Scores),
        Some(Target::Class(_)) => examples
            .iter()
            .map(|e| match e.target {
                Target::Class(c) => Ok(c),
                Target::Score(_) => Err(NnError::Config("mixed target kinds in one batch".into())),
            })
            .collect::<Result<Vec<_>>>()
            .map(Targets::Classes),
        None => Err(NnError::Input("empty batch".into())),
    }
}

fn outputs_of(head: &Head, out: &Tensor) -> Result<Vec<TaskHeadOutput>> {
    Ok(match head.kind() {
        HeadKind::Regression => out.to_vec1::<f64>()?.into_iter().map(TaskHeadOutput::Score).collect(),
        HeadKind::Classification => {
            out.to_vec2::<f64>()?.into_iter().map(|p| TaskHeadOutput::ClassProbs([p[0], p[1]])).collect()
        }
    })
}

/// Borrowing predictor for one task head.
#[derive(Debug, Clone, Copy)]
pub struct HeadPredictor<'a> {
    model: &'a MultiTaskModel,
    task: Task,
    batch_size: usize,
}

impl TaskPredictor for HeadPredictor<'_> {
    fn task(&self) -> Task {
        self.task
    }

    fn predict(&self, corpus: &Corpus) -> argqual_core::Result<Vec<TaskHeadOutput>> {
        Ok(self.model.predict(corpus, self.task, self.batch_size)?)
    }
}
