//! The summarization network: BiLSTM utterance encoder, gated relational
//! graph convolution, and a dual-attention pointer decoder.
//!
//! Parameters are named tensors in a sorted store; the forward pass binds
//! them onto a [`Tape`](crate::backend::Tape) per meeting. Vertex features
//! are sized `d_v = 2 * hidden_size` so BiLSTM utterance vectors enter the
//! graph unprojected and relation/global embeddings share the same space.

mod decoder;
mod encoder;

pub use decoder::{
    beam_search, beam_search_with, decode_step, init_decoder, word_level_attention,
    utterance_level_attention, DecoderState, Hypothesis, StepDistribution, StepNodes,
};
pub use encoder::{
    encode_meeting, encode_utterance, gated_rgcn_layer, init_vertex_features, CopyContext,
    EncoderOutput,
};

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::{Array1, ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{NodeId, Scalar, Tape};
use crate::corpus::{Meeting, Vocabulary, DEFAULT_VOCAB_SIZE, UNK_ID};
use crate::graph::EdgeRelation;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("utterance has no tokens")]
    EmptyUtterance,
    #[error("speaker index {index} out of range for {num_speakers} speakers")]
    SpeakerOutOfRange { index: usize, num_speakers: usize },
    #[error("unknown parameter \"{0}\"")]
    UnknownParameter(String),
    #[error("checkpoint io error on {path}: {source}")]
    CheckpointIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),
    #[error("word vector file: {0}")]
    WordVectors(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub word_emb_size: usize,
    pub num_gcn_layers: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub num_speakers: usize,
    pub beam_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_size: 200,
            word_emb_size: 300,
            num_gcn_layers: 2,
            dropout: 0.5,
            vocab_size: DEFAULT_VOCAB_SIZE,
            num_speakers: 4,
            beam_size: 10,
        }
    }
}

impl ModelConfig {
    /// Vertex feature width: forward and backward final states concatenated.
    pub fn vertex_dim(&self) -> usize {
        2 * self.hidden_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0
            || self.word_emb_size == 0
            || self.vocab_size == 0
            || self.num_speakers == 0
            || self.beam_size == 0
        {
            return Err(ModelError::DimensionMismatch(
                "all model sizes must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::DimensionMismatch(
                "dropout must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Maps speaker identifiers to one-hot indices. Built over the training
/// split; unseen speakers encode as the all-zero vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerTable {
    speakers: Vec<String>,
}

impl SpeakerTable {
    pub fn from_meetings(meetings: &[Meeting]) -> SpeakerTable {
        let mut speakers: Vec<String> = meetings
            .iter()
            .flat_map(|m| m.utterances.iter().map(|u| u.speaker_id.clone()))
            .collect();
        speakers.sort();
        speakers.dedup();
        SpeakerTable { speakers }
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn index_of(&self, speaker: &str) -> Option<usize> {
        self.speakers.binary_search_by(|s| s.as_str().cmp(speaker)).ok()
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    /// One-hot over `num_speakers` slots; zeros for unknown speakers.
    pub fn one_hot<S: Scalar>(&self, speaker: &str, num_speakers: usize) -> Array1<S> {
        let mut v = Array1::zeros(num_speakers);
        if let Some(i) = self.index_of(speaker) {
            if i < num_speakers {
                v[i] = S::one();
            }
        }
        v
    }
}

/// Names and shapes of every learnable tensor, in initialization order.
pub fn parameter_spec(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let h = config.hidden_size;
    let e = config.word_emb_size;
    let dv = config.vertex_dim();
    let enc_in = e + config.num_speakers;
    let mut spec: Vec<(String, Vec<usize>)> = vec![
        ("word_emb".into(), vec![config.vocab_size, e]),
        ("rel_emb".into(), vec![16, dv]),
        ("global_emb".into(), vec![1, dv]),
        ("enc_fwd.w_ih".into(), vec![4 * h, enc_in]),
        ("enc_fwd.w_hh".into(), vec![4 * h, h]),
        ("enc_fwd.b".into(), vec![4 * h]),
        ("enc_bwd.w_ih".into(), vec![4 * h, enc_in]),
        ("enc_bwd.w_hh".into(), vec![4 * h, h]),
        ("enc_bwd.b".into(), vec![4 * h]),
    ];
    for layer in 0..config.num_gcn_layers {
        for rel in EdgeRelation::ALL {
            spec.push((format!("gcn.l{layer}.w.{}", rel.label()), vec![dv, dv]));
            spec.push((format!("gcn.l{layer}.gate.{}", rel.label()), vec![1, dv]));
        }
    }
    spec.extend([
        ("dec.w_ih".into(), vec![4 * h, e]),
        ("dec.w_hh".into(), vec![4 * h, h]),
        ("dec.b".into(), vec![4 * h]),
        ("dec_init.h.w".into(), vec![h, dv]),
        ("dec_init.h.b".into(), vec![h]),
        ("dec_init.c.w".into(), vec![h, dv]),
        ("dec_init.c.b".into(), vec![h]),
        ("attn.word.w".into(), vec![h, dv]),
        ("attn.utt.w".into(), vec![h, dv]),
        ("out.w".into(), vec![config.vocab_size, h + 2 * dv]),
        ("out.b".into(), vec![config.vocab_size]),
        ("pgen.w".into(), vec![1, 2 * dv + h + e]),
        ("pgen.b".into(), vec![1]),
    ]);
    spec
}

/// All learnable tensors, keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<S> {
    tensors: BTreeMap<String, ArrayD<S>>,
}

impl<S: Scalar> ModelParameters<S> {
    /// Uniform init in [-0.1, 0.1], drawing in `parameter_spec` order.
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> ModelParameters<S> {
        let lo = S::from_f64(-0.1);
        let hi = S::from_f64(0.1);
        let mut tensors = BTreeMap::new();
        for (name, shape) in parameter_spec(config) {
            let value = ArrayD::from_shape_fn(IxDyn(&shape), |_| rng.gen_range(lo..hi));
            tensors.insert(name, value);
        }
        ModelParameters { tensors }
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<S>> {
        self.tensors
            .get(name)
            .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))
    }

    /// Replaces a tensor; the shape must match.
    pub fn set(&mut self, name: &str, value: ArrayD<S>) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(ModelError::DimensionMismatch(format!(
                "parameter {name}: expected {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<S>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<S>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    /// Overwrites word-embedding rows from a whitespace-separated text file
    /// of `word v1 ... vE` lines. Words outside the vocabulary are ignored;
    /// returns how many rows were set.
    pub fn load_pretrained_words(
        &mut self,
        vocab: &Vocabulary,
        path: impl AsRef<Path>,
    ) -> Result<usize> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelError::CheckpointIo {
            path: path.display().to_string(),
            source,
        })?;
        let emb_dim = self.get("word_emb")?.shape()[1];
        let mut loaded = 0usize;
        let mut emb = self.tensors.remove("word_emb").expect("word_emb exists");
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().ok_or_else(|| {
                ModelError::WordVectors(format!("line {}: empty", lineno + 1))
            })?;
            let values: std::result::Result<Vec<f64>, _> =
                fields.map(|f| f.parse::<f64>()).collect();
            let values = values.map_err(|e| {
                ModelError::WordVectors(format!("line {}: {e}", lineno + 1))
            })?;
            if values.len() != emb_dim {
                return Err(ModelError::WordVectors(format!(
                    "line {}: expected {emb_dim} components, got {}",
                    lineno + 1,
                    values.len()
                )));
            }
            if let Some(id) = vocab.id_of(&word.to_lowercase()) {
                for (j, v) in values.into_iter().enumerate() {
                    emb[[id, j]] = S::from_f64(v);
                }
                loaded += 1;
            }
        }
        self.tensors.insert("word_emb".into(), emb);
        Ok(loaded)
    }
}

/// Parameter tensors mounted on a tape for one forward pass.
pub struct BoundParams {
    nodes: HashMap<String, NodeId>,
}

impl BoundParams {
    pub fn bind<S: Scalar>(tape: &mut Tape<S>, params: &ModelParameters<S>) -> BoundParams {
        let nodes = params
            .iter()
            .map(|(name, tensor)| (name.clone(), tape.param(tensor.clone())))
            .collect();
        BoundParams { nodes }
    }

    pub fn node(&self, name: &str) -> NodeId {
        *self
            .nodes
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    /// Collects per-parameter gradients after a backward pass; parameters the
    /// loss never touched get zeros.
    pub fn gradients<S: Scalar>(
        &self,
        grads: &crate::backend::Gradients<S>,
        params: &ModelParameters<S>,
    ) -> BTreeMap<String, ArrayD<S>> {
        params
            .iter()
            .map(|(name, tensor)| {
                let node = self.node(name);
                let g = grads
                    .get(node)
                    .cloned()
                    .unwrap_or_else(|| ArrayD::zeros(tensor.raw_dim()));
                (name.clone(), g)
            })
            .collect()
    }
}

/// Embedding-safe token id: extended copy ids fall back to UNK.
pub fn embedding_id(token_id: usize, vocab_size: usize) -> usize {
    if token_id < vocab_size {
        token_id
    } else {
        UNK_ID
    }
}

/// Dropout applied while building the forward pass. `None` rng means
/// evaluation mode (identity).
pub struct Dropout<'r, S> {
    rate: f64,
    rng: Option<&'r mut rand_chacha::ChaCha8Rng>,
    _marker: std::marker::PhantomData<S>,
}

impl<'r, S: Scalar> Dropout<'r, S> {
    pub fn eval() -> Dropout<'static, S> {
        Dropout {
            rate: 0.0,
            rng: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn train(rate: f64, rng: &'r mut rand_chacha::ChaCha8Rng) -> Dropout<'r, S> {
        Dropout {
            rate,
            rng: Some(rng),
            _marker: std::marker::PhantomData,
        }
    }

    /// Inverted dropout: surviving entries are scaled by 1/(1-rate).
    pub fn apply(&mut self, tape: &mut Tape<S>, x: NodeId) -> NodeId {
        let Some(rng) = self.rng.as_deref_mut() else {
            return x;
        };
        if self.rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let scale = S::from_f64(1.0 / keep);
        let len = tape.value(x).len();
        let mask = Array1::from_shape_fn(len, |_| {
            if rng.gen_range(0.0..1.0) < keep {
                scale
            } else {
                S::zero()
            }
        });
        let mask = tape.constant_vec(mask);
        tape.mul(x, mask)
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: String, // little-endian bytes, base64
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    precision: String,
    config: ModelConfig,
    vocab: Vocabulary,
    speakers: SpeakerTable,
    tensors: Vec<TensorRecord>,
}

/// A complete trained model: configuration, vocabulary, speaker table, and
/// parameters. Round-trips bitwise through [`Checkpoint::save`].
#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub speakers: SpeakerTable,
    pub params: ModelParameters<S>,
}

impl<S: Scalar> Checkpoint<S> {
    /// Freshly initialized model sized to the given vocabulary and speaker
    /// table: `vocab_size` and `num_speakers` are taken from the data, not
    /// the caller's config.
    pub fn fresh(
        mut config: ModelConfig,
        vocab: Vocabulary,
        speakers: SpeakerTable,
        rng: &mut impl Rng,
    ) -> Result<Checkpoint<S>> {
        config.vocab_size = vocab.len();
        config.num_speakers = speakers.len().max(1);
        config.validate()?;
        let params = ModelParameters::init(&config, rng);
        Ok(Checkpoint {
            config,
            vocab,
            speakers,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tensors = self
            .params
            .iter()
            .map(|(name, tensor)| {
                let mut bytes = Vec::with_capacity(tensor.len() * S::BYTES);
                for v in tensor.iter() {
                    v.write_le_bytes(&mut bytes);
                }
                TensorRecord {
                    name: name.clone(),
                    shape: tensor.shape().to_vec(),
                    data: BASE64.encode(&bytes),
                }
            })
            .collect();
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            precision: S::NAME.to_string(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            speakers: self.speakers.clone(),
            tensors,
        };
        let json = serde_json::to_string(&file).expect("checkpoint serializes");
        fs::write(path, json).map_err(|source| ModelError::CheckpointIo {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint<S>> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelError::CheckpointIo {
            path: path.display().to_string(),
            source,
        })?;
        let file: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| ModelError::CheckpointFormat(e.to_string()))?;
        if file.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::CheckpointFormat(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        if file.precision != S::NAME {
            return Err(ModelError::CheckpointFormat(format!(
                "precision mismatch: checkpoint is {}, runtime wants {}",
                file.precision,
                S::NAME
            )));
        }
        let mut vocab = file.vocab;
        vocab.rebuild_index();
        let mut tensors = BTreeMap::new();
        for record in file.tensors {
            let bytes = BASE64
                .decode(&record.data)
                .map_err(|e| ModelError::CheckpointFormat(format!("{}: {e}", record.name)))?;
            let count: usize = record.shape.iter().product();
            if bytes.len() != count * S::BYTES {
                return Err(ModelError::CheckpointFormat(format!(
                    "{}: expected {} bytes, got {}",
                    record.name,
                    count * S::BYTES,
                    bytes.len()
                )));
            }
            let values: Vec<S> = bytes
                .chunks_exact(S::BYTES)
                .map(S::read_le_bytes)
                .collect();
            let tensor = ArrayD::from_shape_vec(IxDyn(&record.shape), values)
                .map_err(|e| ModelError::CheckpointFormat(format!("{}: {e}", record.name)))?;
            tensors.insert(record.name, tensor);
        }
        Ok(Checkpoint {
            config: file.config,
            vocab,
            speakers: file.speakers,
            params: ModelParameters { tensors },
        })
    }
}

/// Reads only the precision tag of a checkpoint so callers can dispatch to
/// the right scalar type.
pub fn checkpoint_precision(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelError::CheckpointIo {
        path: path.display().to_string(),
        source,
    })?;
    #[derive(Deserialize)]
    struct Head {
        precision: String,
    }
    let head: Head = serde_json::from_str(&text)
        .map_err(|e| ModelError::CheckpointFormat(e.to_string()))?;
    Ok(head.precision)
}
