//! Abstractive meeting summarization over dialogue discourse graphs.
//!
//! The pipeline: discourse-annotated meetings are transformed into a typed
//! graph (utterance vertices, relation-instance vertices, one global vertex,
//! six edge relations), encoded with a gated relational graph convolution on
//! top of a BiLSTM utterance encoder, and decoded with a dual-attention
//! pointer decoder that can copy source words. Question-answer discourse
//! edges additionally yield a pseudo-summarization corpus used to warm-start
//! training.
//!
//! Modules mirror the pipeline stages:
//! - [`corpus`]: data model, JSONL ingestion, vocabulary, splits
//! - [`graph`]: discourse graph construction and ablation transforms
//! - [`backend`]: tape-based reverse-mode autodiff the model runs on
//! - [`model`]: encoder, graph convolution, copy decoder, beam search
//! - [`training`]: NLL objective, Adam loop, pre-train/fine-tune protocol
//! - [`pseudo`]: pseudo-summarization corpus construction
//! - [`eval`]: ROUGE scoring, ablation drivers, attention export
//! - [`cli`]: command-line entry points

pub mod backend;
pub mod cli;
pub mod corpus;
pub mod eval;
pub mod graph;
pub mod model;
pub mod par;
pub mod pseudo;
pub mod training;
