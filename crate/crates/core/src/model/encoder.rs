//! Utterance encoding and graph convolution.
//!
//! Each utterance runs through a BiLSTM whose inputs concatenate the word
//! embedding with a one-hot speaker vector. Word states and utterance vectors
//! are the concatenated forward/backward states, so both live in the vertex
//! feature space of width `2 * hidden_size`.
//!
//! The graph encoder is a gated relational convolution: messages from
//! in-neighbors are scaled by a per-neighbor scalar gate
//! `sigmoid(W_gate h_j)`, averaged per relation, transformed by the
//! relation's weight, summed over relations, and passed through ReLU.

use std::collections::HashMap;

use ndarray::Array1;

use crate::backend::{NodeId, Scalar, Tape};
use crate::corpus::{encode_for_copy, ExtendedVocab, Meeting, Vocabulary};
use crate::graph::{build_discourse_graph, DiscourseGraph, EdgeRelation, VertexPayload};
use crate::model::{
    embedding_id, BoundParams, Dropout, ModelConfig, ModelError, Result, SpeakerTable,
};

/// LSTM weight nodes for one direction.
pub(crate) struct LstmWeights {
    pub w_ih: NodeId,
    pub w_hh: NodeId,
    pub bias: NodeId,
}

impl LstmWeights {
    pub(crate) fn bound(bound: &BoundParams, prefix: &str) -> LstmWeights {
        LstmWeights {
            w_ih: bound.node(&format!("{prefix}.w_ih")),
            w_hh: bound.node(&format!("{prefix}.w_hh")),
            bias: bound.node(&format!("{prefix}.b")),
        }
    }
}

/// One LSTM cell step; gate layout is [input, forget, cell, output].
pub(crate) fn lstm_step<S: Scalar>(
    tape: &mut Tape<S>,
    weights: &LstmWeights,
    hidden: usize,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> (NodeId, NodeId) {
    let gi = tape.matvec(weights.w_ih, x);
    let gh = tape.matvec(weights.w_hh, h);
    let pre = tape.add(gi, gh);
    let pre = tape.add(pre, weights.bias);
    let i_gate = tape.slice(pre, 0, hidden);
    let i_gate = tape.sigmoid(i_gate);
    let f_gate = tape.slice(pre, hidden, hidden);
    let f_gate = tape.sigmoid(f_gate);
    let z = tape.slice(pre, 2 * hidden, hidden);
    let z = tape.tanh(z);
    let o_gate = tape.slice(pre, 3 * hidden, hidden);
    let o_gate = tape.sigmoid(o_gate);
    let fc = tape.mul(f_gate, c);
    let iz = tape.mul(i_gate, z);
    let c_new = tape.add(fc, iz);
    let c_act = tape.tanh(c_new);
    let h_new = tape.mul(o_gate, c_act);
    (h_new, c_new)
}

fn zeros_node<S: Scalar>(tape: &mut Tape<S>, len: usize) -> NodeId {
    tape.constant_vec(Array1::zeros(len))
}

/// Runs the BiLSTM over one utterance.
///
/// Returns per-word states (forward and backward states concatenated) and the
/// utterance vector (concatenation of the two final states). `speaker_index`
/// of `None` encodes an unseen speaker as the zero vector.
pub fn encode_utterance<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &BoundParams,
    config: &ModelConfig,
    token_ids: &[usize],
    speaker_index: Option<usize>,
    dropout: &mut Dropout<'_, S>,
) -> Result<(Vec<NodeId>, NodeId)> {
    if token_ids.is_empty() {
        return Err(ModelError::EmptyUtterance);
    }
    if let Some(index) = speaker_index {
        if index >= config.num_speakers {
            return Err(ModelError::SpeakerOutOfRange {
                index,
                num_speakers: config.num_speakers,
            });
        }
    }
    let h = config.hidden_size;
    let word_emb = bound.node("word_emb");
    let mut one_hot = Array1::zeros(config.num_speakers);
    if let Some(index) = speaker_index {
        one_hot[index] = S::one();
    }
    let speaker = tape.constant_vec(one_hot);

    let inputs: Vec<NodeId> = token_ids
        .iter()
        .map(|&id| {
            let emb = tape.row(word_emb, embedding_id(id, config.vocab_size));
            let x = tape.concat(vec![emb, speaker]);
            dropout.apply(tape, x)
        })
        .collect();

    let fwd_weights = LstmWeights::bound(bound, "enc_fwd");
    let bwd_weights = LstmWeights::bound(bound, "enc_bwd");

    let mut fwd_states = Vec::with_capacity(inputs.len());
    let (mut fh, mut fc) = (zeros_node(tape, h), zeros_node(tape, h));
    for &x in &inputs {
        let (nh, nc) = lstm_step(tape, &fwd_weights, h, x, fh, fc);
        fwd_states.push(nh);
        fh = nh;
        fc = nc;
    }
    let mut bwd_states = vec![0; inputs.len()];
    let (mut bh, mut bc) = (zeros_node(tape, h), zeros_node(tape, h));
    for (j, &x) in inputs.iter().enumerate().rev() {
        let (nh, nc) = lstm_step(tape, &bwd_weights, h, x, bh, bc);
        bwd_states[j] = nh;
        bh = nh;
        bc = nc;
    }

    let word_states: Vec<NodeId> = fwd_states
        .iter()
        .zip(&bwd_states)
        .map(|(&f, &b)| tape.concat(vec![f, b]))
        .collect();
    let last_fwd = *fwd_states.last().expect("non-empty");
    let first_bwd = bwd_states[0];
    let utterance_vector = tape.concat(vec![last_fwd, first_bwd]);
    Ok((word_states, utterance_vector))
}

/// Initial vertex features: utterance vertices take their encoder vectors,
/// relation instances share their type's embedding row, the global vertex
/// takes the global embedding.
pub fn init_vertex_features<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &BoundParams,
    config: &ModelConfig,
    graph: &DiscourseGraph,
    utterance_vectors: &[NodeId],
) -> Result<Vec<NodeId>> {
    let n_utt = graph.utterance_count();
    if utterance_vectors.len() != n_utt {
        return Err(ModelError::DimensionMismatch(format!(
            "{} utterance vectors for {n_utt} utterance vertices",
            utterance_vectors.len()
        )));
    }
    let dv = config.vertex_dim();
    for &v in utterance_vectors {
        let len = tape.value(v).len();
        if len != dv {
            return Err(ModelError::DimensionMismatch(format!(
                "utterance vector has width {len}, vertex space is {dv}"
            )));
        }
    }
    let rel_emb = bound.node("rel_emb");
    let global_emb = bound.node("global_emb");
    graph
        .vertices
        .iter()
        .map(|payload| match payload {
            VertexPayload::Utterance(i) => Ok(utterance_vectors[*i]),
            VertexPayload::RelationInstance(r) => Ok(tape.row(rel_emb, r.index())),
            VertexPayload::Global => Ok(tape.row(global_emb, 0)),
        })
        .collect()
}

/// One gated relational convolution layer.
///
/// For vertex `i`: `relu( sum_r sum_{j in N_r(i)} gate_r(j) / |N_r(i)| * W_r h_j )`
/// where `gate_r(j) = sigmoid(W_{r,gate} h_j)` is a scalar per neighbor.
/// Gate values are appended to `gate_sink` for diagnostics.
pub fn gated_rgcn_layer<S: Scalar>(
    tape: &mut Tape<S>,
    graph: &DiscourseGraph,
    layer_weights: &[(NodeId, NodeId)],
    features: &[NodeId],
    gate_sink: &mut Vec<S>,
) -> Vec<NodeId> {
    assert_eq!(features.len(), graph.vertex_count(), "feature row count");
    assert_eq!(layer_weights.len(), EdgeRelation::ALL.len());
    // gate depends on (relation, source vertex) only; reuse across targets
    let mut gate_cache: HashMap<(usize, usize), NodeId> = HashMap::new();
    let mut next = Vec::with_capacity(features.len());
    for vertex in 0..graph.vertex_count() {
        let mut contributions = Vec::new();
        for relation in EdgeRelation::ALL {
            let neighbors = graph
                .neighbors(vertex, relation)
                .expect("vertex ids in range");
            if neighbors.is_empty() {
                continue;
            }
            let (w, w_gate) = layer_weights[relation.index()];
            let inv_degree = S::from_f64(1.0 / neighbors.len() as f64);
            let gated: Vec<NodeId> = neighbors
                .iter()
                .map(|&j| {
                    let gate = *gate_cache.entry((relation.index(), j)).or_insert_with(|| {
                        let pre = tape.matvec(w_gate, features[j]);
                        let g = tape.sigmoid(pre);
                        gate_sink.push(tape.scalar_value(g));
                        g
                    });
                    tape.scale(gate, features[j])
                })
                .collect();
            // gates are scalars, so W_r distributes over the gated sum
            let summed = tape.add_n(gated);
            let transformed = tape.matvec(w, summed);
            contributions.push(tape.mul_const(transformed, inv_degree));
        }
        let total = tape.add_n(contributions);
        next.push(tape.relu(total));
    }
    next
}

/// Copy-mechanism bookkeeping for one meeting: flattened source positions and
/// their vocab-or-extended ids.
#[derive(Debug, Clone)]
pub struct CopyContext {
    /// Vocab-or-extended id of each flattened source word position.
    pub flat_ids: Vec<usize>,
    /// (utterance, word) for each flattened position.
    pub flat_positions: Vec<(usize, usize)>,
    /// Token-id rows per utterance, extended ids included.
    pub token_ids: Vec<Vec<usize>>,
    pub extended: ExtendedVocab,
    /// Output distribution width: vocabulary plus extended ids.
    pub dist_size: usize,
}

impl CopyContext {
    pub fn build(vocab: &Vocabulary, meeting: &Meeting) -> CopyContext {
        let (token_ids, extended) = encode_for_copy(vocab, meeting);
        let mut flat_ids = Vec::new();
        let mut flat_positions = Vec::new();
        for (i, row) in token_ids.iter().enumerate() {
            for (j, &id) in row.iter().enumerate() {
                flat_ids.push(id);
                flat_positions.push((i, j));
            }
        }
        CopyContext {
            flat_ids,
            flat_positions,
            token_ids,
            dist_size: vocab.len() + extended.len(),
            extended,
        }
    }
}

/// Everything the decoder needs from the encoder side.
pub struct EncoderOutput<S> {
    /// Pre-graph word states h0, grouped per utterance.
    pub word_states: Vec<Vec<NodeId>>,
    /// All word states stacked into an (n_words, d_v) matrix.
    pub word_matrix: NodeId,
    /// Pre-graph utterance vectors h0 per utterance.
    pub utterance_vectors: Vec<NodeId>,
    /// Initial vertex features, one row per graph vertex.
    pub vertex_features: Vec<NodeId>,
    /// Vertex features after the final convolution layer.
    pub graph_states: Vec<NodeId>,
    /// Post-graph utterance rows stacked into a (|U|, d_v) matrix.
    pub utterance_matrix: NodeId,
    /// Final feature of the global vertex.
    pub global_state: NodeId,
    /// Every gate value evaluated during convolution, for diagnostics.
    pub gate_values: Vec<S>,
    pub graph: DiscourseGraph,
}

/// Full encoder: utterance BiLSTM, vertex features, stacked convolutions.
pub fn encode_meeting<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &BoundParams,
    config: &ModelConfig,
    speakers: &SpeakerTable,
    vocab: &Vocabulary,
    meeting: &Meeting,
    dropout: &mut Dropout<'_, S>,
) -> Result<(EncoderOutput<S>, CopyContext)> {
    let copy = CopyContext::build(vocab, meeting);
    let graph = build_discourse_graph(meeting);

    let mut word_states = Vec::with_capacity(meeting.utterances.len());
    let mut utterance_vectors = Vec::with_capacity(meeting.utterances.len());
    for (utt, ids) in meeting.utterances.iter().zip(&copy.token_ids) {
        let speaker_index = speakers.index_of(&utt.speaker_id);
        let (states, vector) =
            encode_utterance(tape, bound, config, ids, speaker_index, dropout)?;
        word_states.push(states);
        utterance_vectors.push(vector);
    }

    let vertex_features =
        init_vertex_features(tape, bound, config, &graph, &utterance_vectors)?;

    let mut gate_values = Vec::new();
    let mut states = vertex_features.clone();
    for layer in 0..config.num_gcn_layers {
        if layer > 0 {
            states = states
                .into_iter()
                .map(|row| dropout.apply(tape, row))
                .collect();
        }
        let layer_weights: Vec<(NodeId, NodeId)> = EdgeRelation::ALL
            .iter()
            .map(|rel| {
                (
                    bound.node(&format!("gcn.l{layer}.w.{}", rel.label())),
                    bound.node(&format!("gcn.l{layer}.gate.{}", rel.label())),
                )
            })
            .collect();
        states = gated_rgcn_layer(tape, &graph, &layer_weights, &states, &mut gate_values);
    }

    let flat_words: Vec<NodeId> = word_states.iter().flatten().copied().collect();
    let word_matrix = tape.stack(flat_words);
    let utterance_rows: Vec<NodeId> = (0..meeting.utterances.len())
        .map(|i| states[i])
        .collect();
    let utterance_matrix = tape.stack(utterance_rows);
    let global_state = states[graph.global_vertex()];

    Ok((
        EncoderOutput {
            word_states,
            word_matrix,
            utterance_vectors,
            vertex_features,
            graph_states: states,
            utterance_matrix,
            global_state,
            gate_values,
            graph,
        },
        copy,
    ))
}
