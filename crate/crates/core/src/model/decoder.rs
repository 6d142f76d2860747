//! Dual-attention pointer decoder.
//!
//! Each step attends over pre-graph word states and post-graph utterance
//! states with separate bilinear scores, concatenates the two context
//! vectors, and blends a vocabulary softmax with the copy distribution given
//! by word attention. Out-of-vocabulary source words receive their extended
//! ids in the final distribution.

use ndarray::Array1;

use crate::backend::{NodeId, Scalar, Tape};
use crate::corpus::{Meeting, BOS_ID, EOS_ID, PAD_ID};
use crate::model::encoder::{encode_meeting, CopyContext, EncoderOutput};
use crate::model::{embedding_id, BoundParams, Checkpoint, Dropout, ModelConfig, Result};

use super::encoder::{lstm_step, LstmWeights};

/// Decoder recurrent state between steps.
#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub hidden: NodeId,
    pub cell: NodeId,
    pub step: usize,
    /// Previous output token (vocab-or-extended id); BOS at step 0.
    pub prev_token: usize,
}

/// Initializes the decoder from the global vertex state through learned
/// affine maps.
pub fn init_decoder<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &BoundParams,
    enc: &EncoderOutput<S>,
) -> DecoderState {
    let hw = bound.node("dec_init.h.w");
    let hb = bound.node("dec_init.h.b");
    let cw = bound.node("dec_init.c.w");
    let cb = bound.node("dec_init.c.b");
    let h = tape.matvec(hw, enc.global_state);
    let h = tape.add(h, hb);
    let c = tape.matvec(cw, enc.global_state);
    let c = tape.add(c, cb);
    DecoderState {
        hidden: h,
        cell: c,
        step: 0,
        prev_token: BOS_ID,
    }
}

/// Bilinear attention of the decoder state over stacked feature rows:
/// `e_j = s^T W rows_j`, softmax over all rows, context as the
/// attention-weighted sum. Returns (attention, context).
pub fn word_level_attention<S: Scalar>(
    tape: &mut Tape<S>,
    weight: NodeId,
    state: NodeId,
    rows: NodeId,
) -> (NodeId, NodeId) {
    let query = tape.mattvec(weight, state);
    let scores = tape.matvec(rows, query);
    let attention = tape.softmax(scores);
    let context = tape.mattvec(rows, attention);
    (attention, context)
}

/// Same computation as [`word_level_attention`], over post-graph utterance
/// rows only.
pub fn utterance_level_attention<S: Scalar>(
    tape: &mut Tape<S>,
    weight: NodeId,
    state: NodeId,
    utterance_rows: NodeId,
) -> (NodeId, NodeId) {
    word_level_attention(tape, weight, state, utterance_rows)
}

/// Pointer-generator blend:
/// `final(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum_{j: src_j = w} a_j`,
/// over vocab ids plus extended copy ids.
pub fn pointer_blend<S: Scalar>(
    tape: &mut Tape<S>,
    p_gen: NodeId,
    vocab_dist: NodeId,
    word_attention: NodeId,
    flat_ids: &[usize],
    dist_size: usize,
) -> NodeId {
    let generate = tape.scale(p_gen, vocab_dist);
    let generate = tape.pad_zeros(generate, dist_size);
    let copy = tape.scatter_add(word_attention, flat_ids.to_vec(), dist_size);
    let keep = tape.one_minus(p_gen);
    let copy = tape.scale(keep, copy);
    tape.add(generate, copy)
}

/// Tape nodes produced by one decoder step.
pub struct StepNodes {
    pub word_attention: NodeId,
    pub utterance_attention: NodeId,
    pub word_context: NodeId,
    pub utterance_context: NodeId,
    pub combined_context: NodeId,
    pub p_gen: NodeId,
    pub vocab_dist: NodeId,
    pub final_dist: NodeId,
}

impl StepNodes {
    pub fn materialize<S: Scalar>(&self, tape: &Tape<S>) -> StepDistribution<S> {
        StepDistribution {
            word_attention: tape.vector_value(self.word_attention),
            utterance_attention: tape.vector_value(self.utterance_attention),
            word_context: tape.vector_value(self.word_context),
            utterance_context: tape.vector_value(self.utterance_context),
            combined_context: tape.vector_value(self.combined_context),
            p_gen: tape.scalar_value(self.p_gen),
            vocab_dist: tape.vector_value(self.vocab_dist),
            final_dist: tape.vector_value(self.final_dist),
        }
    }
}

/// Materialized distributions of one step, for inspection and traces.
#[derive(Debug, Clone)]
pub struct StepDistribution<S> {
    pub word_attention: Array1<S>,
    pub utterance_attention: Array1<S>,
    pub word_context: Array1<S>,
    pub utterance_context: Array1<S>,
    pub combined_context: Array1<S>,
    pub p_gen: S,
    pub vocab_dist: Array1<S>,
    pub final_dist: Array1<S>,
}

/// One decoder step: consume the previous token, update the LSTM state,
/// attend, and emit the blended output distribution.
pub fn decode_step<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &BoundParams,
    config: &ModelConfig,
    state: &DecoderState,
    enc: &EncoderOutput<S>,
    copy: &CopyContext,
    dropout: &mut Dropout<'_, S>,
) -> Result<(DecoderState, StepNodes)> {
    let word_emb = bound.node("word_emb");
    let x = tape.row(word_emb, embedding_id(state.prev_token, config.vocab_size));
    let x = dropout.apply(tape, x);

    let weights = LstmWeights::bound(bound, "dec");
    let (h, c) = lstm_step(tape, &weights, config.hidden_size, x, state.hidden, state.cell);

    let (word_attention, word_context) =
        word_level_attention(tape, bound.node("attn.word.w"), h, enc.word_matrix);
    let (utterance_attention, utterance_context) =
        utterance_level_attention(tape, bound.node("attn.utt.w"), h, enc.utterance_matrix);
    let combined_context = tape.concat(vec![word_context, utterance_context]);

    let out_in = tape.concat(vec![h, combined_context]);
    let logits = tape.matvec(bound.node("out.w"), out_in);
    let logits = tape.add(logits, bound.node("out.b"));
    let vocab_dist = tape.softmax(logits);

    let pgen_in = tape.concat(vec![combined_context, h, x]);
    let pgen_pre = tape.matvec(bound.node("pgen.w"), pgen_in);
    let pgen_pre = tape.add(pgen_pre, bound.node("pgen.b"));
    let p_gen = tape.sigmoid(pgen_pre);

    let final_dist = pointer_blend(
        tape,
        p_gen,
        vocab_dist,
        word_attention,
        &copy.flat_ids,
        copy.dist_size,
    );

    Ok((
        DecoderState {
            hidden: h,
            cell: c,
            step: state.step + 1,
            prev_token: state.prev_token,
        },
        StepNodes {
            word_attention,
            utterance_attention,
            word_context,
            utterance_context,
            combined_context,
            p_gen,
            vocab_dist,
            final_dist,
        },
    ))
}

/// A decoded summary with score and attention traces. Attention rows align
/// with emitted tokens; the step that produced EOS is not recorded.
#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    /// Emitted vocab-or-extended ids, BOS/EOS excluded.
    pub token_ids: Vec<usize>,
    /// Token text, extended copy ids de-referenced to their source words.
    pub tokens: Vec<String>,
    /// Length-normalized log-probability (per decode step, EOS included).
    pub log_prob: f64,
    pub word_attentions: Vec<Array1<S>>,
    pub utterance_attentions: Vec<Array1<S>>,
}

struct Beam<S> {
    state: DecoderState,
    token_ids: Vec<usize>,
    sum_log_prob: f64,
    steps: usize,
    word_attentions: Vec<Array1<S>>,
    utterance_attentions: Vec<Array1<S>>,
}

impl<S: Scalar> Beam<S> {
    fn normalized(&self) -> f64 {
        self.sum_log_prob / self.steps.max(1) as f64
    }
}

/// Beam search with the checkpoint's configured beam width.
pub fn beam_search<S: Scalar>(
    ckpt: &Checkpoint<S>,
    meeting: &Meeting,
    max_len: usize,
) -> Result<Hypothesis<S>> {
    beam_search_with(ckpt, meeting, ckpt.config.beam_size, max_len)
}

/// Beam search with an explicit width; width 1 is greedy decoding.
///
/// Hypotheses are ranked by length-normalized log-probability. A beam
/// finishes when it emits EOS or when `max_len` tokens have been generated.
pub fn beam_search_with<S: Scalar>(
    ckpt: &Checkpoint<S>,
    meeting: &Meeting,
    beam_size: usize,
    max_len: usize,
) -> Result<Hypothesis<S>> {
    assert!(beam_size >= 1, "beam_size must be positive");
    assert!(max_len >= 1, "max_len must be positive");
    let mut tape: Tape<S> = Tape::new();
    let bound = BoundParams::bind(&mut tape, &ckpt.params);
    let mut dropout = Dropout::eval();
    let (enc, copy) = encode_meeting(
        &mut tape,
        &bound,
        &ckpt.config,
        &ckpt.speakers,
        &ckpt.vocab,
        meeting,
        &mut dropout,
    )?;
    let init = init_decoder(&mut tape, &bound, &enc);

    let mut live = vec![Beam {
        state: init,
        token_ids: Vec::new(),
        sum_log_prob: 0.0,
        steps: 0,
        word_attentions: Vec::new(),
        utterance_attentions: Vec::new(),
    }];
    let mut finished: Vec<Beam<S>> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<(Beam<S>, usize, f64)> = Vec::new();
        for beam in &live {
            let (next_state, nodes) = decode_step(
                &mut tape,
                &bound,
                &ckpt.config,
                &beam.state,
                &enc,
                &copy,
                &mut dropout,
            )?;
            let dist = tape.vector_value(nodes.final_dist);
            let word_attention = tape.vector_value(nodes.word_attention);
            let utterance_attention = tape.vector_value(nodes.utterance_attention);
            let mut scored: Vec<(usize, f64)> = dist
                .iter()
                .enumerate()
                .filter(|(id, _)| *id != PAD_ID && *id != BOS_ID)
                .map(|(id, &p)| (id, p.as_f64().max(f64::MIN_POSITIVE).ln()))
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            for &(token, log_p) in scored.iter().take(beam_size) {
                let mut grown = Beam {
                    state: DecoderState {
                        prev_token: token,
                        ..next_state
                    },
                    token_ids: beam.token_ids.clone(),
                    sum_log_prob: beam.sum_log_prob + log_p,
                    steps: beam.steps + 1,
                    word_attentions: beam.word_attentions.clone(),
                    utterance_attentions: beam.utterance_attentions.clone(),
                };
                if token != EOS_ID {
                    grown.token_ids.push(token);
                    grown.word_attentions.push(word_attention.clone());
                    grown.utterance_attentions.push(utterance_attention.clone());
                }
                candidates.push((grown, token, log_p));
            }
        }
        // candidates share the same length, so raw sums rank like means
        candidates.sort_by(|a, b| b.0.sum_log_prob.partial_cmp(&a.0.sum_log_prob).unwrap());
        candidates.truncate(beam_size);
        live = Vec::new();
        for (beam, token, _) in candidates {
            if token == EOS_ID {
                finished.push(beam);
            } else {
                live.push(beam);
            }
        }
    }
    finished.extend(live);

    let best = finished
        .into_iter()
        .max_by(|a, b| a.normalized().partial_cmp(&b.normalized()).unwrap())
        .expect("at least one hypothesis");
    let tokens = best
        .token_ids
        .iter()
        .map(|&id| token_text(ckpt, &copy, id))
        .collect();
    Ok(Hypothesis {
        log_prob: best.normalized(),
        token_ids: best.token_ids,
        tokens,
        word_attentions: best.word_attentions,
        utterance_attentions: best.utterance_attentions,
    })
}

fn token_text<S: Scalar>(ckpt: &Checkpoint<S>, copy: &CopyContext, id: usize) -> String {
    if id < ckpt.vocab.len() {
        ckpt.vocab.word_of(id).unwrap_or("<unk>").to_string()
    } else {
        copy.extended
            .word_of(id)
            .unwrap_or("<unk>")
            .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, DiscourseRelationType, UNK_ID};
    use crate::model::SpeakerTable;
    use ndarray::{arr1, arr2, ArrayD, IxDyn};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> ModelConfig {
        ModelConfig {
            hidden_size: 3,
            word_emb_size: 4,
            num_gcn_layers: 1,
            dropout: 0.0,
            vocab_size: 12,
            num_speakers: 2,
            beam_size: 3,
        }
    }

    fn meeting() -> Meeting {
        Meeting::new(
            "m".into(),
            vec![
                ("a".into(), vec!["press".into(), "the".into(), "button".into()]),
                ("b".into(), vec!["which".into(), "button".into()]),
            ],
            vec![(1, DiscourseRelationType::ClarificationQuestion, 0)],
            Some(vec!["press".into(), "button".into()]),
        )
        .unwrap()
    }

    fn checkpoint(seed: u64) -> Checkpoint<f64> {
        let config = config();
        let m = meeting();
        let vocab = build_vocabulary(std::slice::from_ref(&m), config.vocab_size).unwrap();
        let speakers = SpeakerTable::from_meetings(std::slice::from_ref(&m));
        Checkpoint::fresh(config, vocab, speakers, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn single_row_attention_is_total() {
        let mut tape: Tape<f64> = Tape::new();
        let w = tape.constant(arr2(&[[0.5, 0.1], [0.2, -0.3]]).into_dyn());
        let s = tape.constant_vec(arr1(&[1.0, 2.0]));
        let row = arr1(&[0.7, -0.4]);
        let rows = {
            let r = tape.constant_vec(row.clone());
            tape.stack(vec![r])
        };
        let (attention, context) = word_level_attention(&mut tape, w, s, rows);
        assert_eq!(tape.vector_value(attention).to_vec(), vec![1.0]);
        assert_eq!(tape.vector_value(context), row);
    }

    #[test]
    fn zero_state_gives_uniform_attention() {
        let mut tape: Tape<f64> = Tape::new();
        let w = tape.constant(arr2(&[[0.5, 0.1], [0.2, -0.3]]).into_dyn());
        let s = tape.constant_vec(arr1(&[0.0, 0.0]));
        let rows = {
            let a = tape.constant_vec(arr1(&[1.0, 0.0]));
            let b = tape.constant_vec(arr1(&[0.0, 1.0]));
            let c = tape.constant_vec(arr1(&[2.0, 2.0]));
            tape.stack(vec![a, b, c])
        };
        let (attention, _) = word_level_attention(&mut tape, w, s, rows);
        let a = tape.vector_value(attention);
        for &v in a.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_matches_hand_computed_softmax() {
        // three rows, hand-set weight; scores e_j = s^T W h_j
        let w = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let s = arr1(&[0.4, -0.2]);
        let rows = [
            arr1(&[0.1, 0.9]),
            arr1(&[0.5, 0.5]),
            arr1(&[-0.3, 0.2]),
        ];
        // independent scalar computation
        let mut scores = [0.0f64; 3];
        for (j, r) in rows.iter().enumerate() {
            let mut e = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    e += s[a] * w[[a, b]] * r[b];
                }
            }
            scores[j] = e;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|e| (e - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let expected: Vec<f64> = exps.iter().map(|e| e / total).collect();

        let mut tape: Tape<f64> = Tape::new();
        let wn = tape.constant(w.into_dyn());
        let sn = tape.constant_vec(s);
        let rn: Vec<NodeId> = rows.iter().map(|r| tape.constant_vec(r.clone())).collect();
        let stacked = tape.stack(rn);
        let (attention, context) = word_level_attention(&mut tape, wn, sn, stacked);
        let got = tape.vector_value(attention);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-6, "{g} vs {e}");
        }
        let ctx = tape.vector_value(context);
        let expected_ctx: Array1<f64> = expected
            .iter()
            .zip(&rows)
            .map(|(a, r)| r * *a)
            .fold(Array1::zeros(2), |acc, x| acc + x);
        for (g, e) in ctx.iter().zip(expected_ctx.iter()) {
            assert!((g - e).abs() < 1e-6);
        }
    }

    #[test]
    fn pointer_blend_routes_copy_mass_to_extended_ids() {
        // vocab size 4, one extended id (4); positions map to [4, 2]
        let mut tape: Tape<f64> = Tape::new();
        let p_gen = tape.constant_scalar(0.5);
        let vocab_dist = tape.constant_vec(arr1(&[0.1, 0.2, 0.3, 0.4]));
        let attention = tape.constant_vec(arr1(&[0.3, 0.7]));
        let final_dist = pointer_blend(&mut tape, p_gen, vocab_dist, attention, &[4, 2], 5);
        let v = tape.vector_value(final_dist);
        // extended id 4: 0.5 * 0.3 = 0.15
        assert!((v[4] - 0.15).abs() < 1e-12);
        // vocab id 2: 0.5 * 0.3 + 0.5 * 0.7 = 0.5
        assert!((v[2] - 0.5).abs() < 1e-12);
        assert!((v.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forced_p_gen_one_reduces_to_vocab_softmax() {
        let mut ckpt = checkpoint(31);
        ckpt.params
            .set("pgen.b", ArrayD::from_elem(IxDyn(&[1]), 1e4))
            .unwrap();
        let m = meeting();
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &ckpt.params);
        let mut dropout = Dropout::eval();
        let (enc, copy) = encode_meeting(
            &mut tape, &bound, &ckpt.config, &ckpt.speakers, &ckpt.vocab, &m, &mut dropout,
        )
        .unwrap();
        let state = init_decoder(&mut tape, &bound, &enc);
        let (_, nodes) =
            decode_step(&mut tape, &bound, &ckpt.config, &state, &enc, &copy, &mut dropout)
                .unwrap();
        let dist = nodes.materialize(&tape);
        assert!((dist.p_gen - 1.0).abs() < 1e-9);
        for (i, &v) in dist.vocab_dist.iter().enumerate() {
            assert!((dist.final_dist[i] - v).abs() < 1e-9);
        }
        for &v in dist.final_dist.iter().skip(dist.vocab_dist.len()) {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn forced_p_gen_zero_supports_only_source_words() {
        let mut ckpt = checkpoint(32);
        ckpt.params
            .set("pgen.b", ArrayD::from_elem(IxDyn(&[1]), -1e4))
            .unwrap();
        let m = meeting();
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &ckpt.params);
        let mut dropout = Dropout::eval();
        let (enc, copy) = encode_meeting(
            &mut tape, &bound, &ckpt.config, &ckpt.speakers, &ckpt.vocab, &m, &mut dropout,
        )
        .unwrap();
        let state = init_decoder(&mut tape, &bound, &enc);
        let (_, nodes) =
            decode_step(&mut tape, &bound, &ckpt.config, &state, &enc, &copy, &mut dropout)
                .unwrap();
        let dist = nodes.materialize(&tape);
        assert!(dist.p_gen < 1e-9);
        let source: std::collections::HashSet<usize> = copy.flat_ids.iter().copied().collect();
        for (i, &v) in dist.final_dist.iter().enumerate() {
            if !source.contains(&i) {
                assert!(v < 1e-9, "non-source id {i} has mass {v}");
            }
        }
        assert!((dist.final_dist.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn init_decoder_is_affine_in_global_state() {
        let ckpt = checkpoint(33);
        let m = meeting();
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &ckpt.params);
        let mut dropout = Dropout::eval();
        let (mut enc, _) = encode_meeting(
            &mut tape, &bound, &ckpt.config, &ckpt.speakers, &ckpt.vocab, &m, &mut dropout,
        )
        .unwrap();
        // zero global state maps to the bias exactly
        let zero = tape.constant_vec(Array1::zeros(ckpt.config.vertex_dim()));
        let real_global = enc.global_state;
        enc.global_state = zero;
        let s0 = init_decoder(&mut tape, &bound, &enc);
        let bias = ckpt.params.get("dec_init.h.b").unwrap();
        let got = tape.vector_value(s0.hidden);
        for (g, b) in got.iter().zip(bias.iter()) {
            assert!((g - b).abs() < 1e-12);
        }
        assert_eq!(s0.prev_token, BOS_ID);
        assert_eq!(s0.step, 0);
        // distinct global states map to distinct initial states
        enc.global_state = real_global;
        let s1 = init_decoder(&mut tape, &bound, &enc);
        assert_ne!(tape.value(s0.hidden), tape.value(s1.hidden));
    }

    #[test]
    fn step_distributions_are_normalized() {
        let ckpt = checkpoint(34);
        let m = meeting();
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &ckpt.params);
        let mut dropout = Dropout::eval();
        let (enc, copy) = encode_meeting(
            &mut tape, &bound, &ckpt.config, &ckpt.speakers, &ckpt.vocab, &m, &mut dropout,
        )
        .unwrap();
        let mut state = init_decoder(&mut tape, &bound, &enc);
        for _ in 0..3 {
            let (next, nodes) =
                decode_step(&mut tape, &bound, &ckpt.config, &state, &enc, &copy, &mut dropout)
                    .unwrap();
            let dist = nodes.materialize(&tape);
            assert!((dist.word_attention.sum() - 1.0).abs() < 1e-6);
            assert!((dist.utterance_attention.sum() - 1.0).abs() < 1e-6);
            assert!((dist.final_dist.sum() - 1.0).abs() < 1e-6);
            assert!(dist.final_dist.iter().all(|&v| v >= 0.0));
            assert!(dist.p_gen > 0.0 && dist.p_gen < 1.0);
            assert_eq!(dist.utterance_attention.len(), m.utterances.len());
            assert_eq!(dist.word_attention.len(), copy.flat_ids.len());
            state = DecoderState {
                prev_token: UNK_ID,
                ..next
            };
        }
    }

    #[test]
    fn beam_one_is_deterministic_greedy() {
        let ckpt = checkpoint(35);
        let m = meeting();
        let a = beam_search_with(&ckpt, &m, 1, 6).unwrap();
        let b = beam_search_with(&ckpt, &m, 1, 6).unwrap();
        assert_eq!(a.token_ids, b.token_ids);
        assert_eq!(a.tokens.len(), a.token_ids.len());
        assert_eq!(a.word_attentions.len(), a.token_ids.len());
        assert!(a.log_prob <= 0.0);
        // wider beam never ranks below greedy under the same normalization
        let wide = beam_search_with(&ckpt, &m, 3, 6).unwrap();
        assert!(wide.log_prob >= a.log_prob - 1e-12);
    }
}
