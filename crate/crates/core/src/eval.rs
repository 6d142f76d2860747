//! ROUGE scoring, ablation drivers, and attention export.
//!
//! The ROUGE implementation is self-contained: no stemming, no stopword
//! removal, summaries treated as single token sequences (sentence-level LCS).
//! Scores are not bit-compatible with the perl toolchain; all acceptance
//! thresholds use this implementation.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::backend::Scalar;
use crate::corpus::{DiscourseRelationType, Meeting};
use crate::graph::{drop_relations, filter_relation_type};
use crate::model::{beam_search_with, Checkpoint, ModelError};
use crate::par;
use crate::training::sub_seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("meeting {0} has no reference summary")]
    MissingReference(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Precision / recall / F1 for one metric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: f64, candidate_total: f64, reference_total: f64) -> RougeScore {
        let precision = if candidate_total > 0.0 {
            overlap / candidate_total
        } else {
            0.0
        };
        let recall = if reference_total > 0.0 {
            overlap / reference_total
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }
}

/// ROUGE-1, ROUGE-2 and ROUGE-L together.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RougeTriple {
    pub rouge_1: RougeScore,
    pub rouge_2: RougeScore,
    pub rouge_l: RougeScore,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap ROUGE (n of 1 or 2 in practice).
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refr = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(gram, &c)| c.min(*refr.get(gram).unwrap_or(&0)))
        .sum();
    let cand_total = candidate.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    RougeScore::from_counts(overlap as f64, cand_total as f64, ref_total as f64)
}

/// Longest common subsequence length by dynamic programming.
fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            current[j + 1] = if x == y {
                prev[j] + 1
            } else {
                current[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

/// Sequence-level ROUGE-L.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> RougeScore {
    let lcs = lcs_length(candidate, reference) as f64;
    RougeScore::from_counts(lcs, candidate.len() as f64, reference.len() as f64)
}

/// All three metrics for one candidate/reference pair.
pub fn score_pair(candidate: &[String], reference: &[String]) -> RougeTriple {
    RougeTriple {
        rouge_1: rouge_n(candidate, reference, 1),
        rouge_2: rouge_n(candidate, reference, 2),
        rouge_l: rouge_l(candidate, reference),
    }
}

/// Unweighted field-wise mean over per-meeting scores.
pub fn mean_scores(per_meeting: &[RougeTriple]) -> RougeTriple {
    if per_meeting.is_empty() {
        return RougeTriple::default();
    }
    let n = per_meeting.len() as f64;
    let sum = |pick: fn(&RougeTriple) -> RougeScore| {
        let mut acc = RougeScore::default();
        for t in per_meeting {
            let s = pick(t);
            acc.precision += s.precision;
            acc.recall += s.recall;
            acc.f1 += s.f1;
        }
        RougeScore {
            precision: acc.precision / n,
            recall: acc.recall / n,
            f1: acc.f1 / n,
        }
    };
    RougeTriple {
        rouge_1: sum(|t| t.rouge_1),
        rouge_2: sum(|t| t.rouge_2),
        rouge_l: sum(|t| t.rouge_l),
    }
}

/// Scores for one decoded meeting.
#[derive(Debug, Clone, Serialize)]
pub struct MeetingEval {
    pub meeting_id: String,
    pub candidate: Vec<String>,
    pub scores: RougeTriple,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusEval {
    pub mean: RougeTriple,
    pub per_meeting: Vec<MeetingEval>,
}

/// Decodes every meeting with beam search and reports unweighted mean ROUGE.
/// Every meeting must carry a reference summary.
pub fn evaluate_corpus<S: Scalar>(
    ckpt: &Checkpoint<S>,
    meetings: &[Meeting],
    beam_size: usize,
    max_len: usize,
) -> Result<CorpusEval> {
    for m in meetings {
        if m.reference_summary.as_ref().filter(|s| !s.is_empty()).is_none() {
            return Err(EvalError::MissingReference(m.meeting_id.clone()));
        }
    }
    let decoded = par::map_slice(meetings, |m| {
        beam_search_with(ckpt, m, beam_size, max_len).map(|hyp| MeetingEval {
            meeting_id: m.meeting_id.clone(),
            scores: score_pair(&hyp.tokens, m.reference_summary.as_ref().unwrap()),
            candidate: hyp.tokens,
        })
    });
    let per_meeting: std::result::Result<Vec<MeetingEval>, ModelError> =
        decoded.into_iter().collect();
    let per_meeting = per_meeting?;
    let mean = mean_scores(
        &per_meeting
            .iter()
            .map(|m| m.scores)
            .collect::<Vec<RougeTriple>>(),
    );
    Ok(CorpusEval { mean, per_meeting })
}

/// Mean ROUGE-L F1 while revealing only a sampled fraction of each meeting's
/// discourse relations. Sampling is per meeting, derived from `seed`, the
/// fraction position, and the meeting position, so reruns are reproducible.
pub fn discourse_percentage_curve<S: Scalar>(
    ckpt: &Checkpoint<S>,
    meetings: &[Meeting],
    fractions: &[f64],
    seed: u64,
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::with_capacity(fractions.len());
    for (fi, &fraction) in fractions.iter().enumerate() {
        let ablated: Vec<Meeting> = meetings
            .iter()
            .enumerate()
            .map(|(mi, m)| {
                drop_relations(m, fraction, sub_seed(seed, &format!("drop:{fi}:{mi}")))
            })
            .collect();
        let eval = evaluate_corpus(ckpt, &ablated, beam_size, max_len)?;
        rows.push((fraction, eval.mean.rouge_l.f1));
    }
    Ok(rows)
}

/// Mean ROUGE-L F1 with only one relation type revealed, for each of the 16
/// types. Types absent from the corpus naturally degenerate to the
/// zero-relation graph.
pub fn relation_type_curve<S: Scalar>(
    ckpt: &Checkpoint<S>,
    meetings: &[Meeting],
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<(DiscourseRelationType, f64)>> {
    let mut rows = Vec::with_capacity(DiscourseRelationType::ALL.len());
    for relation in DiscourseRelationType::ALL {
        let filtered: Vec<Meeting> = meetings
            .iter()
            .map(|m| filter_relation_type(m, relation))
            .collect();
        let eval = evaluate_corpus(ckpt, &filtered, beam_size, max_len)?;
        rows.push((relation, eval.mean.rouge_l.f1));
    }
    Ok(rows)
}

pub fn percentage_curve_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("fraction,rouge_l\n");
    for (fraction, score) in rows {
        out.push_str(&format!("{fraction},{score:.6}\n"));
    }
    out
}

pub fn relation_curve_csv(rows: &[(DiscourseRelationType, f64)]) -> String {
    let mut out = String::from("relation,rouge_l\n");
    for (relation, score) in rows {
        out.push_str(&format!("{relation},{score:.6}\n"));
    }
    out
}

/// Per-step attention rows of a greedy decode, aligned with emitted tokens.
#[derive(Debug, Clone, Serialize)]
pub struct AttentionTrace {
    pub meeting_id: String,
    pub tokens: Vec<String>,
    /// rows = generated length, columns = |U|; each row sums to 1.
    pub utterance_attention: Vec<Vec<f64>>,
    /// rows = generated length, columns = total source words.
    pub word_attention: Vec<Vec<f64>>,
}

/// Greedy-decodes one meeting and captures its attention matrices.
pub fn export_attention<S: Scalar>(
    ckpt: &Checkpoint<S>,
    meeting: &Meeting,
    max_len: usize,
) -> Result<AttentionTrace> {
    let hyp = beam_search_with(ckpt, meeting, 1, max_len)?;
    Ok(AttentionTrace {
        meeting_id: meeting.meeting_id.clone(),
        tokens: hyp.tokens,
        utterance_attention: hyp
            .utterance_attentions
            .iter()
            .map(|row| row.iter().map(|v| v.as_f64()).collect())
            .collect(),
        word_attention: hyp
            .word_attentions
            .iter()
            .map(|row| row.iter().map(|v| v.as_f64()).collect())
            .collect(),
    })
}

pub fn write_attention_json(trace: &AttentionTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(trace).expect("trace serializes");
    std::fs::write(path, json).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocabulary;
    use crate::model::{ModelConfig, SpeakerTable};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn identical_sequences_score_one() {
        let t = toks(&["a", "b", "c"]);
        for s in [rouge_n(&t, &t, 1), rouge_n(&t, &t, 2), rouge_l(&t, &t)] {
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn disjoint_sequences_score_zero() {
        let a = toks(&["a", "b"]);
        let b = toks(&["c", "d"]);
        for s in [rouge_n(&a, &b, 1), rouge_n(&a, &b, 2), rouge_l(&a, &b)] {
            assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn unigram_and_bigram_hand_counts() {
        let candidate = toks(&["the", "cat", "sat"]);
        let reference = toks(&["the", "cat", "ran"]);
        let r1 = rouge_n(&candidate, &reference, 1);
        assert!((r1.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r1.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r1.f1 - 2.0 / 3.0).abs() < 1e-12);
        let r2 = rouge_n(&candidate, &reference, 2);
        assert!((r2.precision - 0.5).abs() < 1e-12);
        assert!((r2.recall - 0.5).abs() < 1e-12);
        assert!((r2.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lcs_hand_check() {
        let candidate = toks(&["a", "b", "c", "d"]);
        let reference = toks(&["a", "c", "b", "d"]);
        let s = rouge_l(&candidate, &reference);
        assert!((s.precision - 0.75).abs() < 1e-12);
        assert!((s.recall - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_scores_zero_without_panicking() {
        let empty: Vec<String> = vec![];
        let r = toks(&["a"]);
        assert_eq!(rouge_l(&empty, &r).f1, 0.0);
        assert_eq!(rouge_n(&empty, &r, 1).f1, 0.0);
        assert_eq!(rouge_n(&empty, &r, 2).f1, 0.0);
        assert_eq!(rouge_l(&r, &empty).f1, 0.0);
    }

    #[test]
    fn scores_stay_bounded_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        use rand::Rng;
        for _ in 0..200 {
            let len_a = rng.gen_range(0..8);
            let len_b = rng.gen_range(1..8);
            let a: Vec<String> =
                (0..len_a).map(|_| format!("w{}", rng.gen_range(0..5))).collect();
            let b: Vec<String> =
                (0..len_b).map(|_| format!("w{}", rng.gen_range(0..5))).collect();
            for s in [rouge_n(&a, &b, 1), rouge_n(&a, &b, 2), rouge_l(&a, &b)] {
                assert!(s.precision >= 0.0 && s.precision <= 1.0);
                assert!(s.recall >= 0.0 && s.recall <= 1.0);
                assert!(s.f1 >= 0.0 && s.f1 <= 1.0);
                assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            }
            assert!(lcs_length(&a, &b) <= a.len().min(b.len()));
        }
    }

    #[test]
    fn mean_is_fieldwise_and_permutation_invariant() {
        let triples = vec![
            score_pair(&toks(&["a", "b"]), &toks(&["a", "b"])),
            score_pair(&toks(&["a"]), &toks(&["b"])),
            score_pair(&toks(&["x", "y", "z"]), &toks(&["x", "q", "z"])),
        ];
        let mean = mean_scores(&triples);
        let mut shuffled = triples.clone();
        shuffled.swap(0, 2);
        let mean2 = mean_scores(&shuffled);
        assert_eq!(mean, mean2);
        // single meeting mean equals that meeting's score
        let single = mean_scores(&triples[..1]);
        assert_eq!(single, triples[0]);
        // all-perfect means 1.0
        let perfect = vec![triples[0]; 3];
        assert_eq!(mean_scores(&perfect).rouge_l.f1, 1.0);
    }

    fn tiny_checkpoint() -> (Checkpoint<f64>, Vec<Meeting>) {
        let meetings = vec![
            Meeting::new(
                "e1".into(),
                vec![
                    ("a".into(), toks(&["pick", "blue", "buttons"])),
                    ("b".into(), toks(&["why", "blue"])),
                    ("a".into(), toks(&["blue", "is", "calm"])),
                ],
                vec![
                    (1, DiscourseRelationType::QuestionAnswer, 2),
                    (0, DiscourseRelationType::Contrast, 2),
                ],
                Some(toks(&["blue", "buttons"])),
            )
            .unwrap(),
            Meeting::new(
                "e2".into(),
                vec![
                    ("a".into(), toks(&["red", "case"])),
                    ("b".into(), toks(&["fine"])),
                ],
                vec![(0, DiscourseRelationType::Acknowledgment, 1)],
                Some(toks(&["red", "case"])),
            )
            .unwrap(),
        ];
        let config = ModelConfig {
            hidden_size: 3,
            word_emb_size: 4,
            num_gcn_layers: 1,
            dropout: 0.0,
            vocab_size: 32,
            num_speakers: 2,
            beam_size: 2,
        };
        let vocab = build_vocabulary(&meetings, 32).unwrap();
        let speakers = SpeakerTable::from_meetings(&meetings);
        let ckpt =
            Checkpoint::fresh(config, vocab, speakers, &mut ChaCha8Rng::seed_from_u64(44))
                .unwrap();
        (ckpt, meetings)
    }

    #[test]
    fn evaluate_corpus_requires_references() {
        let (ckpt, mut meetings) = tiny_checkpoint();
        meetings[1].reference_summary = None;
        assert!(matches!(
            evaluate_corpus(&ckpt, &meetings, 1, 4),
            Err(EvalError::MissingReference(_))
        ));
    }

    #[test]
    fn full_fraction_reproduces_plain_evaluation() {
        let (ckpt, meetings) = tiny_checkpoint();
        let plain = evaluate_corpus(&ckpt, &meetings, 1, 4).unwrap();
        let curve =
            discourse_percentage_curve(&ckpt, &meetings, &[0.0, 0.5, 1.0], 9, 1, 4).unwrap();
        assert_eq!(curve.len(), 3);
        assert_eq!(curve[2].0, 1.0);
        assert_eq!(curve[2].1, plain.mean.rouge_l.f1);
        // fraction 0 runs on relation-free graphs without crashing
        assert!(curve[0].1.is_finite());
        let csv = percentage_curve_csv(&curve);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("fraction,rouge_l\n"));
    }

    #[test]
    fn relation_curve_covers_all_sixteen_types() {
        let (ckpt, meetings) = tiny_checkpoint();
        let rows = relation_type_curve(&ckpt, &meetings, 1, 4).unwrap();
        assert_eq!(rows.len(), 16);
        let rows2 = relation_type_curve(&ckpt, &meetings, 1, 4).unwrap();
        assert_eq!(rows, rows2);
        // types absent from the corpus all equal the zero-relation score
        let zero_relation: Vec<Meeting> = meetings
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.relations.clear();
                m
            })
            .collect();
        let baseline = evaluate_corpus(&ckpt, &zero_relation, 1, 4)
            .unwrap()
            .mean
            .rouge_l
            .f1;
        let absent = rows
            .iter()
            .find(|(r, _)| *r == DiscourseRelationType::Narration)
            .unwrap();
        assert_eq!(absent.1, baseline);
        let csv = relation_curve_csv(&rows);
        assert_eq!(csv.lines().count(), 17);
    }

    #[test]
    fn attention_trace_rows_align_with_tokens() {
        let (ckpt, meetings) = tiny_checkpoint();
        let trace = export_attention(&ckpt, &meetings[0], 5).unwrap();
        assert_eq!(trace.utterance_attention.len(), trace.tokens.len());
        assert_eq!(trace.word_attention.len(), trace.tokens.len());
        for row in &trace.utterance_attention {
            assert_eq!(row.len(), meetings[0].utterances.len());
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        for row in &trace.word_attention {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attn.json");
        write_attention_json(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["utterance_attention"].is_array());
    }
}
