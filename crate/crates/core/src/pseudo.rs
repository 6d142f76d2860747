//! Pseudo-summarization corpus construction.
//!
//! A question often opens a small discussion, so the question serves as a
//! pseudo summary and the N utterances after it as the pseudo input.
//! Questions come either from question-answer discourse edges or from surface
//! rules (WH-word start, trailing question mark). Questions containing
//! neither a noun nor an adjective are filtered out.
//!
//! Emitted pseudo meetings are valid corpus meetings (the question tokens go
//! into the summary field), so the training pipeline consumes them unchanged.

use std::collections::HashSet;

use thiserror::Error;

use crate::corpus::{DiscourseRelationType, Meeting};
use crate::par;

#[derive(Debug, Error)]
pub enum PseudoError {
    #[error("tagger returned {got} tags for {expected} tokens")]
    TaggerMismatch { expected: usize, got: usize },
    #[error("window size must be >= 1")]
    WindowTooSmall,
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

pub type Result<T> = std::result::Result<T, PseudoError>;

/// Coarse part-of-speech classes the question filter needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosTag {
    Noun,
    Adjective,
    Other,
}

/// Token-sequence tagger; output length must equal input length.
pub trait PosTagger {
    fn tag(&self, tokens: &[String]) -> Vec<PosTag>;
}

/// Closed-lexicon tagger adequate for fixture corpora. Anything outside the
/// two word lists tags as OTHER. Real corpora can plug in an external tagger
/// through the [`PosTagger`] trait.
pub struct LexiconTagger {
    nouns: HashSet<&'static str>,
    adjectives: HashSet<&'static str>,
}

const NOUNS: &[&str] = &[
    "colour", "color", "colours", "colors", "button", "buttons", "remote", "control", "controls",
    "battery", "batteries", "design", "designs", "screen", "case", "shape", "menu", "price",
    "market", "team", "meeting", "user", "interface", "project", "manager", "rubber", "plastic",
    "material", "materials", "chip", "speech", "recognition", "channel", "channels", "volume",
    "cost", "budget", "logo", "fruit", "fruits", "vegetable", "vegetables", "banana", "apple",
    "trend", "trends", "function", "functions", "feature", "features", "display", "light",
    "lights", "sample", "survey", "report", "idea", "ideas", "option", "options", "decision",
    "energy", "power", "signal", "device", "gadget", "product", "component", "components",
    "wheel", "titanium", "curve", "profit", "sales", "evaluation", "criteria", "presentation",
    "prototype", "target", "group", "age", "speaker", "microphone", "camera", "handset", "shell",
    "casing", "mockup", "slide", "slides", "finding", "findings", "requirement", "requirements",
];

const ADJECTIVES: &[&str] = &[
    "standard", "yellow", "blue", "red", "green", "black", "white", "grey", "gray", "spongy",
    "curved", "flat", "double", "single", "fancy", "trendy", "cheap", "expensive", "simple",
    "easy", "hard", "soft", "small", "large", "big", "new", "old", "modern", "sleek", "bright",
    "dark", "rounded", "square", "technological", "innovative", "international", "young",
    "elderly", "different", "important", "functional", "kinetic", "rechargeable", "ergonomic",
];

impl Default for LexiconTagger {
    fn default() -> Self {
        LexiconTagger {
            nouns: NOUNS.iter().copied().collect(),
            adjectives: ADJECTIVES.iter().copied().collect(),
        }
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, tokens: &[String]) -> Vec<PosTag> {
        tokens
            .iter()
            .map(|t| {
                let t = t.as_str();
                if self.nouns.contains(t) {
                    PosTag::Noun
                } else if self.adjectives.contains(t) {
                    PosTag::Adjective
                } else {
                    PosTag::Other
                }
            })
            .collect()
    }
}

/// Which endpoint of a question-answer annotation is the question. The
/// default convention treats the annotation source as the question; parsers
/// emitting the opposite convention can flip this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuestionEndpoint {
    #[default]
    Source,
    Target,
}

/// How question utterances are identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuestionMode {
    /// Sources of question-answer discourse annotations.
    Discourse,
    /// Surface rules: WH-word start or trailing question mark.
    Rule,
}

/// Indices of utterances appearing as the question endpoint of at least one
/// question-answer annotation: ascending, deduplicated.
pub fn discourse_questions_with_endpoint(
    meeting: &Meeting,
    endpoint: QuestionEndpoint,
) -> Vec<usize> {
    let mut indices: Vec<usize> = meeting
        .relations
        .iter()
        .filter(|r| r.relation == DiscourseRelationType::QuestionAnswer)
        .map(|r| match endpoint {
            QuestionEndpoint::Source => r.source_index,
            QuestionEndpoint::Target => r.target_index,
        })
        .collect();
    indices.sort_unstable();
    indices.dedup();
    indices
}

/// Question indices under the default source-side convention.
pub fn extract_discourse_questions(meeting: &Meeting) -> Vec<usize> {
    discourse_questions_with_endpoint(meeting, QuestionEndpoint::Source)
}

const WH_WORDS: &[&str] = &[
    "what", "who", "why", "where", "when", "which", "how", "whose", "whom",
];

/// Rule-based question indices: first token is a WH-word or last token is
/// "?". Ascending and deduplicated by construction.
pub fn rule_based_questions(meeting: &Meeting) -> Vec<usize> {
    meeting
        .utterances
        .iter()
        .filter(|u| {
            let first = u.tokens.first().map(String::as_str);
            let last = u.tokens.last().map(String::as_str);
            first.is_some_and(|t| WH_WORDS.contains(&t)) || last == Some("?")
        })
        .map(|u| u.index)
        .collect()
}

/// Keeps a question iff it contains at least one noun or adjective.
pub fn question_filter(tokens: &[String], tagger: &dyn PosTagger) -> Result<bool> {
    let tags = tagger.tag(tokens);
    if tags.len() != tokens.len() {
        return Err(PseudoError::TaggerMismatch {
            expected: tokens.len(),
            got: tags.len(),
        });
    }
    Ok(tags
        .iter()
        .any(|t| matches!(t, PosTag::Noun | PosTag::Adjective)))
}

/// One (pseudo summary, pseudo meeting) pair. The meeting stores the summary
/// in its reference field so it is a complete training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoPair {
    pub summary: Vec<String>,
    pub meeting: Meeting,
}

/// Construction counters for reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PseudoStats {
    pub questions_found: usize,
    pub rejected_by_filter: usize,
    pub empty_window: usize,
    pub pairs: usize,
}

/// Builds pseudo pairs from discourse-identified questions with window size
/// `n` (10 by default throughout the toolchain).
pub fn build_pseudo_corpus(
    meetings: &[Meeting],
    n: usize,
    tagger: &(dyn PosTagger + Sync),
) -> Result<(Vec<PseudoPair>, PseudoStats)> {
    build_pseudo_corpus_with(
        meetings,
        n,
        tagger,
        QuestionMode::Discourse,
        QuestionEndpoint::Source,
    )
}

/// Builds pseudo pairs with an explicit question mode and endpoint.
///
/// For each surviving question at index q the window is utterances
/// `q+1 ..= min(q+n, last)`, re-indexed from zero, with speakers preserved
/// and only those discourse annotations whose both endpoints fall inside the
/// window. Questions at the final index yield no pair.
pub fn build_pseudo_corpus_with(
    meetings: &[Meeting],
    n: usize,
    tagger: &(dyn PosTagger + Sync),
    mode: QuestionMode,
    endpoint: QuestionEndpoint,
) -> Result<(Vec<PseudoPair>, PseudoStats)> {
    if n == 0 {
        return Err(PseudoError::WindowTooSmall);
    }
    let per_meeting = par::map_slice(meetings, |meeting| {
        let questions = match mode {
            QuestionMode::Discourse => discourse_questions_with_endpoint(meeting, endpoint),
            QuestionMode::Rule => rule_based_questions(meeting),
        };
        let mut stats = PseudoStats {
            questions_found: questions.len(),
            ..PseudoStats::default()
        };
        let mut pairs = Vec::new();
        for q in questions {
            let question_tokens = &meeting.utterances[q].tokens;
            match question_filter(question_tokens, tagger) {
                Ok(true) => {}
                Ok(false) => {
                    stats.rejected_by_filter += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
            let last = meeting.utterances.len() - 1;
            if q == last {
                stats.empty_window += 1;
                continue;
            }
            let window_start = q + 1;
            let window_end = (q + n).min(last); // inclusive
            let utterances: Vec<(String, Vec<String>)> = meeting.utterances
                [window_start..=window_end]
                .iter()
                .map(|u| (u.speaker_id.clone(), u.tokens.clone()))
                .collect();
            let relations: Vec<(usize, DiscourseRelationType, usize)> = meeting
                .relations
                .iter()
                .filter(|r| {
                    (window_start..=window_end).contains(&r.source_index)
                        && (window_start..=window_end).contains(&r.target_index)
                })
                .map(|r| {
                    (
                        r.source_index - window_start,
                        r.relation,
                        r.target_index - window_start,
                    )
                })
                .collect();
            let pseudo = Meeting::new(
                format!("{}#q{q}", meeting.meeting_id),
                utterances,
                relations,
                Some(question_tokens.clone()),
            )?;
            stats.pairs += 1;
            pairs.push(PseudoPair {
                summary: question_tokens.clone(),
                meeting: pseudo,
            });
        }
        Ok((pairs, stats))
    });

    let mut all_pairs = Vec::new();
    let mut total = PseudoStats::default();
    for result in per_meeting {
        let (pairs, stats) = result?;
        total.questions_found += stats.questions_found;
        total.rejected_by_filter += stats.rejected_by_filter;
        total.empty_window += stats.empty_window;
        total.pairs += stats.pairs;
        all_pairs.extend(pairs);
    }
    Ok((all_pairs, total))
}

/// The pseudo corpus as plain meetings, ready for JSONL serialization.
pub fn pairs_to_meetings(pairs: &[PseudoPair]) -> Vec<Meeting> {
    pairs.iter().map(|p| p.meeting.clone()).collect()
}
