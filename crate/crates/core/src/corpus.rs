//! Data model for discourse-annotated meetings.
//!
//! Meetings arrive as JSONL, one meeting per line:
//!
//! ```text
//! {"meeting_id": "m1",
//!  "utterances": [{"speaker": "PM", "tokens": ["hello"]}, ...],
//!  "relations": [[0, "continuation", 1], ...],
//!  "summary": ["...", ...] | null}
//! ```
//!
//! Tokens and summaries are lowercased at load time; tokenization happens
//! upstream. Relation labels form a closed set of 16; anything else is a
//! validation error.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("meeting {meeting_id}: unknown relation label \"{label}\"")]
    UnknownRelationLabel { meeting_id: String, label: String },
    #[error("meeting {meeting_id}: {message}")]
    Validation { meeting_id: String, message: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocabulary max_size {0} leaves no room for reserved tokens (need >= 5)")]
    VocabTooSmall(usize),
    #[error("split manifest references unknown meeting id \"{0}\"")]
    UnknownMeetingId(String),
    #[error("split manifest {path}: line {line}: entry before any [train]/[dev]/[test] header")]
    ManifestHeader { path: String, line: usize },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// One utterance: a speaker plus a non-empty token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    /// 0-based, contiguous position within the meeting.
    pub index: usize,
    pub speaker_id: String,
    pub tokens: Vec<String>,
}

/// The closed set of 16 dialogue discourse relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DiscourseRelationType {
    Comment,
    ClarificationQuestion,
    Elaboration,
    Acknowledgment,
    Continuation,
    Explanation,
    Conditional,
    QuestionAnswer,
    Alternation,
    QuestionElaboration,
    Result,
    Background,
    Narration,
    Correction,
    Parallel,
    Contrast,
}

impl DiscourseRelationType {
    pub const ALL: [DiscourseRelationType; 16] = [
        DiscourseRelationType::Comment,
        DiscourseRelationType::ClarificationQuestion,
        DiscourseRelationType::Elaboration,
        DiscourseRelationType::Acknowledgment,
        DiscourseRelationType::Continuation,
        DiscourseRelationType::Explanation,
        DiscourseRelationType::Conditional,
        DiscourseRelationType::QuestionAnswer,
        DiscourseRelationType::Alternation,
        DiscourseRelationType::QuestionElaboration,
        DiscourseRelationType::Result,
        DiscourseRelationType::Background,
        DiscourseRelationType::Narration,
        DiscourseRelationType::Correction,
        DiscourseRelationType::Parallel,
        DiscourseRelationType::Contrast,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DiscourseRelationType::Comment => "comment",
            DiscourseRelationType::ClarificationQuestion => "clarification-question",
            DiscourseRelationType::Elaboration => "elaboration",
            DiscourseRelationType::Acknowledgment => "acknowledgment",
            DiscourseRelationType::Continuation => "continuation",
            DiscourseRelationType::Explanation => "explanation",
            DiscourseRelationType::Conditional => "conditional",
            DiscourseRelationType::QuestionAnswer => "question-answer",
            DiscourseRelationType::Alternation => "alternation",
            DiscourseRelationType::QuestionElaboration => "question-elaboration",
            DiscourseRelationType::Result => "result",
            DiscourseRelationType::Background => "background",
            DiscourseRelationType::Narration => "narration",
            DiscourseRelationType::Correction => "correction",
            DiscourseRelationType::Parallel => "parallel",
            DiscourseRelationType::Contrast => "contrast",
        }
    }

    /// Stable index into `ALL`, used for embedding lookup.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|r| *r == self).expect("member of ALL")
    }
}

impl fmt::Display for DiscourseRelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DiscourseRelationType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.label() == s)
            .ok_or_else(|| format!("unknown relation label \"{s}\""))
    }
}

impl TryFrom<String> for DiscourseRelationType {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<DiscourseRelationType> for String {
    fn from(r: DiscourseRelationType) -> String {
        r.label().to_string()
    }
}

/// A labeled discourse edge between two utterances of one meeting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscourseAnnotation {
    pub source_index: usize,
    pub relation: DiscourseRelationType,
    pub target_index: usize,
}

/// A meeting: ordered utterances, discourse annotations, optional reference
/// summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Meeting {
    pub meeting_id: String,
    pub utterances: Vec<Utterance>,
    pub relations: Vec<DiscourseAnnotation>,
    pub reference_summary: Option<Vec<String>>,
}

impl Meeting {
    /// Builds and validates a meeting from raw parts, lowercasing tokens.
    pub fn new(
        meeting_id: String,
        utterances: Vec<(String, Vec<String>)>,
        relations: Vec<(usize, DiscourseRelationType, usize)>,
        reference_summary: Option<Vec<String>>,
    ) -> Result<Meeting> {
        let utterances = utterances
            .into_iter()
            .enumerate()
            .map(|(index, (speaker_id, tokens))| Utterance {
                index,
                speaker_id,
                tokens: tokens.into_iter().map(|t| t.to_lowercase()).collect(),
            })
            .collect();
        let relations = relations
            .into_iter()
            .map(|(source_index, relation, target_index)| DiscourseAnnotation {
                source_index,
                relation,
                target_index,
            })
            .collect();
        let meeting = Meeting {
            meeting_id,
            utterances,
            relations,
            reference_summary: reference_summary
                .map(|s| s.into_iter().map(|t| t.to_lowercase()).collect()),
        };
        meeting.validate()?;
        Ok(meeting)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |message: String| CorpusError::Validation {
            meeting_id: self.meeting_id.clone(),
            message,
        };
        if self.utterances.is_empty() {
            return Err(err("meeting has no utterances".into()));
        }
        for (pos, utt) in self.utterances.iter().enumerate() {
            if utt.index != pos {
                return Err(err(format!(
                    "utterance index {} at position {pos} is not contiguous",
                    utt.index
                )));
            }
            if utt.tokens.is_empty() {
                return Err(err(format!("utterance {pos} has no tokens")));
            }
        }
        let n = self.utterances.len();
        for rel in &self.relations {
            if rel.source_index >= n || rel.target_index >= n {
                return Err(err(format!(
                    "relation ({}, {}, {}) out of range for {n} utterances",
                    rel.source_index, rel.relation, rel.target_index
                )));
            }
            if rel.source_index == rel.target_index {
                return Err(err(format!(
                    "relation ({}, {}, {}) is a self edge",
                    rel.source_index, rel.relation, rel.target_index
                )));
            }
        }
        Ok(())
    }

    /// All source-side tokens in meeting order, flattened across utterances.
    pub fn flat_tokens(&self) -> impl Iterator<Item = &String> {
        self.utterances.iter().flat_map(|u| u.tokens.iter())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct UtteranceJson {
    speaker: String,
    tokens: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MeetingJson {
    meeting_id: String,
    utterances: Vec<UtteranceJson>,
    relations: Vec<(usize, String, usize)>,
    summary: Option<Vec<String>>,
}

fn meeting_from_json(raw: MeetingJson) -> Result<Meeting> {
    let mut relations = Vec::with_capacity(raw.relations.len());
    for (src, label, tgt) in raw.relations {
        let relation =
            label
                .parse::<DiscourseRelationType>()
                .map_err(|_| CorpusError::UnknownRelationLabel {
                    meeting_id: raw.meeting_id.clone(),
                    label,
                })?;
        relations.push((src, relation, tgt));
    }
    Meeting::new(
        raw.meeting_id,
        raw.utterances
            .into_iter()
            .map(|u| (u.speaker, u.tokens))
            .collect(),
        relations,
        raw.summary,
    )
}

fn meeting_to_json(meeting: &Meeting) -> MeetingJson {
    MeetingJson {
        meeting_id: meeting.meeting_id.clone(),
        utterances: meeting
            .utterances
            .iter()
            .map(|u| UtteranceJson {
                speaker: u.speaker_id.clone(),
                tokens: u.tokens.clone(),
            })
            .collect(),
        relations: meeting
            .relations
            .iter()
            .map(|r| (r.source_index, r.relation.label().to_string(), r.target_index))
            .collect(),
        summary: meeting.reference_summary.clone(),
    }
}

/// Loads meetings from a JSONL file, validating every invariant.
pub fn load_meetings(path: impl AsRef<Path>) -> Result<Vec<Meeting>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_meetings(&text)
}

/// Parses JSONL text; line numbers are 1-based in errors.
pub fn parse_meetings(text: &str) -> Result<Vec<Meeting>> {
    let mut meetings = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: MeetingJson = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        meetings.push(meeting_from_json(raw)?);
    }
    Ok(meetings)
}

/// Serializes meetings back to the JSONL wire format.
pub fn meetings_to_jsonl(meetings: &[Meeting]) -> String {
    let mut out = String::new();
    for m in meetings {
        out.push_str(&serde_json::to_string(&meeting_to_json(m)).expect("meeting serializes"));
        out.push('\n');
    }
    out
}

pub fn save_meetings(path: impl AsRef<Path>, meetings: &[Meeting]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, meetings_to_jsonl(meetings)).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

pub const DEFAULT_VOCAB_SIZE: usize = 5806;

/// Frequency-ranked word table with four reserved slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_word: Vec<String>,
    #[serde(skip)]
    word_to_id: HashMap<String, usize>,
    max_size: usize,
}

impl Vocabulary {
    fn from_words(words: Vec<String>, max_size: usize) -> Vocabulary {
        let mut id_to_word: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_word.extend(words);
        let word_to_id = id_to_word
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary {
            id_to_word,
            word_to_id,
            max_size,
        }
    }

    /// Rebuilds the lookup map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.word_to_id = self
            .id_to_word
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_word.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id_of(&self, word: &str) -> Option<usize> {
        self.word_to_id.get(word).copied()
    }

    pub fn word_of(&self, id: usize) -> Option<&str> {
        self.id_to_word.get(id).map(|s| s.as_str())
    }

    /// UNK-backed lookup.
    pub fn id_or_unk(&self, word: &str) -> usize {
        self.id_of(word).unwrap_or(UNK_ID)
    }

    pub fn words(&self) -> &[String] {
        &self.id_to_word
    }
}

/// Builds a vocabulary of at most `max_size` entries (including the four
/// reserved tokens) from utterance tokens and reference summaries. Words are
/// ranked by frequency; ties break toward earlier first occurrence.
pub fn build_vocabulary(meetings: &[Meeting], max_size: usize) -> Result<Vocabulary> {
    if max_size < RESERVED.len() + 1 {
        return Err(CorpusError::VocabTooSmall(max_size));
    }
    if meetings.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    // word -> (count, first-occurrence position)
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let mut order = 0usize;
    let mut count_token = |counts: &mut HashMap<String, (usize, usize)>, word: &str| {
        // tokens spelled like reserved literals would break bijectivity
        if !RESERVED.contains(&word) {
            let entry = counts.entry(word.to_string()).or_insert((0, order));
            entry.0 += 1;
        }
        order += 1;
    };
    for m in meetings {
        for tok in m.flat_tokens() {
            count_token(&mut counts, tok);
        }
        if let Some(summary) = &m.reference_summary {
            for tok in summary {
                count_token(&mut counts, tok);
            }
        }
    }
    if counts.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut ranked: Vec<(String, (usize, usize))> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let capacity = max_size - RESERVED.len();
    let words = ranked
        .into_iter()
        .take(capacity)
        .map(|(w, _)| w)
        .collect();
    Ok(Vocabulary::from_words(words, max_size))
}

/// Maps each distinct out-of-vocabulary source word of one meeting to a
/// temporary id starting at `vocab.len()`, in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtendedVocab {
    word_to_id: HashMap<String, usize>,
    id_to_word: Vec<String>,
    base: usize,
}

impl ExtendedVocab {
    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_word.is_empty()
    }

    pub fn id_of(&self, word: &str) -> Option<usize> {
        self.word_to_id.get(word).copied()
    }

    /// De-references an extended id back to its unique source word.
    pub fn word_of(&self, id: usize) -> Option<&str> {
        id.checked_sub(self.base)
            .and_then(|i| self.id_to_word.get(i))
            .map(|s| s.as_str())
    }

    pub fn base(&self) -> usize {
        self.base
    }
}

/// Encodes a meeting's tokens for the copy mechanism: in-vocabulary words map
/// to their ids, out-of-vocabulary words to consistent extended ids.
pub fn encode_for_copy(vocab: &Vocabulary, meeting: &Meeting) -> (Vec<Vec<usize>>, ExtendedVocab) {
    let mut extended = ExtendedVocab {
        base: vocab.len(),
        ..ExtendedVocab::default()
    };
    let ids = meeting
        .utterances
        .iter()
        .map(|u| {
            u.tokens
                .iter()
                .map(|tok| match vocab.id_of(tok) {
                    Some(id) => id,
                    None => match extended.word_to_id.get(tok) {
                        Some(&id) => id,
                        None => {
                            let id = extended.base + extended.id_to_word.len();
                            extended.word_to_id.insert(tok.clone(), id);
                            extended.id_to_word.push(tok.clone());
                            id
                        }
                    },
                })
                .collect()
        })
        .collect();
    (ids, extended)
}

/// Meeting-id lists under `[train]`, `[dev]`, `[test]` headers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

pub fn parse_split_manifest(path: impl AsRef<Path>) -> Result<SplitManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut manifest = SplitManifest::default();
    let mut current: Option<&mut Vec<String>> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[train]" => current = Some(&mut manifest.train),
            "[dev]" => current = Some(&mut manifest.dev),
            "[test]" => current = Some(&mut manifest.test),
            id => match current {
                Some(ref mut section) => section.push(id.to_string()),
                None => {
                    return Err(CorpusError::ManifestHeader {
                        path: path.display().to_string(),
                        line: i + 1,
                    })
                }
            },
        }
    }
    Ok(manifest)
}

/// Meetings partitioned by the manifest.
#[derive(Debug, Clone, Default)]
pub struct CorpusSplits {
    pub train: Vec<Meeting>,
    pub dev: Vec<Meeting>,
    pub test: Vec<Meeting>,
}

/// Applies a manifest to a loaded corpus; every listed id must exist.
pub fn apply_split(meetings: &[Meeting], manifest: &SplitManifest) -> Result<CorpusSplits> {
    let by_id: HashMap<&str, &Meeting> = meetings
        .iter()
        .map(|m| (m.meeting_id.as_str(), m))
        .collect();
    let pick = |ids: &[String]| -> Result<Vec<Meeting>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|m| (*m).clone())
                    .ok_or_else(|| CorpusError::UnknownMeetingId(id.clone()))
            })
            .collect()
    };
    Ok(CorpusSplits {
        train: pick(&manifest.train)?,
        dev: pick(&manifest.dev)?,
        test: pick(&manifest.test)?,
    })
}
