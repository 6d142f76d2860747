//! Discourse graph construction.
//!
//! A meeting's discourse annotations are first Levi-transformed (each labeled
//! edge becomes a relation-instance vertex), then the edges are relabeled by
//! whether the relation vertex sits on the receiving or emitting end, and a
//! global vertex is appended that connects to everything in both directions.
//!
//! Vertex ordering is fixed: utterances in meeting order, relation instances
//! in annotation order, global last. This keeps construction deterministic
//! for tests and checkpoints.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::corpus::{DiscourseRelationType, Meeting};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown vertex id {0}")]
    UnknownVertex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexKind {
    Utterance,
    RelationInstance,
    Global,
}

/// What a vertex stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexPayload {
    /// Index of the utterance within the meeting.
    Utterance(usize),
    /// One instance per annotation; instances are never merged by type.
    RelationInstance(DiscourseRelationType),
    Global,
}

impl VertexPayload {
    pub fn kind(&self) -> VertexKind {
        match self {
            VertexPayload::Utterance(_) => VertexKind::Utterance,
            VertexPayload::RelationInstance(_) => VertexKind::RelationInstance,
            VertexPayload::Global => VertexKind::Global,
        }
    }
}

/// The six edge relations of the discourse graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeRelation {
    DefaultInDiscourse,
    DefaultOutDiscourse,
    ReverseInDiscourse,
    ReverseOutDiscourse,
    Global,
    SelfLoop,
}

impl EdgeRelation {
    pub const ALL: [EdgeRelation; 6] = [
        EdgeRelation::DefaultInDiscourse,
        EdgeRelation::DefaultOutDiscourse,
        EdgeRelation::ReverseInDiscourse,
        EdgeRelation::ReverseOutDiscourse,
        EdgeRelation::Global,
        EdgeRelation::SelfLoop,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EdgeRelation::DefaultInDiscourse => "default-in-discourse",
            EdgeRelation::DefaultOutDiscourse => "default-out-discourse",
            EdgeRelation::ReverseInDiscourse => "reverse-in-discourse",
            EdgeRelation::ReverseOutDiscourse => "reverse-out-discourse",
            EdgeRelation::Global => "global",
            EdgeRelation::SelfLoop => "self",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|r| *r == self).expect("member of ALL")
    }
}

impl fmt::Display for EdgeRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Intermediate Levi relations before in/out refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeviRelation {
    Default,
    Reverse,
    SelfLoop,
}

/// Levi transformation of a meeting: one vertex per utterance and per
/// annotation, default/reverse/self edges, no global vertex yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeviGraph {
    pub vertices: Vec<VertexPayload>,
    pub edges: Vec<(usize, LeviRelation, usize)>,
}

/// Turns labeled discourse edges into relation-instance vertices.
pub fn levi_transform(meeting: &Meeting) -> LeviGraph {
    let n_utt = meeting.utterances.len();
    let mut vertices: Vec<VertexPayload> =
        (0..n_utt).map(VertexPayload::Utterance).collect();
    vertices.extend(
        meeting
            .relations
            .iter()
            .map(|r| VertexPayload::RelationInstance(r.relation)),
    );
    let mut edges = Vec::new();
    for (k, ann) in meeting.relations.iter().enumerate() {
        let rel_vertex = n_utt + k;
        edges.push((ann.source_index, LeviRelation::Default, rel_vertex));
        edges.push((rel_vertex, LeviRelation::Default, ann.target_index));
        // reverse edges mirror the default ones
        edges.push((rel_vertex, LeviRelation::Reverse, ann.source_index));
        edges.push((ann.target_index, LeviRelation::Reverse, rel_vertex));
    }
    for v in 0..vertices.len() {
        edges.push((v, LeviRelation::SelfLoop, v));
    }
    LeviGraph { vertices, edges }
}

/// The full discourse graph: Levi vertices plus a global vertex, edges
/// refined into the six-relation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscourseGraph {
    pub vertices: Vec<VertexPayload>,
    pub edges: Vec<(usize, EdgeRelation, usize)>,
    /// in_adj[relation][vertex] = sources of edges arriving at vertex.
    in_adj: Vec<Vec<Vec<usize>>>,
}

impl DiscourseGraph {
    /// Assembles a graph from raw parts; only tests need this.
    #[cfg(test)]
    pub(crate) fn from_parts(
        vertices: Vec<VertexPayload>,
        edges: Vec<(usize, EdgeRelation, usize)>,
    ) -> DiscourseGraph {
        let mut in_adj = vec![vec![Vec::new(); vertices.len()]; EdgeRelation::ALL.len()];
        for (src, rel, dst) in &edges {
            in_adj[rel.index()][*dst].push(*src);
        }
        DiscourseGraph {
            vertices,
            edges,
            in_adj,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn global_vertex(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn utterance_count(&self) -> usize {
        self.vertices
            .iter()
            .filter(|v| v.kind() == VertexKind::Utterance)
            .count()
    }

    /// In-neighbors of `vertex` under `relation`: all `j` with an edge
    /// `j -> vertex` carrying that label. This is the direction messages
    /// travel during convolution.
    pub fn neighbors(
        &self,
        vertex: usize,
        relation: EdgeRelation,
    ) -> Result<&[usize], GraphError> {
        if vertex >= self.vertices.len() {
            return Err(GraphError::UnknownVertex(vertex));
        }
        Ok(&self.in_adj[relation.index()][vertex])
    }

    /// Debug-only JSON rendering; not a stability-guaranteed format.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let vertices: Vec<serde_json::Value> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(id, v)| match v {
                VertexPayload::Utterance(i) => {
                    json!({"id": id, "kind": "utterance", "utterance_index": i})
                }
                VertexPayload::RelationInstance(r) => {
                    json!({"id": id, "kind": "relation", "relation": r.label()})
                }
                VertexPayload::Global => json!({"id": id, "kind": "global"}),
            })
            .collect();
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .map(|(s, r, d)| json!([s, r.label(), d]))
            .collect();
        json!({"vertices": vertices, "edges": edges})
    }
}

/// Builds the discourse graph for a meeting.
///
/// Refinement rule: a default/reverse edge whose destination is the relation
/// vertex becomes `-in-discourse`; one whose source is the relation vertex
/// becomes `-out-discourse`.
pub fn build_discourse_graph(meeting: &Meeting) -> DiscourseGraph {
    let levi = levi_transform(meeting);
    let n_utt = meeting.utterances.len();
    let is_relation = |v: usize| v >= n_utt;

    let mut vertices = levi.vertices;
    let mut edges: Vec<(usize, EdgeRelation, usize)> = Vec::new();
    for (src, rel, dst) in &levi.edges {
        let refined = match rel {
            LeviRelation::Default if is_relation(*dst) => EdgeRelation::DefaultInDiscourse,
            LeviRelation::Default => EdgeRelation::DefaultOutDiscourse,
            LeviRelation::Reverse if is_relation(*dst) => EdgeRelation::ReverseInDiscourse,
            LeviRelation::Reverse => EdgeRelation::ReverseOutDiscourse,
            LeviRelation::SelfLoop => EdgeRelation::SelfLoop,
        };
        edges.push((*src, refined, *dst));
    }

    let global = vertices.len();
    vertices.push(VertexPayload::Global);
    edges.push((global, EdgeRelation::SelfLoop, global));
    for v in 0..global {
        edges.push((global, EdgeRelation::Global, v));
        edges.push((v, EdgeRelation::Global, global));
    }

    let mut in_adj = vec![vec![Vec::new(); vertices.len()]; EdgeRelation::ALL.len()];
    for (src, rel, dst) in &edges {
        in_adj[rel.index()][*dst].push(*src);
    }
    DiscourseGraph {
        vertices,
        edges,
        in_adj,
    }
}

/// Keeps a uniformly sampled `round(keep_fraction * |relations|)` subset of
/// the annotations; rounding is half-up, sampling is seeded, and surviving
/// annotations keep their original relative order.
pub fn drop_relations(meeting: &Meeting, keep_fraction: f64, rng_seed: u64) -> Meeting {
    assert!(
        (0.0..=1.0).contains(&keep_fraction),
        "keep_fraction must lie in [0,1]"
    );
    let n = meeting.relations.len();
    let keep = (keep_fraction * n as f64 + 0.5).floor() as usize;
    let keep = keep.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut kept: Vec<usize> = indices.into_iter().take(keep).collect();
    kept.sort_unstable();
    let mut out = meeting.clone();
    out.relations = kept.into_iter().map(|i| meeting.relations[i]).collect();
    out
}

/// Retains only annotations of the given relation type.
pub fn filter_relation_type(meeting: &Meeting, keep: DiscourseRelationType) -> Meeting {
    let mut out = meeting.clone();
    out.relations.retain(|r| r.relation == keep);
    out
}
