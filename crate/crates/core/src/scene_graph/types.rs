use std::fmt;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

/// Simulation time in ticks (0.1 s each).
pub type Tick = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Room,
    Furniture,
    Object,
    Human,
    Robot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point3<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw: Option<f64>,
}

impl Pose {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Point3::new(x, y, z),
            yaw: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub id: NodeId,
    pub kind: EntityKind,
    pub label: String,
    pub normalized_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    pub created_at: Tick,
    pub last_updated: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    On,
    In,
    Near,
    HeldBy,
    At,
}

impl Relation {
    /// Relations that locate an object. `near` does not.
    pub fn is_placement(self) -> bool {
        !matches!(self, Relation::Near)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::On => "on",
            Relation::In => "in",
            Relation::Near => "near",
            Relation::HeldBy => "held_by",
            Relation::At => "at",
        }
    }

    pub fn parse(word: &str) -> Option<Self> {
        match word.trim().to_lowercase().as_str() {
            "on" => Some(Relation::On),
            "in" => Some(Relation::In),
            "near" => Some(Relation::Near),
            "held_by" | "held by" => Some(Relation::HeldBy),
            "at" => Some(Relation::At),
            _ => None,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a piece of information came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Geometric,
    Verbal,
    Written,
    Gesture,
    Prior,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Geometric,
        Source::Verbal,
        Source::Written,
        Source::Gesture,
        Source::Prior,
    ];

    /// Confidence assigned to assertions from this source.
    pub fn base_confidence(self) -> f64 {
        match self {
            Source::Geometric => 0.9,
            Source::Verbal => 0.8,
            Source::Written => 0.7,
            Source::Gesture => 0.6,
            Source::Prior => 0.3,
        }
    }

    /// Tie-break rank; higher wins.
    pub fn rank(self) -> u8 {
        match self {
            Source::Geometric => 4,
            Source::Verbal => 3,
            Source::Written => 2,
            Source::Gesture => 1,
            Source::Prior => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub id: EdgeId,
    pub subject: NodeId,
    pub relation: Relation,
    pub object: NodeId,
    pub confidence: f64,
    pub source: Source,
    pub asserted_at: Tick,
}

/// A (subject, relation, landmark) triple expressed in labels.
///
/// The optional hints are reference positions used to disambiguate between
/// several nodes sharing a label; they are not part of the claim itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticAssertion {
    pub subject_label: String,
    pub relation: Relation,
    pub object_label: String,
    pub confidence: f64,
    pub source: Source,
    pub asserted_at: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_hint: Option<Point3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_hint: Option<Point3<f64>>,
}

impl SemanticAssertion {
    pub fn new(
        subject: impl Into<String>,
        relation: Relation,
        object: impl Into<String>,
        confidence: f64,
        source: Source,
        asserted_at: Tick,
    ) -> Self {
        Self {
            subject_label: subject.into(),
            relation,
            object_label: object.into(),
            confidence,
            source,
            asserted_at,
            subject_hint: None,
            object_hint: None,
        }
    }

    /// Uses the source's base confidence.
    pub fn from_source(
        subject: impl Into<String>,
        relation: Relation,
        object: impl Into<String>,
        source: Source,
        asserted_at: Tick,
    ) -> Self {
        Self::new(subject, relation, object, source.base_confidence(), source, asserted_at)
    }
}

impl fmt::Display for SemanticAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {:.3}, {:?}, t={})",
            self.subject_label,
            self.relation,
            self.object_label,
            self.confidence,
            self.source,
            self.asserted_at
        )
    }
}

/// An edge as seen from outside the store: the record plus materialized
/// resolution state and endpoint labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeView {
    #[serde(flatten)]
    pub edge: RelationEdge,
    pub active: bool,
    pub placement: bool,
    pub subject_label: String,
    pub object_label: String,
}

/// Everything one mutation (or one merged tick of mutations) changed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphDelta {
    pub added_nodes: Vec<EntityNode>,
    pub updated_nodes: Vec<EntityNode>,
    pub added_edges: Vec<EdgeView>,
    pub superseded_edges: Vec<EdgeView>,
    pub tick: Tick,
}

impl GraphDelta {
    pub fn empty(tick: Tick) -> Self {
        Self {
            tick,
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.updated_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.superseded_edges.is_empty()
    }

    /// Appends `other`; call `SceneGraph::refresh_delta` afterwards to
    /// re-materialize node states and active flags.
    pub fn merge(&mut self, other: GraphDelta) {
        self.tick = self.tick.max(other.tick);
        self.added_nodes.extend(other.added_nodes);
        self.updated_nodes.extend(other.updated_nodes);
        self.added_edges.extend(other.added_edges);
        self.superseded_edges.extend(other.superseded_edges);
    }
}

/// Result of mapping a label onto the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grounding {
    Existing(NodeId),
    Provisional(NodeId),
    Unresolved,
}

impl Grounding {
    pub fn node(self) -> Option<NodeId> {
        match self {
            Grounding::Existing(id) | Grounding::Provisional(id) => Some(id),
            Grounding::Unresolved => None,
        }
    }
}

/// object → support → room, with the belief in the placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationChain {
    pub object: NodeId,
    pub support: NodeId,
    pub room: Option<NodeId>,
    pub confidence: f64,
}
