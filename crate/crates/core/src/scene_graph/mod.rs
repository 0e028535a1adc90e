//! Provenance-aware online scene graph.
//!
//! Nodes are rooms, furniture, objects, humans and the robot. Edges are
//! spatial relations stamped with a confidence, a source and the tick they
//! were asserted at. Edges are never removed: when several placement edges
//! (`on`, `in`, `held_by`, `at` with an object subject) compete for the same
//! object, [`SceneGraph::resolve_placement`] picks the one with the highest
//! effective confidence
//!
//! ```text
//! c_eff = confidence * 0.5^((now - asserted_at) / half_life)
//! ```
//!
//! breaking ties by recency, then source rank, then edge content. Because
//! every edge decays at the same rate, the winner does not depend on `now`
//! or on the order in which assertions arrived.

mod snapshot;
mod types;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{normalize_label, Lexicon};

pub use snapshot::GraphSnapshot;
pub use types::*;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Ticks after which an assertion's effective confidence halves.
    pub half_life_ticks: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            half_life_ticks: 6000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RejectReason {
    #[error("landmark `{0}` does not match any node")]
    UngroundableLandmark(String),
    #[error("subject `{0}` names a place that is not in the map")]
    UngroundableSubject(String),
    #[error("subject and landmark are the same node")]
    SelfReference,
    #[error("`{0}` is part of the fixed map and cannot be relocated")]
    FixedMapEntity(String),
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("label is empty after normalization")]
    EmptyLabel,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not an object")]
    NotAnObject(NodeId),
    #[error("node {node} must be a {expected:?}")]
    WrongKind { node: NodeId, expected: EntityKind },
    #[error("assertion {assertion} rejected: {reason}")]
    Rejected {
        assertion: String,
        reason: RejectReason,
    },
    #[error("malformed snapshot at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// `confidence * 0.5^((now - asserted_at) / half_life)`.
///
/// Assertions from the future (`asserted_at > now`) grow rather than decay,
/// which keeps rankings independent of `now`.
pub fn decayed_confidence(confidence: f64, asserted_at: Tick, now: Tick, half_life: f64) -> f64 {
    let age = now as f64 - asserted_at as f64;
    confidence * 0.5f64.powf(age / half_life)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneGraph {
    nodes: BTreeMap<NodeId, EntityNode>,
    edges: Vec<RelationEdge>,
    /// subject → indices into `edges` of its placement edges.
    placements: BTreeMap<NodeId, Vec<usize>>,
    lexicon: Lexicon,
    config: GraphConfig,
    tick: Tick,
    next_node: u64,
}

impl SceneGraph {
    pub fn new(config: GraphConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn advance_to(&mut self, tick: Tick) {
        self.tick = self.tick.max(tick);
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn add_synonym(&mut self, alias: &str, canonical: &str) {
        self.lexicon.add_synonym(alias, canonical);
    }

    /// Normalized label mapped through the synonym table.
    pub fn canonical_label(&self, raw: &str) -> String {
        self.lexicon.canonical(raw)
    }

    pub fn node(&self, id: NodeId) -> Option<&EntityNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &EntityNode> {
        self.nodes.values()
    }

    pub fn nodes_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &EntityNode> {
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    pub fn edges(&self) -> &[RelationEdge] {
        &self.edges
    }

    pub fn robot(&self) -> Option<&EntityNode> {
        self.nodes_of_kind(EntityKind::Robot).next()
    }

    pub fn human(&self, label: &str) -> Option<&EntityNode> {
        let label = normalize_label(label);
        self.nodes_of_kind(EntityKind::Human)
            .find(|n| n.normalized_label == label)
    }

    // ---- map construction -------------------------------------------------

    fn insert_node(
        &mut self,
        kind: EntityKind,
        label: &str,
        pose: Option<Pose>,
        tick: Tick,
    ) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        let normalized_label = self.lexicon.canonical(label);
        self.nodes.insert(
            id,
            EntityNode {
                id,
                kind,
                label: label.trim().to_string(),
                normalized_label,
                pose,
                created_at: tick,
                last_updated: tick,
            },
        );
        self.tick = self.tick.max(tick);
        id
    }

    pub fn add_room(&mut self, label: &str, pose: Pose, tick: Tick) -> NodeId {
        self.lexicon.add_place(label);
        self.insert_node(EntityKind::Room, label, Some(pose), tick)
    }

    /// Adds a furniture node together with its single `in` edge to `room`.
    pub fn add_furniture(&mut self, label: &str, pose: Pose, room: NodeId, tick: Tick) -> Result<NodeId> {
        self.expect_kind(room, EntityKind::Room)?;
        self.lexicon.add_place(label);
        let id = self.insert_node(EntityKind::Furniture, label, Some(pose), tick);
        self.push_edge(id, Relation::In, room, 1.0, Source::Geometric, tick);
        Ok(id)
    }

    pub fn add_human(&mut self, label: &str, pose: Pose, tick: Tick) -> NodeId {
        self.insert_node(EntityKind::Human, label, Some(pose), tick)
    }

    pub fn add_robot(&mut self, label: &str, pose: Pose, tick: Tick) -> NodeId {
        self.insert_node(EntityKind::Robot, label, Some(pose), tick)
    }

    /// Creates an object node; `pose` is `None` for objects known only by relation.
    pub fn add_object(&mut self, label: &str, pose: Option<Pose>, tick: Tick) -> Result<(NodeId, GraphDelta)> {
        if normalize_label(label).is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        let id = self.insert_node(EntityKind::Object, label, pose, tick);
        let mut delta = GraphDelta::empty(self.tick);
        delta.added_nodes.push(self.nodes[&id].clone());
        Ok((id, delta))
    }

    pub fn set_pose(&mut self, id: NodeId, pose: Pose, tick: Tick) -> Result<GraphDelta> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        node.pose = Some(pose);
        node.last_updated = node.last_updated.max(tick);
        let updated = node.clone();
        self.tick = self.tick.max(tick);
        let mut delta = GraphDelta::empty(self.tick);
        delta.updated_nodes.push(updated);
        Ok(delta)
    }

    fn expect_kind(&self, id: NodeId, expected: EntityKind) -> Result<&EntityNode> {
        let node = self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))?;
        if node.kind != expected {
            return Err(GraphError::WrongKind { node: id, expected });
        }
        Ok(node)
    }

    fn push_edge(
        &mut self,
        subject: NodeId,
        relation: Relation,
        object: NodeId,
        confidence: f64,
        source: Source,
        asserted_at: Tick,
    ) -> usize {
        let index = self.edges.len();
        self.edges.push(RelationEdge {
            id: EdgeId(index as u64),
            subject,
            relation,
            object,
            confidence,
            source,
            asserted_at,
        });
        if self.is_placement(&self.edges[index]) {
            self.placements.entry(subject).or_default().push(index);
        }
        self.tick = self.tick.max(asserted_at);
        index
    }

    pub fn is_placement(&self, edge: &RelationEdge) -> bool {
        edge.relation.is_placement()
            && self
                .nodes
                .get(&edge.subject)
                .is_some_and(|n| n.kind == EntityKind::Object)
    }

    // ---- grounding --------------------------------------------------------

    /// All nodes whose canonical label equals the canonical form of `label`.
    pub fn find_nodes(&self, label: &str) -> Vec<NodeId> {
        let label = self.lexicon.canonical(label);
        self.nodes
            .values()
            .filter(|n| n.normalized_label == label)
            .map(|n| n.id)
            .collect()
    }

    /// Best existing match for `label`: nearest to `reference` when given,
    /// smallest id otherwise (and among equidistant nodes).
    pub fn lookup(&self, label: &str, reference: Option<&Point3<f64>>, exclude: Option<NodeId>) -> Option<NodeId> {
        let candidates = self
            .find_nodes(label)
            .into_iter()
            .filter(|id| Some(*id) != exclude);
        match reference {
            None => candidates.min(),
            Some(reference) => candidates.min_by(|a, b| {
                let da = self.distance_to(*a, reference);
                let db = self.distance_to(*b, reference);
                da.total_cmp(&db).then(a.cmp(b))
            }),
        }
    }

    fn distance_to(&self, id: NodeId, reference: &Point3<f64>) -> f64 {
        self.nodes[&id]
            .pose
            .map_or(f64::INFINITY, |p| nalgebra::distance(&p.position, reference))
    }

    /// Maps a label onto a node, creating a provisional pose-less object
    /// node when the label is neither known nor a place name.
    pub fn ground_label(&mut self, label: &str, reference: Option<&Point3<f64>>, tick: Tick) -> Result<Grounding> {
        let canonical = self.lexicon.canonical(label);
        if canonical.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        if let Some(id) = self.lookup(&canonical, reference, None) {
            return Ok(Grounding::Existing(id));
        }
        if self.lexicon.is_place(&canonical) {
            return Ok(Grounding::Unresolved);
        }
        let (id, _) = self.add_object(&canonical, None, tick)?;
        Ok(Grounding::Provisional(id))
    }

    // ---- assertions -------------------------------------------------------

    /// Grounds and records an assertion, resolving placement conflicts.
    ///
    /// A rejected assertion leaves the graph untouched.
    pub fn apply_assertion(&mut self, a: &SemanticAssertion) -> Result<GraphDelta> {
        let reject = |reason| GraphError::Rejected {
            assertion: a.to_string(),
            reason,
        };
        if !(0.0..=1.0).contains(&a.confidence) {
            return Err(reject(RejectReason::InvalidConfidence(a.confidence)));
        }
        let subject_label = self.lexicon.canonical(&a.subject_label);
        let object_label = self.lexicon.canonical(&a.object_label);
        if subject_label.is_empty() || object_label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }

        let existing_subject = self.lookup(&subject_label, a.subject_hint.as_ref(), None);
        let landmark_reference = a.object_hint.as_ref().or(a.subject_hint.as_ref());
        let landmark = self
            .lookup(&object_label, landmark_reference, existing_subject)
            .ok_or_else(|| reject(RejectReason::UngroundableLandmark(object_label.clone())))?;

        if let Some(subject) = existing_subject {
            if subject == landmark {
                return Err(reject(RejectReason::SelfReference));
            }
            let kind = self.nodes[&subject].kind;
            if matches!(kind, EntityKind::Room | EntityKind::Furniture) {
                return Err(reject(RejectReason::FixedMapEntity(subject_label)));
            }
        } else if self.lexicon.is_place(&subject_label) {
            return Err(reject(RejectReason::UngroundableSubject(subject_label)));
        }

        let now = self.tick.max(a.asserted_at);
        let mut delta = GraphDelta::empty(now);
        let subject = match existing_subject {
            Some(id) => id,
            None => {
                let (id, added) = self.add_object(&subject_label, None, a.asserted_at)?;
                delta.merge(added);
                id
            }
        };

        let before = self.active_placement_index(subject, now);
        let index = self.push_edge(subject, a.relation, landmark, a.confidence, a.source, a.asserted_at);
        let now = self.tick;
        let after = self.active_placement_index(subject, now);

        if let Some(node) = self.nodes.get_mut(&subject) {
            node.last_updated = node.last_updated.max(a.asserted_at);
        }
        if existing_subject.is_some() {
            delta.updated_nodes.push(self.nodes[&subject].clone());
        } else if let Some(added) = delta.added_nodes.first_mut() {
            *added = self.nodes[&subject].clone();
        }
        delta.added_edges.push(self.view_at(&self.edges[index], now));
        if let Some(before) = before {
            if Some(before) != after {
                delta.superseded_edges.push(self.view_at(&self.edges[before], now));
            }
        }
        delta.tick = now;
        Ok(delta)
    }

    // ---- resolution -------------------------------------------------------

    pub fn effective_confidence(&self, edge: &RelationEdge, now: Tick) -> f64 {
        decayed_confidence(edge.confidence, edge.asserted_at, now, self.config.half_life_ticks)
    }

    /// Total order used for conflict resolution; `Greater` means `a` wins.
    fn rank_edges(&self, a: &RelationEdge, b: &RelationEdge, now: Tick) -> Ordering {
        self.effective_confidence(a, now)
            .total_cmp(&self.effective_confidence(b, now))
            .then(a.asserted_at.cmp(&b.asserted_at))
            .then(a.source.rank().cmp(&b.source.rank()))
            .then_with(|| {
                // Content identity, smaller wins, so reversed.
                (b.relation, b.object)
                    .cmp(&(a.relation, a.object))
                    .then(b.confidence.total_cmp(&a.confidence))
            })
            .then(b.id.cmp(&a.id))
    }

    fn active_placement_index(&self, object: NodeId, now: Tick) -> Option<usize> {
        self.placements.get(&object)?.iter().copied().max_by(|&a, &b| {
            self.rank_edges(&self.edges[a], &self.edges[b], now)
        })
    }

    /// The single active placement edge of `object` at `now`, if any.
    pub fn resolve_placement(&self, object: NodeId, now: Tick) -> Result<Option<&RelationEdge>> {
        let node = self.nodes.get(&object).ok_or(GraphError::UnknownNode(object))?;
        if node.kind != EntityKind::Object {
            return Err(GraphError::NotAnObject(object));
        }
        Ok(self.active_placement_index(object, now).map(|i| &self.edges[i]))
    }

    /// All placement edges recorded for `object`, oldest first.
    pub fn placement_history(&self, object: NodeId) -> Vec<&RelationEdge> {
        self.placements
            .get(&object)
            .map(|ix| ix.iter().map(|&i| &self.edges[i]).collect())
            .unwrap_or_default()
    }

    pub fn is_active(&self, edge: &RelationEdge, now: Tick) -> bool {
        if !self.is_placement(edge) {
            return true;
        }
        self.active_placement_index(edge.subject, now)
            .is_some_and(|i| self.edges[i].id == edge.id)
    }

    pub fn view_at(&self, edge: &RelationEdge, now: Tick) -> EdgeView {
        let label = |id: NodeId| {
            self.nodes
                .get(&id)
                .map(|n| n.normalized_label.clone())
                .unwrap_or_default()
        };
        EdgeView {
            edge: edge.clone(),
            active: self.is_active(edge, now),
            placement: self.is_placement(edge),
            subject_label: label(edge.subject),
            object_label: label(edge.object),
        }
    }

    // ---- queries ----------------------------------------------------------

    /// Room containing a furniture node.
    pub fn room_of(&self, furniture: NodeId) -> Option<NodeId> {
        self.edges
            .iter()
            .find(|e| {
                e.subject == furniture
                    && e.relation == Relation::In
                    && self.nodes.get(&e.object).is_some_and(|n| n.kind == EntityKind::Room)
            })
            .map(|e| e.object)
    }

    /// Furniture in `room`, ascending id.
    pub fn furniture_in_room(&self, room: NodeId) -> Vec<NodeId> {
        self.nodes_of_kind(EntityKind::Furniture)
            .filter(|f| self.room_of(f.id) == Some(room))
            .map(|f| f.id)
            .collect()
    }

    /// Follows the active placement of `label` to its support and room.
    ///
    /// When several object nodes share the label, the one with the
    /// strongest belief wins.
    pub fn locate(&self, label: &str, now: Tick) -> Option<LocationChain> {
        let mut best: Option<LocationChain> = None;
        for id in self.find_nodes(label) {
            if self.nodes[&id].kind != EntityKind::Object {
                continue;
            }
            let Some(edge) = self.active_placement_index(id, now).map(|i| &self.edges[i]) else {
                continue;
            };
            let confidence = self.effective_confidence(edge, now);
            if best.is_some_and(|b| b.confidence >= confidence) {
                continue;
            }
            let support = edge.object;
            let room = match self.nodes.get(&support).map(|n| n.kind) {
                Some(EntityKind::Room) => Some(support),
                Some(EntityKind::Furniture) => self.room_of(support),
                _ => None,
            };
            best = Some(LocationChain {
                object: id,
                support,
                room,
                confidence,
            });
        }
        best
    }

    /// Objects whose active placement targets `container`, ascending id.
    pub fn query_contents(&self, container: NodeId, now: Tick) -> Result<Vec<NodeId>> {
        if !self.nodes.contains_key(&container) {
            return Err(GraphError::UnknownNode(container));
        }
        Ok(self
            .placements
            .keys()
            .filter(|&&object| {
                self.active_placement_index(object, now)
                    .is_some_and(|i| self.edges[i].object == container)
            })
            .copied()
            .collect())
    }

    // ---- deltas & replay --------------------------------------------------

    /// Re-materializes a merged delta against the current state: node
    /// records become their latest version, nodes added within the delta are
    /// dropped from `updated_nodes`, and active flags are recomputed.
    pub fn refresh_delta(&self, delta: &mut GraphDelta) {
        let now = self.tick.max(delta.tick);
        delta.tick = now;

        let mut added = Vec::new();
        for node in &delta.added_nodes {
            if !added.contains(&node.id) {
                added.push(node.id);
            }
        }
        let mut updated = Vec::new();
        for node in &delta.updated_nodes {
            if !added.contains(&node.id) && !updated.contains(&node.id) {
                updated.push(node.id);
            }
        }
        delta.added_nodes = added.iter().filter_map(|id| self.nodes.get(id).cloned()).collect();
        delta.updated_nodes = updated.iter().filter_map(|id| self.nodes.get(id).cloned()).collect();

        let mut added_edges: Vec<EdgeId> = delta.added_edges.iter().map(|e| e.edge.id).collect();
        added_edges.sort();
        added_edges.dedup();
        delta.added_edges = added_edges
            .iter()
            .map(|id| self.view_at(&self.edges[id.0 as usize], now))
            .collect();

        let mut superseded = Vec::new();
        for view in &delta.superseded_edges {
            let id = view.edge.id;
            if added_edges.contains(&id) || superseded.contains(&id) {
                continue;
            }
            if !self.is_active(&self.edges[id.0 as usize], now) {
                superseded.push(id);
            }
        }
        delta.superseded_edges = superseded
            .iter()
            .map(|id| self.view_at(&self.edges[id.0 as usize], now))
            .collect();
    }

    /// Replays a delta produced by another graph with the same history.
    pub fn apply_delta(&mut self, delta: &GraphDelta) -> Result<()> {
        for node in delta.added_nodes.iter().chain(&delta.updated_nodes) {
            self.next_node = self.next_node.max(node.id.0 + 1);
            self.nodes.insert(node.id, node.clone());
        }
        for view in &delta.added_edges {
            let e = &view.edge;
            for endpoint in [e.subject, e.object] {
                if !self.nodes.contains_key(&endpoint) {
                    return Err(GraphError::UnknownNode(endpoint));
                }
            }
            if e.id.0 as usize != self.edges.len() {
                return Err(GraphError::Malformed {
                    line: 0,
                    column: 0,
                    message: format!("edge {} replayed out of order", e.id.0),
                });
            }
            self.push_edge(e.subject, e.relation, e.object, e.confidence, e.source, e.asserted_at);
        }
        self.tick = self.tick.max(delta.tick);
        Ok(())
    }

    /// Checks that every edge endpoint exists and that the placement index
    /// matches the edge list.
    pub fn check_integrity(&self) -> std::result::Result<(), String> {
        for e in &self.edges {
            for endpoint in [e.subject, e.object] {
                if !self.nodes.contains_key(&endpoint) {
                    return Err(format!("edge {} references missing node {endpoint}", e.id.0));
                }
            }
        }
        let indexed: usize = self.placements.values().map(Vec::len).sum();
        let counted = self.edges.iter().filter(|e| self.is_placement(e)).count();
        if indexed != counted {
            return Err(format!("placement index holds {indexed} edges, expected {counted}"));
        }
        for f in self.nodes_of_kind(EntityKind::Furniture) {
            let rooms = self
                .edges
                .iter()
                .filter(|e| e.subject == f.id && e.relation == Relation::In)
                .count();
            if rooms != 1 {
                return Err(format!("furniture {} has {rooms} room edges", f.id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
