//! Fetch-task planning over the scene graph.
//!
//! A plan is a flat action list. With a confident belief about where the
//! object is, the robot drives there, looks, picks and delivers. Without one
//! it visits candidate furniture in prior order and relies on perception (or
//! a cue) producing a belief, at which point the executive replans.

mod command;
mod priors;

use std::collections::BTreeSet;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene_graph::{EntityKind, GraphDelta, NodeId, SceneGraph, Tick};

pub use command::{parse_command, Destination, Task, TaskStatus};
pub use priors::PriorTable;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("cannot parse command `{0}`")]
    UnparseableCommand(String),
    #[error("invalid prior table: {0}")]
    InvalidPriors(String),
    #[error("task {0} is not active")]
    TaskNotActive(u64),
    #[error("no furniture to search")]
    NoCandidates,
    #[error("no human labelled `{0}` to hand over to")]
    NoOperator(String),
    #[error("graph has no robot node")]
    NoRobot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Belief above which a location counts as known.
    pub belief_threshold: f64,
    /// Score given to furniture neither hinted nor in the prior table.
    pub fallback_score: f64,
    /// Humans this close to the search route get asked first.
    pub query_radius_m: f64,
    pub operator_label: String,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            belief_threshold: 0.5,
            fallback_score: 0.05,
            query_radius_m: 1.5,
            operator_label: "operator".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Navigate { target: NodeId },
    Perceive,
    QueryHuman { human: NodeId },
    Pick { object: String },
    Handover { human: NodeId },
    Place { target: NodeId },
}

impl Action {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Action::Handover { .. } | Action::Place { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub task: u64,
    pub actions: Vec<Action>,
    pub cursor: usize,
    pub revision: u32,
    pub created_at: Tick,
}

impl Plan {
    pub fn current(&self) -> Option<&Action> {
        self.actions.get(self.cursor)
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.actions.len()
    }

    /// Target of the first `Navigate` at or after the cursor.
    pub fn next_navigation_target(&self) -> Option<NodeId> {
        self.actions[self.cursor.min(self.actions.len())..].iter().find_map(|a| match a {
            Action::Navigate { target } => Some(*target),
            _ => None,
        })
    }

    pub fn first_navigation_target(&self) -> Option<NodeId> {
        self.actions.iter().find_map(|a| match a {
            Action::Navigate { target } => Some(*target),
            _ => None,
        })
    }
}

/// A place to search, with the score that ranked it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node: NodeId,
    pub score: f64,
    /// True when the score is a belief from the graph rather than a prior.
    pub believed: bool,
}

fn xy(graph: &SceneGraph, id: NodeId) -> Option<Point2<f64>> {
    graph.node(id)?.pose.map(|p| Point2::new(p.position.x, p.position.y))
}

/// Distance from `p` to segment `ab`.
pub fn segment_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return nalgebra::distance(p, a);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    nalgebra::distance(p, &(a + ab * t))
}

pub fn polyline_distance(p: &Point2<f64>, route: &[Point2<f64>]) -> f64 {
    match route {
        [] => f64::INFINITY,
        [only] => nalgebra::distance(p, only),
        _ => route
            .windows(2)
            .map(|w| segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Planner {
    pub priors: PriorTable,
    pub config: PlannerConfig,
}

impl Planner {
    pub fn new(priors: PriorTable, config: PlannerConfig) -> Self {
        Self { priors, config }
    }

    /// Where to look for the task object, best first.
    ///
    /// A confident belief is returned alone. Otherwise: the search hint
    /// (a room hint expands to its furniture), then prior-table furniture,
    /// then every other furniture node at the fallback score. Ordered by
    /// score, then prior rank, then id.
    pub fn candidate_locations(&self, task: &Task, graph: &SceneGraph, now: Tick) -> Vec<Candidate> {
        let object = graph.canonical_label(&task.object_label);
        let mut room_hint = None;
        if let Some(chain) = graph.locate(&object, now) {
            if chain.confidence >= self.config.belief_threshold {
                match graph.node(chain.support).map(|n| n.kind) {
                    Some(EntityKind::Furniture | EntityKind::Human) => {
                        return vec![Candidate {
                            node: chain.support,
                            score: chain.confidence,
                            believed: true,
                        }]
                    }
                    Some(EntityKind::Room) => room_hint = Some((chain.support, chain.confidence)),
                    _ => return Vec::new(),
                }
            }
        }

        let priors = self.priors.get(&object);
        let prior_rank = |id: NodeId| {
            let label = &graph.node(id).expect("candidate exists").normalized_label;
            priors.iter().position(|(f, _)| f == label).unwrap_or(usize::MAX)
        };
        let is_furniture = |id: &NodeId| graph.node(*id).is_some_and(|n| n.kind == EntityKind::Furniture);

        let mut scored: Vec<(NodeId, f64)> = Vec::new();
        let mut offer = |id: NodeId, score: f64| match scored.iter_mut().find(|(n, _)| *n == id) {
            Some(entry) => entry.1 = entry.1.max(score),
            None => scored.push((id, score)),
        };

        if let Some((room, belief)) = room_hint {
            for f in graph.furniture_in_room(room) {
                offer(f, belief);
            }
        }
        if let Some(hint) = &task.search_hint {
            for id in graph.find_nodes(hint) {
                match graph.node(id).map(|n| n.kind) {
                    Some(EntityKind::Furniture) => offer(id, 1.0),
                    Some(EntityKind::Room) => graph.furniture_in_room(id).into_iter().for_each(|f| offer(f, 1.0)),
                    _ => {}
                }
            }
        }
        for (label, score) in priors {
            for id in graph.find_nodes(label).into_iter().filter(is_furniture) {
                offer(id, *score);
            }
        }
        for f in graph.nodes_of_kind(EntityKind::Furniture) {
            offer(f.id, self.config.fallback_score);
        }

        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| prior_rank(a.0).cmp(&prior_rank(b.0)))
                .then(a.0.cmp(&b.0))
        });
        scored
            .into_iter()
            .map(|(node, score)| Candidate {
                node,
                score,
                believed: false,
            })
            .collect()
    }

    /// Builds a fresh plan (revision 0). Humans in `already_asked` are not
    /// queried again.
    pub fn plan(&self, task: &Task, graph: &SceneGraph, now: Tick, already_asked: &BTreeSet<NodeId>) -> Result<Plan, PlanError> {
        if !task.is_active() {
            return Err(PlanError::TaskNotActive(task.id));
        }
        let robot = graph.robot().ok_or(PlanError::NoRobot)?;
        let operator = graph
            .human(&self.config.operator_label)
            .ok_or_else(|| PlanError::NoOperator(self.config.operator_label.clone()))?
            .id;
        if graph.nodes_of_kind(EntityKind::Furniture).next().is_none() {
            return Err(PlanError::NoCandidates);
        }

        let object = graph.canonical_label(&task.object_label);
        let held = graph
            .locate(&object, now)
            .is_some_and(|chain| graph.node(chain.support).is_some_and(|n| n.kind == EntityKind::Robot));

        let mut actions = Vec::new();
        if !held {
            let candidates: Vec<Candidate> = self
                .candidate_locations(task, graph, now)
                .into_iter()
                .filter(|c| xy(graph, c.node).is_some())
                .collect();
            if candidates.is_empty() {
                return Err(PlanError::NoCandidates);
            }
            if !candidates[0].believed {
                let mut route = vec![xy(graph, robot.id).ok_or(PlanError::NoRobot)?];
                route.extend(candidates.iter().filter_map(|c| xy(graph, c.node)));
                let informant = graph
                    .nodes_of_kind(EntityKind::Human)
                    .filter(|h| h.id != operator && !already_asked.contains(&h.id))
                    .filter_map(|h| Some((h.id, polyline_distance(&xy(graph, h.id)?, &route))))
                    .filter(|(_, d)| *d <= self.config.query_radius_m)
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                if let Some((human, _)) = informant {
                    actions.push(Action::Navigate { target: human });
                    actions.push(Action::QueryHuman { human });
                }
            }
            for c in &candidates {
                actions.push(Action::Navigate { target: c.node });
                actions.push(Action::Perceive);
                if c.believed {
                    actions.push(Action::Pick { object: object.clone() });
                    break;
                }
            }
        }
        match task.destination {
            Destination::OperatorHandover => {
                actions.push(Action::Navigate { target: operator });
                actions.push(Action::Handover { human: operator });
            }
            Destination::Node(target) => {
                actions.push(Action::Navigate { target });
                actions.push(Action::Place { target });
            }
        }
        Ok(Plan {
            task: task.id,
            actions,
            cursor: 0,
            revision: 0,
            created_at: now,
        })
    }

    /// Fresh plan with the revision bumped. Completed picks are not
    /// repeated: a held object yields a delivery-only plan.
    pub fn replan(
        &self,
        task: &Task,
        graph: &SceneGraph,
        old: &Plan,
        now: Tick,
        already_asked: &BTreeSet<NodeId>,
    ) -> Result<Plan, PlanError> {
        let mut plan = self.plan(task, graph, now, already_asked)?;
        plan.revision = old.revision + 1;
        Ok(plan)
    }
}

/// Whether a delta changes where the task object is believed to be.
///
/// Counts active placement edges about the task object that were added in
/// the delta, unless they merely replace an edge to the same landmark
/// (a re-observation).
pub fn is_relevant(delta: &GraphDelta, task: &Task) -> bool {
    delta.added_edges.iter().any(|e| {
        e.active
            && e.placement
            && e.subject_label == task.object_label
            && !delta
                .superseded_edges
                .iter()
                .any(|s| s.edge.subject == e.edge.subject && s.edge.object == e.edge.object)
    })
}

#[cfg(test)]
mod tests;
