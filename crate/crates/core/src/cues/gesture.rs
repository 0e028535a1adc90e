use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::grammar::utterance_subject;
use crate::scene_graph::{EntityKind, NodeId, Relation, SceneGraph, SemanticAssertion, Source, Tick};

/// Who a resolved gesture is about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label", rename_all = "snake_case")]
pub enum GestureSubject {
    Named(String),
    /// No object named; the caller binds the active task's object.
    TaskObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureResolution {
    pub subject: GestureSubject,
    pub target: NodeId,
    pub target_label: String,
    pub deviation_rad: f64,
    pub distance_m: f64,
}

impl GestureResolution {
    /// `(subject, at, target)` at the gesture base confidence, or `None`
    /// when the subject is the task object and there is no task.
    pub fn bind(&self, task_object: Option<&str>, tick: Tick) -> Option<SemanticAssertion> {
        let subject = match &self.subject {
            GestureSubject::Named(label) => label.as_str(),
            GestureSubject::TaskObject => task_object?,
        };
        Some(SemanticAssertion::from_source(
            subject,
            Relation::At,
            self.target_label.clone(),
            Source::Gesture,
            tick,
        ))
    }
}

/// Angle between `direction` and the ray from `origin` to `point`.
/// `None` when the point coincides with the origin.
pub fn angular_deviation(origin: &Point3<f64>, direction: &Vector3<f64>, point: &Point3<f64>) -> Option<f64> {
    let to = point - origin;
    if to.norm() == 0.0 {
        return None;
    }
    Some(direction.cross(&to).norm().atan2(direction.dot(&to)))
}

/// Furniture the pointing ray best aims at, within `half_angle_rad`.
/// Ties go to the nearer piece, then the lower id.
pub fn resolve_gesture(
    origin: &Point3<f64>,
    direction: &Vector3<f64>,
    utterance: Option<&str>,
    graph: &SceneGraph,
    half_angle_rad: f64,
) -> Option<GestureResolution> {
    let best = graph
        .nodes_of_kind(EntityKind::Furniture)
        .filter_map(|n| {
            let p = n.pose?.position;
            let theta = angular_deviation(origin, direction, &p)?;
            (theta <= half_angle_rad).then(|| (theta, nalgebra::distance(origin, &p), n))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.id.cmp(&b.2.id)));
    let Some((deviation_rad, distance_m, node)) = best else {
        tracing::debug!(?origin, ?direction, "no furniture inside the pointing cone");
        return None;
    };
    let subject = match utterance.and_then(utterance_subject) {
        Some(label) => GestureSubject::Named(graph.canonical_label(&label)),
        None => GestureSubject::TaskObject,
    };
    Some(GestureResolution {
        subject,
        target: node.id,
        target_label: node.normalized_label.clone(),
        deviation_rad,
        distance_m,
    })
}
