//! Geometric detections to semantic relations.
//!
//! Rule-based relation extraction over axis-aligned geometry: an object is
//! `on` a surface when its footprint centroid lies over the surface and its
//! bottom touches the surface top, otherwise `in` whichever room contains
//! it. Detections that share a support and lie within the near radius are
//! `near` each other.

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene_graph::{
    EntityKind, GraphDelta, GraphError, NodeId, Pose, Relation, SceneGraph, SemanticAssertion, Source, Tick,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Max distance between an object's bottom and a surface top for `on`.
    pub support_gap_m: f64,
    pub near_radius_m: f64,
    /// Re-detections closer than this to a known object reuse its node.
    pub association_radius_m: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            support_gap_m: 0.05,
            near_radius_m: 1.0,
            association_radius_m: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),
    #[error("detection `{label}` is invalid: {reason}")]
    InvalidDetection { label: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn around(center: Point3<f64>, half_extent: f64) -> Self {
        let h = nalgebra::Vector3::repeat(half_extent);
        Self {
            min: center - h,
            max: center + h,
        }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub centroid: Point3<f64>,
    pub aabb: Aabb,
    pub score: f64,
}

impl Detection {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let invalid = |reason: &str| GeometryError::InvalidDetection {
            label: self.label.clone(),
            reason: reason.to_string(),
        };
        if crate::normalize_label(&self.label).is_empty() {
            return Err(invalid("empty label"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(invalid("score outside [0, 1]"));
        }
        if (0..3).any(|i| self.aabb.min[i] > self.aabb.max[i]) {
            return Err(invalid("aabb min exceeds max"));
        }
        if !self.aabb.contains(&self.centroid) {
            return Err(invalid("centroid outside aabb"));
        }
        Ok(())
    }
}

/// Detections from one perception pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricObservation {
    pub detections: Vec<Detection>,
    #[serde(default)]
    pub tick: Tick,
}

/// Axis-aligned 2D rectangle, serialized as `[min_x, min_y, max_x, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Footprint {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl From<[f64; 4]> for Footprint {
    fn from([min_x, min_y, max_x, max_y]: [f64; 4]) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }
}

impl From<Footprint> for [f64; 4] {
    fn from(f: Footprint) -> Self {
        [f.min_x, f.min_y, f.max_x, f.max_y]
    }
}

impl Footprint {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.min_x <= x && x <= self.max_x && self.min_y <= y && y <= self.max_y
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub furniture: NodeId,
    pub footprint: Footprint,
    pub top_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomModel {
    pub room: NodeId,
    pub polygon: Vec<Point2<f64>>,
}

/// True iff the detection's horizontal centroid is over the footprint and
/// its bottom is within `max_gap` of the surface top.
pub fn support_test(d: &Detection, s: &SurfaceModel, max_gap: f64) -> bool {
    s.footprint.contains(d.centroid.x, d.centroid.y) && (d.aabb.min.z - s.top_height).abs() <= max_gap
}

fn is_left(a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)
}

fn on_segment(a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>) -> bool {
    const EPS: f64 = 1e-9;
    let len = nalgebra::distance(a, b);
    if len == 0.0 {
        return nalgebra::distance(a, p) <= EPS;
    }
    if is_left(a, b, p).abs() > EPS * len {
        return false;
    }
    let t = (p - a).dot(&(b - a));
    -EPS <= t && t <= len * len + EPS
}

/// Point-in-polygon by winding number; points on the boundary are inside.
pub fn containment_test(p: &Point2<f64>, polygon: &[Point2<f64>]) -> Result<bool, GeometryError> {
    if polygon.len() < 3 {
        return Err(GeometryError::DegeneratePolygon(polygon.len()));
    }
    let mut winding = 0i32;
    for (i, a) in polygon.iter().enumerate() {
        let b = &polygon[(i + 1) % polygon.len()];
        if on_segment(a, b, p) {
            return Ok(true);
        }
        if a.y <= p.y {
            if b.y > p.y && is_left(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && is_left(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    Ok(winding != 0)
}

/// Placement landmark chosen for a single detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub landmark: NodeId,
    pub relation: Relation,
}

/// The supporting surface with the smallest gap (ties by id), else the
/// containing room with the smallest id.
pub fn placement_for(
    d: &Detection,
    surfaces: &[SurfaceModel],
    rooms: &[RoomModel],
    config: &GeometryConfig,
) -> Option<Placement> {
    let surface = surfaces
        .iter()
        .filter(|s| support_test(d, s, config.support_gap_m))
        .min_by(|a, b| {
            let ga = (d.aabb.min.z - a.top_height).abs();
            let gb = (d.aabb.min.z - b.top_height).abs();
            ga.total_cmp(&gb).then(a.furniture.cmp(&b.furniture))
        });
    if let Some(s) = surface {
        return Some(Placement {
            landmark: s.furniture,
            relation: Relation::On,
        });
    }
    let xy = Point2::new(d.centroid.x, d.centroid.y);
    rooms
        .iter()
        .filter(|r| containment_test(&xy, &r.polygon).unwrap_or(false))
        .map(|r| r.room)
        .min()
        .map(|room| Placement {
            landmark: room,
            relation: Relation::In,
        })
}

/// Turns one observation into assertions: at most one placement per
/// detection plus mutual `near` relations between detections sharing a
/// support.
pub fn extract_relations(
    obs: &GeometricObservation,
    graph: &SceneGraph,
    surfaces: &[SurfaceModel],
    rooms: &[RoomModel],
    config: &GeometryConfig,
) -> Vec<SemanticAssertion> {
    let confidence = |d: &Detection| d.score * Source::Geometric.base_confidence();
    let placements: Vec<Option<(Placement, &crate::scene_graph::EntityNode)>> = obs
        .detections
        .iter()
        .map(|d| {
            let p = placement_for(d, surfaces, rooms, config)?;
            graph.node(p.landmark).map(|node| (p, node))
        })
        .collect();

    let mut out = Vec::new();
    for (i, d) in obs.detections.iter().enumerate() {
        let Some((placement, landmark)) = placements[i] else {
            continue;
        };
        let mut a = SemanticAssertion::new(
            &d.label,
            placement.relation,
            &landmark.normalized_label,
            confidence(d),
            Source::Geometric,
            obs.tick,
        );
        a.subject_hint = Some(d.centroid);
        a.object_hint = landmark.pose.map(|p| p.position);
        out.push(a);

        for (j, other) in obs.detections.iter().enumerate() {
            if i == j {
                continue;
            }
            let same_level = placements[j].is_some_and(|(p, _)| p.landmark == placement.landmark);
            if same_level && nalgebra::distance(&d.centroid, &other.centroid) <= config.near_radius_m {
                let mut near = SemanticAssertion::new(
                    &d.label,
                    Relation::Near,
                    &other.label,
                    confidence(d),
                    Source::Geometric,
                    obs.tick,
                );
                near.subject_hint = Some(d.centroid);
                near.object_hint = Some(other.centroid);
                out.push(near);
            }
        }
    }
    out
}

/// Finds or creates the object node for a detection and moves it to the
/// detected centroid.
///
/// A pose-less node with the same label (an object so far known only from
/// cues) is adopted when no posed node is close enough.
pub fn associate_detection(
    d: &Detection,
    graph: &mut SceneGraph,
    tick: Tick,
    config: &GeometryConfig,
) -> Result<(NodeId, GraphDelta), GraphError> {
    let label = graph.canonical_label(&d.label);
    let candidates: Vec<_> = graph
        .nodes_of_kind(EntityKind::Object)
        .filter(|n| n.normalized_label == label)
        .map(|n| (n.id, n.pose.map(|p| nalgebra::distance(&p.position, &d.centroid))))
        .collect();

    let nearest = candidates
        .iter()
        .filter_map(|&(id, dist)| dist.filter(|&x| x <= config.association_radius_m).map(|x| (id, x)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id);
    let unposed = candidates.iter().filter(|(_, dist)| dist.is_none()).map(|(id, _)| *id).min();

    let pose = Pose {
        position: d.centroid,
        yaw: None,
    };
    match nearest.or(unposed) {
        Some(id) => Ok((id, graph.set_pose(id, pose, tick)?)),
        None => {
            let (id, mut delta) = graph.add_object(&d.label, Some(pose), tick)?;
            graph.refresh_delta(&mut delta);
            Ok((id, delta))
        }
    }
}
