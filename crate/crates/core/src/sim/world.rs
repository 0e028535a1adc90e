use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::events::{Outcome, SimEvent};
use crate::cues::{Cue, CueError};
use crate::geometry::{Aabb, Detection, Footprint, GeometricObservation};
use crate::normalize_label;
use crate::planner::Action;
use crate::scene_graph::{NodeId, Relation, SceneGraph, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step_m: f64,
    pub arrival_tolerance_m: f64,
    pub perceive_radius_m: f64,
    pub pick_range_m: f64,
    pub handover_range_m: f64,
    pub detection_score: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step_m: 0.05,
            arrival_tolerance_m: 0.05,
            perceive_radius_m: 2.0,
            pick_range_m: 0.8,
            handover_range_m: 1.0,
            detection_score: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    pub polygon: Vec<Point2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Furniture {
    pub label: String,
    pub room: String,
    pub footprint: Footprint,
    pub top_height: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label", rename_all = "snake_case")]
pub enum Holder {
    /// Resting on furniture or on a room floor.
    Support(String),
    Robot,
    Human(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub label: String,
    pub position: Point3<f64>,
    pub holder: Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Human {
    pub id: String,
    pub position: Point2<f64>,
    pub knowledge: Vec<crate::scene_graph::SemanticAssertion>,
    /// Gesture performed when asked.
    pub on_query: Option<Cue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub position: Point2<f64>,
    /// Index into `World::objects`.
    pub holding: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingCue {
    pub due: Tick,
    pub seq: u64,
    pub cue: Cue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InProgress {
    pub action: Action,
    pub started_at: Tick,
    pub travelled_m: f64,
}

/// Where plan targets are, as far as the robot knows.
pub trait TargetResolver {
    /// Normalized label and horizontal position of a node.
    fn target(&self, id: NodeId) -> Option<(String, Point2<f64>)>;
}

impl TargetResolver for SceneGraph {
    fn target(&self, id: NodeId) -> Option<(String, Point2<f64>)> {
        let node = self.node(id)?;
        let p = node.pose?.position;
        Some((node.normalized_label.clone(), Point2::new(p.x, p.y)))
    }
}

/// What the world may know about the robot's current job.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepContext<'a> {
    pub task_object: Option<&'a str>,
}

/// Ground truth. The executive only sees it through events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub rooms: Vec<Room>,
    pub furniture: Vec<Furniture>,
    pub objects: Vec<Object>,
    pub humans: Vec<Human>,
    pub robot: Robot,
    /// Next tick to be simulated.
    pub tick: Tick,
    pub seed: u64,
    pub(super) pending: Vec<PendingCue>,
    pub(super) next_seq: u64,
    pub(super) in_progress: Option<InProgress>,
}

fn xy(p: &Point3<f64>) -> Point2<f64> {
    Point2::new(p.x, p.y)
}

fn footprint_distance(f: &Footprint, p: &Point2<f64>) -> f64 {
    let dx = (f.min_x - p.x).max(0.0).max(p.x - f.max_x);
    let dy = (f.min_y - p.y).max(0.0).max(p.y - f.max_y);
    dx.hypot(dy)
}

impl World {
    pub const OBJECT_HALF_EXTENT: f64 = 0.05;

    pub(super) fn schedule(&mut self, due: Tick, cue: Cue) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.push(PendingCue::new(due, seq, cue));
    }

    /// Queues a live cue for delivery at the start of the next simulated tick.
    pub fn inject_cue(&mut self, mut cue: Cue) -> Result<SimEvent, CueError> {
        cue.validate()?;
        cue.set_tick(self.tick);
        self.schedule(self.tick, cue.clone());
        Ok(SimEvent::CueDelivered { tick: self.tick, cue })
    }

    pub fn pending_cues(&self) -> usize {
        self.pending.len()
    }

    pub fn current_action(&self) -> Option<&InProgress> {
        self.in_progress.as_ref()
    }

    pub fn held_object(&self) -> Option<&Object> {
        self.robot.holding.map(|i| &self.objects[i])
    }

    fn human(&self, id: &str) -> Option<&Human> {
        self.humans.iter().find(|h| h.id == id)
    }

    /// Simulates one tick and returns what happened, stamped with that tick.
    pub fn step(&mut self, action: Option<&Action>, targets: &dyn TargetResolver, ctx: &StepContext<'_>, config: &SimConfig) -> Vec<SimEvent> {
        let t = self.tick;
        let mut events = Vec::new();

        let mut due: Vec<PendingCue> = Vec::new();
        self.pending.retain(|p| {
            if p.due <= t {
                due.push(p.clone());
                false
            } else {
                true
            }
        });
        due.sort_by_key(|p| (p.due, p.seq));
        for p in due {
            let mut cue = p.cue;
            cue.set_tick(t);
            events.push(SimEvent::CueDelivered { tick: t, cue });
        }

        if let Some(current) = &self.in_progress {
            if Some(&current.action) != action {
                let done = self.in_progress.take().expect("checked above");
                events.push(SimEvent::ActionCompleted {
                    tick: t,
                    action: done.action,
                    outcome: Outcome::Preempted,
                    travelled_m: done.travelled_m,
                    reason: None,
                });
            }
        }
        if let Some(action) = action {
            if self.in_progress.is_none() {
                self.in_progress = Some(InProgress {
                    action: action.clone(),
                    started_at: t,
                    travelled_m: 0.0,
                });
                events.push(SimEvent::ActionStarted {
                    tick: t,
                    action: action.clone(),
                });
            }
            if let Some(result) = self.execute(action, targets, ctx, config, &mut events) {
                let done = self.in_progress.take().expect("action in progress");
                let (outcome, reason) = match result {
                    Ok(()) => (Outcome::Succeeded, None),
                    Err(reason) => (Outcome::Failed, Some(reason)),
                };
                events.push(SimEvent::ActionCompleted {
                    tick: t,
                    action: done.action,
                    outcome,
                    travelled_m: done.travelled_m,
                    reason,
                });
            }
        }

        self.tick += 1;
        events
    }

    /// `None` while the action is still running.
    fn execute(
        &mut self,
        action: &Action,
        targets: &dyn TargetResolver,
        ctx: &StepContext<'_>,
        config: &SimConfig,
        events: &mut Vec<SimEvent>,
    ) -> Option<Result<(), String>> {
        let t = self.tick;
        let target_of = |id: NodeId| targets.target(id).ok_or_else(|| format!("no known position for node {id}"));
        match action {
            Action::Navigate { target } => {
                let goal = match target_of(*target) {
                    Ok((_, p)) => p,
                    Err(e) => return Some(Err(e)),
                };
                let to_goal = goal - self.robot.position;
                let dist = to_goal.norm();
                if dist > config.arrival_tolerance_m {
                    let step = config.step_m.min(dist);
                    self.robot.position += to_goal * (step / dist);
                    if let Some(p) = &mut self.in_progress {
                        p.travelled_m += step;
                    }
                    if let Some(i) = self.robot.holding {
                        let z = self.objects[i].position.z;
                        self.objects[i].position = Point3::new(self.robot.position.x, self.robot.position.y, z);
                    }
                }
                (nalgebra::distance(&self.robot.position, &goal) <= config.arrival_tolerance_m).then_some(Ok(()))
            }
            Action::Perceive => {
                let detections = self
                    .objects
                    .iter()
                    .filter(|o| matches!(o.holder, Holder::Support(_)))
                    .filter(|o| nalgebra::distance(&xy(&o.position), &self.robot.position) <= config.perceive_radius_m)
                    .map(|o| Detection {
                        label: o.label.clone(),
                        centroid: o.position,
                        aabb: Aabb::around(o.position, Self::OBJECT_HALF_EXTENT),
                        score: config.detection_score,
                    })
                    .collect();
                events.push(SimEvent::Detected {
                    tick: t,
                    observation: GeometricObservation { detections, tick: t },
                });
                Some(Ok(()))
            }
            Action::Pick { object } => {
                if self.robot.holding.is_some() {
                    return Some(Err("hands are full".into()));
                }
                let label = normalize_label(object);
                let nearest = self
                    .objects
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| o.label == label && matches!(o.holder, Holder::Support(_)))
                    .map(|(i, o)| (i, nalgebra::distance(&xy(&o.position), &self.robot.position)))
                    .filter(|(_, d)| *d <= config.pick_range_m)
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                let Some((i, _)) = nearest else {
                    return Some(Err(format!("no {label} within {} m", config.pick_range_m)));
                };
                self.objects[i].holder = Holder::Robot;
                self.objects[i].position = Point3::new(self.robot.position.x, self.robot.position.y, 0.5);
                self.robot.holding = Some(i);
                Some(Ok(()))
            }
            Action::Handover { human } => {
                let (label, _) = match target_of(*human) {
                    Ok(t) => t,
                    Err(e) => return Some(Err(e)),
                };
                let Some(h) = self.human(&label) else {
                    return Some(Err(format!("nobody called {label} is here")));
                };
                let (id, pos) = (h.id.clone(), h.position);
                if nalgebra::distance(&pos, &self.robot.position) > config.handover_range_m {
                    return Some(Err(format!("{id} is out of reach")));
                }
                let Some(i) = self.robot.holding.take() else {
                    return Some(Err("nothing to hand over".into()));
                };
                self.objects[i].holder = Holder::Human(id);
                self.objects[i].position = Point3::new(pos.x, pos.y, 1.0);
                Some(Ok(()))
            }
            Action::Place { target } => {
                let (label, _) = match target_of(*target) {
                    Ok(t) => t,
                    Err(e) => return Some(Err(e)),
                };
                let Some(f) = self.furniture.iter().find(|f| f.label == label) else {
                    return Some(Err(format!("{label} is not a surface")));
                };
                if footprint_distance(&f.footprint, &self.robot.position) > config.handover_range_m {
                    return Some(Err(format!("{label} is out of reach")));
                }
                let (c, top, support) = (f.footprint.center(), f.top_height, f.label.clone());
                let Some(i) = self.robot.holding.take() else {
                    return Some(Err("nothing to place".into()));
                };
                self.objects[i].holder = Holder::Support(support);
                self.objects[i].position = Point3::new(c.x, c.y, top + Self::OBJECT_HALF_EXTENT);
                Some(Ok(()))
            }
            Action::QueryHuman { human } => {
                let (label, _) = match target_of(*human) {
                    Ok(t) => t,
                    Err(e) => return Some(Err(e)),
                };
                let Some(h) = self.human(&label).cloned() else {
                    return Some(Err(format!("nobody called {label} is here")));
                };
                if nalgebra::distance(&h.position, &self.robot.position) > config.handover_range_m {
                    return Some(Err(format!("{} is out of earshot", h.id)));
                }
                events.push(SimEvent::QueryAsked {
                    tick: t,
                    human: *human,
                    label: h.id.clone(),
                });
                if let Some(object) = ctx.task_object {
                    if let Some(text) = reply(&h, object) {
                        self.schedule(
                            t + 1,
                            Cue::Verbal {
                                text,
                                speaker: h.id.clone(),
                                tick: t + 1,
                            },
                        );
                    }
                    if let Some(gesture) = h.on_query.clone() {
                        self.schedule(t + 1, gesture);
                    }
                }
                Some(Ok(()))
            }
        }
    }
}

/// What a human says when asked about `object`. A human who will point
/// instead says nothing unless they know something.
fn reply(h: &Human, object: &str) -> Option<String> {
    let known: Vec<String> = h
        .knowledge
        .iter()
        .filter(|k| k.subject_label == object)
        .filter_map(|k| {
            let word = match k.relation {
                Relation::On | Relation::At => "on",
                Relation::In => "in",
                Relation::Near => "near",
                Relation::HeldBy => return None,
            };
            Some(format!("The {} is {word} the {}.", k.subject_label, k.object_label))
        })
        .collect();
    if !known.is_empty() {
        Some(known.join(" "))
    } else if h.on_query.is_none() {
        Some(format!("I don't know where the {object} is."))
    } else {
        None
    }
}
