//! Turning environment-embedded cues into assertions and a decision about
//! whether to update the graph and whether to replan.

mod client;
mod grammar;
mod gesture;

use std::time::{Duration, Instant};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometricObservation, GeometryError};
use crate::planner::Task;
use crate::scene_graph::{EntityKind, SceneGraph, SemanticAssertion, Source, Tick};

pub use client::{ClientError, GrammarClient, InterpreterClient, InterpreterRequest, InterpreterResponse};
pub use gesture::{angular_deviation, resolve_gesture, GestureResolution, GestureSubject};
pub use grammar::{interpret_statement, utterance_subject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Cue {
    Verbal {
        text: String,
        /// Label of the speaking human.
        speaker: String,
        #[serde(default)]
        tick: Tick,
    },
    Written {
        text: String,
        seen_at: Point3<f64>,
        #[serde(default)]
        tick: Tick,
    },
    Gesture {
        origin: Point3<f64>,
        direction: Vector3<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        utterance: Option<String>,
        #[serde(default)]
        tick: Tick,
    },
    GeometricObservation(GeometricObservation),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CueError {
    #[error("cue text is empty")]
    EmptyText,
    #[error("gesture direction must be a unit vector, norm is {0}")]
    NonUnitDirection(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Detection(#[from] GeometryError),
}

impl Cue {
    pub fn tick(&self) -> Tick {
        match self {
            Cue::Verbal { tick, .. } | Cue::Written { tick, .. } | Cue::Gesture { tick, .. } => *tick,
            Cue::GeometricObservation(obs) => obs.tick,
        }
    }

    pub fn set_tick(&mut self, at: Tick) {
        match self {
            Cue::Verbal { tick, .. } | Cue::Written { tick, .. } | Cue::Gesture { tick, .. } => *tick = at,
            Cue::GeometricObservation(obs) => obs.tick = at,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Cue::Verbal { .. } => "verbal",
            Cue::Written { .. } => "written",
            Cue::Gesture { .. } => "gesture",
            Cue::GeometricObservation(_) => "geometric_observation",
        }
    }

    pub fn validate(&self) -> Result<(), CueError> {
        match self {
            Cue::Verbal { text, .. } if text.trim().is_empty() => Err(CueError::EmptyText),
            Cue::Written { text, .. } if text.trim().is_empty() => Err(CueError::EmptyText),
            Cue::Written { seen_at, .. } if !seen_at.iter().all(|v| v.is_finite()) => Err(CueError::NonFinite("position")),
            Cue::Gesture { origin, direction, .. } => {
                if !origin.iter().chain(direction.iter()).all(|v| v.is_finite()) {
                    return Err(CueError::NonFinite("gesture vector"));
                }
                let norm = direction.norm();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(CueError::NonUnitDirection(norm));
                }
                Ok(())
            }
            Cue::GeometricObservation(obs) => {
                for d in &obs.detections {
                    d.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueConfig {
    pub cone_half_angle_deg: f64,
    /// Same meaning as the planner's: below it a location is not "believed".
    pub belief_threshold: f64,
    pub client_timeout_ms: u64,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self {
            cone_half_angle_deg: 20.0,
            belief_threshold: 0.5,
            client_timeout_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateDecision {
    pub update_graph: bool,
    pub replan: bool,
    pub assertions: Vec<SemanticAssertion>,
    pub rationale: String,
}

/// What the interpreter sees of the robot's situation.
#[derive(Debug, Clone, Copy)]
pub struct InterpretContext<'a> {
    pub graph: &'a SceneGraph,
    pub task: Option<&'a Task>,
    pub now: Tick,
    pub config: &'a CueConfig,
}

/// Update whenever there is something to assert; replan when an assertion
/// is about the task object and disagrees with (or supplies) its believed
/// location. Call before the assertions are applied.
pub fn decide_next_steps(
    assertions: Vec<SemanticAssertion>,
    task: Option<&Task>,
    graph: &SceneGraph,
    now: Tick,
    belief_threshold: f64,
) -> UpdateDecision {
    if assertions.is_empty() {
        return UpdateDecision {
            update_graph: false,
            replan: false,
            assertions,
            rationale: "no assertions".into(),
        };
    }
    let task_object = task.filter(|t| t.is_active()).map(|t| graph.canonical_label(&t.object_label));
    let believed = task_object.as_deref().and_then(|object| {
        graph
            .locate(object, now)
            .filter(|chain| chain.confidence >= belief_threshold)
            .and_then(|chain| graph.node(chain.support))
            .map(|n| n.normalized_label.clone())
    });

    let mut replan = false;
    let mut notes = Vec::with_capacity(assertions.len());
    for a in &assertions {
        let note = match &task_object {
            None => "no active task, update only".to_string(),
            Some(object) if graph.canonical_label(&a.subject_label) != *object => "not the task object, update only".into(),
            Some(_) => match &believed {
                None => {
                    replan = true;
                    "task object with no believed location, replan".into()
                }
                Some(support) if *support != graph.canonical_label(&a.object_label) => {
                    replan = true;
                    format!("task object believed at {support}, replan")
                }
                Some(support) => format!("task object already believed at {support}, no replan"),
            },
        };
        notes.push(format!("{a}: {note}"));
    }
    UpdateDecision {
        update_graph: true,
        replan,
        assertions,
        rationale: notes.join("; "),
    }
}

/// Rule-based interpretation of any cue.
pub fn interpret(cue: &Cue, ctx: &InterpretContext<'_>) -> UpdateDecision {
    let decide = |assertions| decide_next_steps(assertions, ctx.task, ctx.graph, ctx.now, ctx.config.belief_threshold);
    match cue {
        Cue::Verbal { text, tick, .. } => prefixed("grammar", decide(interpret_statement(text, Source::Verbal, *tick))),
        Cue::Written { text, tick, .. } => prefixed("grammar", decide(interpret_statement(text, Source::Written, *tick))),
        Cue::Gesture {
            origin,
            direction,
            utterance,
            tick,
        } => {
            let half_angle = ctx.config.cone_half_angle_deg.to_radians();
            match resolve_gesture(origin, direction, utterance.as_deref(), ctx.graph, half_angle) {
                None => prefixed("gesture: nothing inside the cone", decide(Vec::new())),
                Some(res) => {
                    let task_object = ctx.task.filter(|t| t.is_active()).map(|t| t.object_label.as_str());
                    let head = format!(
                        "gesture toward {} at {:.1} deg",
                        res.target_label,
                        res.deviation_rad.to_degrees()
                    );
                    match res.bind(task_object, *tick) {
                        Some(a) => prefixed(&head, decide(vec![a])),
                        None => prefixed(&format!("{head}, no object to bind"), decide(Vec::new())),
                    }
                }
            }
        }
        Cue::GeometricObservation(_) => prefixed("geometric observation goes through relation extraction", decide(Vec::new())),
    }
}

fn prefixed(head: &str, mut d: UpdateDecision) -> UpdateDecision {
    d.rationale = format!("{head}: {}", d.rationale);
    d
}

fn landmark_labels(graph: &SceneGraph) -> Vec<String> {
    let mut labels: Vec<String> = graph
        .nodes()
        .filter(|n| matches!(n.kind, EntityKind::Furniture | EntityKind::Room))
        .map(|n| n.normalized_label.clone())
        .collect();
    labels.sort();
    labels.dedup();
    labels
}

/// Text cues go to `client`; gestures and observations use the rules.
/// Any client failure falls back to the grammar and says so in the rationale.
pub fn interpret_with_client(client: &dyn InterpreterClient, cue: &Cue, ctx: &InterpretContext<'_>) -> UpdateDecision {
    let (text, source, tick) = match cue {
        Cue::Verbal { text, tick, .. } => (text, Source::Verbal, *tick),
        Cue::Written { text, tick, .. } => (text, Source::Written, *tick),
        _ => return interpret(cue, ctx),
    };
    let request = InterpreterRequest {
        text: text.clone(),
        source,
        tick,
        task_summary: ctx.task.filter(|t| t.is_active()).map(Task::summary),
        candidate_landmarks: landmark_labels(ctx.graph),
    };
    let timeout = Duration::from_millis(ctx.config.client_timeout_ms);
    let started = Instant::now();
    let response = client.interpret(&request, timeout).and_then(|r| {
        if started.elapsed() > timeout {
            Err(ClientError::Timeout(timeout))
        } else {
            Ok(r)
        }
    });
    let fallback = |reason: String| {
        tracing::warn!(%reason, "interpreter client failed, using grammar");
        prefixed(&format!("client failed ({reason}), fell back to grammar"), interpret(cue, ctx))
    };
    let response = match response {
        Ok(r) => r,
        Err(e) => return fallback(e.to_string()),
    };

    let mut notes = Vec::new();
    let mut assertions = Vec::with_capacity(response.assertions.len());
    for mut a in response.assertions {
        a.subject_label = crate::normalize_label(&a.subject_label);
        a.object_label = crate::normalize_label(&a.object_label);
        if a.subject_label.is_empty() || a.object_label.is_empty() || a.confidence.is_nan() {
            return fallback(ClientError::Malformed(format!("unusable assertion {a}")).to_string());
        }
        if !(0.0..=1.0).contains(&a.confidence) {
            let clamped = a.confidence.clamp(0.0, 1.0);
            notes.push(format!("clamped confidence {} to {clamped}", a.confidence));
            a.confidence = clamped;
        }
        a.source = source;
        a.asserted_at = tick;
        assertions.push(a);
    }

    let mut d = decide_next_steps(assertions, ctx.task, ctx.graph, ctx.now, ctx.config.belief_threshold);
    if d.update_graph && !response.update_graph {
        notes.push("client declined the update".into());
        d.update_graph = false;
    }
    if d.replan && !(response.replan && d.update_graph) {
        notes.push("client declined the replan".into());
        d.replan = false;
    }
    let mut d = prefixed("client", d);
    if !notes.is_empty() {
        d.rationale = format!("{} ({})", d.rationale, notes.join(", "));
    }
    d
}
