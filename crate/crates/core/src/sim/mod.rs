//! Deterministic household simulator: ground-truth world, scenario files,
//! the event vocabulary of a run and its summary metrics.

mod events;
mod scenario;
mod world;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::CueError;
use crate::geometry::GeometryError;
use crate::scene_graph::GraphError;

pub use events::{Outcome, SimEvent};
pub use scenario::{
    pointing, FurnitureSpec, GestureScript, HumanSpec, KnowledgeSpec, ObjectSpec, RobotSpec, RoomSpec, Scenario,
    ScriptedCue, Setup, Trigger, OPERATOR, ROBOT,
};
pub use world::{
    Furniture, Holder, Human, InProgress, Object, Robot, Room, SimConfig, StepContext, TargetResolver, World,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unknown {kind} `{label}` referenced by {referenced_by}")]
    DanglingLabel {
        kind: &'static str,
        label: String,
        referenced_by: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("malformed cue: {0}")]
    Cue(#[from] CueError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("event log ends before the task does")]
    TruncatedLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub success: bool,
    pub ticks: u64,
    pub distance_m: f64,
    pub replans: u32,
    pub cues_consumed: u32,
}

/// Summarizes a complete log. The last terminal event decides success.
pub fn metrics(events: &[SimEvent]) -> Result<RunReport, SimError> {
    let terminal = events.iter().rev().find(|e| e.is_terminal()).ok_or(SimError::TruncatedLog)?;
    let mut report = RunReport {
        success: matches!(terminal, SimEvent::TaskSucceeded { .. }),
        ticks: terminal.tick(),
        distance_m: 0.0,
        replans: 0,
        cues_consumed: 0,
    };
    for e in events {
        match e {
            SimEvent::ActionCompleted { travelled_m, .. } => report.distance_m += travelled_m,
            SimEvent::PlanRevised { .. } => report.replans += 1,
            SimEvent::CueDelivered { .. } => report.cues_consumed += 1,
            _ => {}
        }
    }
    Ok(report)
}

/// Parses a line-delimited event log.
pub fn parse_log(text: &str) -> Result<Vec<SimEvent>, GraphError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| GraphError::Malformed {
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })
        })
        .collect()
}
