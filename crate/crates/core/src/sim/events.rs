use serde::{Deserialize, Serialize};

use crate::cues::{Cue, UpdateDecision};
use crate::geometry::GeometricObservation;
use crate::planner::{Action, Plan, Task};
use crate::scene_graph::{GraphDelta, NodeId, SemanticAssertion, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Succeeded,
    Failed,
    /// Replaced by a different action before finishing.
    Preempted,
}

/// One entry of a run's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    TaskIssued {
        tick: Tick,
        task: Task,
    },
    PlanCreated {
        tick: Tick,
        plan: Plan,
    },
    CueDelivered {
        tick: Tick,
        cue: Cue,
    },
    ActionStarted {
        tick: Tick,
        action: Action,
    },
    ActionCompleted {
        tick: Tick,
        action: Action,
        outcome: Outcome,
        travelled_m: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    QueryAsked {
        tick: Tick,
        human: NodeId,
        label: String,
    },
    Detected {
        tick: Tick,
        observation: GeometricObservation,
    },
    CueInterpreted {
        tick: Tick,
        decision: UpdateDecision,
    },
    AssertionRejected {
        tick: Tick,
        assertion: SemanticAssertion,
        reason: String,
    },
    GraphDelta {
        tick: Tick,
        delta: GraphDelta,
    },
    PlanRevised {
        tick: Tick,
        plan: Plan,
    },
    TaskSucceeded {
        tick: Tick,
        task: u64,
    },
    TaskFailed {
        tick: Tick,
        task: u64,
        reason: String,
    },
}

impl SimEvent {
    pub fn tick(&self) -> Tick {
        match self {
            SimEvent::TaskIssued { tick, .. }
            | SimEvent::PlanCreated { tick, .. }
            | SimEvent::CueDelivered { tick, .. }
            | SimEvent::ActionStarted { tick, .. }
            | SimEvent::ActionCompleted { tick, .. }
            | SimEvent::QueryAsked { tick, .. }
            | SimEvent::Detected { tick, .. }
            | SimEvent::CueInterpreted { tick, .. }
            | SimEvent::AssertionRejected { tick, .. }
            | SimEvent::GraphDelta { tick, .. }
            | SimEvent::PlanRevised { tick, .. }
            | SimEvent::TaskSucceeded { tick, .. }
            | SimEvent::TaskFailed { tick, .. } => *tick,
        }
    }

    /// The `event` tag as written in logs.
    pub fn name(&self) -> &'static str {
        match self {
            SimEvent::TaskIssued { .. } => "task_issued",
            SimEvent::PlanCreated { .. } => "plan_created",
            SimEvent::CueDelivered { .. } => "cue_delivered",
            SimEvent::ActionStarted { .. } => "action_started",
            SimEvent::ActionCompleted { .. } => "action_completed",
            SimEvent::QueryAsked { .. } => "query_asked",
            SimEvent::Detected { .. } => "detected",
            SimEvent::CueInterpreted { .. } => "cue_interpreted",
            SimEvent::AssertionRejected { .. } => "assertion_rejected",
            SimEvent::GraphDelta { .. } => "graph_delta",
            SimEvent::PlanRevised { .. } => "plan_revised",
            SimEvent::TaskSucceeded { .. } => "task_succeeded",
            SimEvent::TaskFailed { .. } => "task_failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, SimEvent::TaskSucceeded { .. } | SimEvent::TaskFailed { .. })
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}
