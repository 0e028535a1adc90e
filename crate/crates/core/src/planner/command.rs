use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::normalize_label;
use crate::scene_graph::{NodeId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    OperatorHandover,
    Node(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Active,
    Succeeded,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub object_label: String,
    pub destination: Destination,
    pub issued_at: Tick,
    pub status: TaskStatus,
    /// Place named in "... from the Y"; searched first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_hint: Option<String>,
}

impl Task {
    pub fn is_active(&self) -> bool {
        self.status == TaskStatus::Active
    }

    pub fn summary(&self) -> String {
        match &self.search_hint {
            Some(hint) => format!("bring the {} from the {}", self.object_label, hint),
            None => format!("bring the {}", self.object_label),
        }
    }
}

fn command_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(
            r"(?ix)^\s*(?:please\s+)?(?:bring|fetch|get)\s+(?:me\s+)?(?:(?:a|an|the|some)\s+)?
              (?P<object>.+?)
              (?:\s+from\s+(?:the\s+)?(?P<hint>.+?))?
              \s*[.!?]*\s*$",
        )
        .expect("command grammar compiles")
    })
}

/// Parses "bring|fetch|get [me] [a|an|the] X [from the Y]".
///
/// ```
/// use hearth_core::planner::{parse_command, Destination};
/// let task = parse_command("bring a teddy bear from the living room", 1, 0).unwrap();
/// assert_eq!(task.object_label, "teddy bear");
/// assert_eq!(task.search_hint.as_deref(), Some("living room"));
/// assert_eq!(task.destination, Destination::OperatorHandover);
/// ```
pub fn parse_command(text: &str, id: u64, issued_at: Tick) -> Result<Task, PlanError> {
    let unparseable = || PlanError::UnparseableCommand(text.to_string());
    let caps = command_pattern().captures(text).ok_or_else(unparseable)?;
    let object_label = normalize_label(&caps["object"]);
    if object_label.is_empty() {
        return Err(unparseable());
    }
    let search_hint = caps
        .name("hint")
        .map(|m| normalize_label(m.as_str()))
        .filter(|h| !h.is_empty());
    Ok(Task {
        id,
        object_label,
        destination: Destination::OperatorHandover,
        issued_at,
        status: TaskStatus::Active,
        search_hint,
    })
}
