use serde::{Deserialize, Serialize};

use super::{EdgeView, EntityNode, GraphConfig, GraphError, Result, SceneGraph, Tick};
use crate::label::Lexicon;

/// Serialized form of a [`SceneGraph`]. Edge history is kept in full, with
/// `active` materialized at the snapshot tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<EntityNode>,
    pub edges: Vec<EdgeView>,
    pub tick: Tick,
    #[serde(default, skip_serializing_if = "is_default_lexicon")]
    pub lexicon: Lexicon,
    #[serde(default)]
    pub config: GraphConfig,
}

fn is_default_lexicon(lexicon: &Lexicon) -> bool {
    *lexicon == Lexicon::default()
}

impl SceneGraph {
    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.iter().map(|e| self.view_at(e, self.tick)).collect(),
            tick: self.tick,
            lexicon: self.lexicon.clone(),
            config: self.config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.snapshot()).expect("snapshot serializes")
    }

    pub fn from_snapshot(snapshot: GraphSnapshot) -> Result<Self> {
        let mut graph = SceneGraph::new(snapshot.config);
        graph.lexicon = snapshot.lexicon;
        for node in snapshot.nodes {
            graph.next_node = graph.next_node.max(node.id.0 + 1);
            graph.nodes.insert(node.id, node);
        }
        for (position, view) in snapshot.edges.into_iter().enumerate() {
            let e = view.edge;
            if e.id.0 as usize != position {
                return Err(malformed(format!("edge id {} at position {position}", e.id.0)));
            }
            for endpoint in [e.subject, e.object] {
                if !graph.nodes.contains_key(&endpoint) {
                    return Err(malformed(format!("edge {} references missing node {endpoint}", e.id.0)));
                }
            }
            graph.push_edge(e.subject, e.relation, e.object, e.confidence, e.source, e.asserted_at);
        }
        graph.tick = snapshot.tick;
        Ok(graph)
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let snapshot: GraphSnapshot = serde_json::from_slice(bytes).map_err(|e| GraphError::Malformed {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_snapshot(snapshot)
    }
}

fn malformed(message: String) -> GraphError {
    GraphError::Malformed {
        line: 0,
        column: 0,
        message,
    }
}
