//! Seam for an external (e.g. language-model) interpreter.
//!
//! Requests and responses are plain JSON objects with the field names
//! below, so an adapter only has to forward them.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grammar::interpret_statement;
use crate::scene_graph::{SemanticAssertion, Source, Tick};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpreterRequest {
    pub text: String,
    pub source: Source,
    pub tick: Tick,
    /// e.g. "bring the apple"; absent when idle.
    pub task_summary: Option<String>,
    pub candidate_landmarks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpreterResponse {
    pub assertions: Vec<SemanticAssertion>,
    pub update_graph: bool,
    pub replan: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport error: {0}")]
    Transport(String),
}

pub trait InterpreterClient: Send + Sync {
    /// Must give up (returning `Timeout`) once `timeout` has elapsed.
    fn interpret(&self, request: &InterpreterRequest, timeout: Duration) -> Result<InterpreterResponse, ClientError>;
}

/// Deterministic stand-in that answers with the built-in grammar.
#[derive(Debug, Clone, Copy, Default)]
pub struct GrammarClient;

impl InterpreterClient for GrammarClient {
    fn interpret(&self, request: &InterpreterRequest, _timeout: Duration) -> Result<InterpreterResponse, ClientError> {
        let assertions = interpret_statement(&request.text, request.source, request.tick);
        let found = !assertions.is_empty();
        Ok(InterpreterResponse {
            assertions,
            update_graph: found,
            replan: found,
        })
    }
}

impl<F> InterpreterClient for F
where
    F: Fn(&InterpreterRequest, Duration) -> Result<InterpreterResponse, ClientError> + Send + Sync,
{
    fn interpret(&self, request: &InterpreterRequest, timeout: Duration) -> Result<InterpreterResponse, ClientError> {
        self(request, timeout)
    }
}
