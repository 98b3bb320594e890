//! Planners produce the next reply `PLAN: ...` + action block, or
//! `TERMINATE`, from the query and running context.

mod llm;
mod prompt;
mod scripted;

use std::collections::BTreeMap;

use thiserror::Error;

pub use llm::{LlmConfig, LlmPlanner};
pub use prompt::{build_prompt, Prompt, PromptPart, GENERAL_CONTEXT};
pub use scripted::{Fixture, FixtureEntry, ScriptedPlanner};

use crate::registry::Registry;
use crate::state::{ContextBlock, Query};

/// Everything a planner may look at when choosing the next action.
pub struct PlanRequest<'a> {
    pub step: usize,
    pub query: &'a Query,
    /// Most recent first.
    pub context: &'a [ContextBlock],
    /// Artifact bytes by name, for image context blocks.
    pub artifacts: &'a BTreeMap<String, Vec<u8>>,
    pub registry: &'a Registry,
    /// Set when the previous reply could not be parsed.
    pub reprompt: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("planner transport failed: {0}")]
    Transport(String),
    #[error("planner configuration: {0}")]
    Config(String),
}

pub trait Planner: Send {
    fn respond(&mut self, req: &PlanRequest) -> Result<String, PlannerError>;

    /// Notes gathered since the last call, attached to the step record.
    fn take_warnings(&mut self) -> Vec<String> {
        Vec::new()
    }
}
