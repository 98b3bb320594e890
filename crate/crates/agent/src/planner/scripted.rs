use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PlanRequest, Planner, PlannerError};
use crate::script::{format_reply, TERMINATE};

/// One scripted reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FixtureEntry {
    #[serde(default)]
    pub plan: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    /// Context length the planner should see when this entry is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_context_len: Option<usize>,
    /// Reply sent verbatim instead of `plan` and `action`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

impl FixtureEntry {
    pub fn act(plan: &str, action: &str) -> Self {
        Self { plan: plan.into(), action: Some(action.into()), ..Self::default() }
    }

    pub fn terminate() -> Self {
        Self { plan: TERMINATE.into(), ..Self::default() }
    }

    pub fn reply(&self) -> String {
        if let Some(raw) = &self.raw {
            return raw.clone();
        }
        format_reply(&self.plan, self.action.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Fixture {
    pub entries: Vec<FixtureEntry>,
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Fixture, PlannerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlannerError::Config(format!("cannot read fixture {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PlannerError::Config(format!("fixture {} is not valid: {e}", path.display())))
    }
}

/// Replays fixture entries in order, one per request.
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    fixture: Fixture,
    cursor: usize,
    warnings: Vec<String>,
}

impl ScriptedPlanner {
    pub fn new(fixture: Fixture) -> Self {
        Self { fixture, cursor: 0, warnings: Vec::new() }
    }

    pub fn from_path(path: &Path) -> Result<Self, PlannerError> {
        Fixture::load(path).map(Self::new)
    }

    pub fn remaining(&self) -> usize {
        self.fixture.entries.len() - self.cursor
    }
}

impl Planner for ScriptedPlanner {
    fn respond(&mut self, req: &PlanRequest) -> Result<String, PlannerError> {
        let Some(entry) = self.fixture.entries.get(self.cursor) else {
            self.warnings.push("FixtureExhausted: no scripted reply left; terminating".into());
            return Ok(TERMINATE.into());
        };
        self.cursor += 1;
        if let Some(n) = entry.expect_context_len {
            if n != req.context.len() {
                self.warnings.push(format!(
                    "ContextMismatch: fixture expected {n} context blocks, planner saw {}",
                    req.context.len()
                ));
            }
        }
        if let Some(ms) = entry.delay_ms {
            std::thread::sleep(Duration::from_millis(ms));
        }
        Ok(entry.reply())
    }

    fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }
}
