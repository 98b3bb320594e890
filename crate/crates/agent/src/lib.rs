//! Agent loop for CAD editing: a planner proposes short tool-call scripts,
//! the runtime executes them against a sketch and solid, and the results
//! are fed back as context for the next step.

pub mod planner;
pub mod registry;
pub mod runtime;
pub mod script;
pub mod state;
pub mod tools;

pub use planner::{LlmConfig, LlmPlanner, PlanRequest, Planner, PlannerError, ScriptedPlanner};
pub use registry::{Registry, ToolError, ToolOutput, ToolSpec};
pub use runtime::{execute_action, run_session, run_step, run_with};
pub use script::{parse_action, parse_reply, Action, Plan};
pub use state::{Attachment, Query, SessionState, SessionStatus, StepRecord, Workspace, DEFAULT_BUDGET};
pub use tools::standard_registry;
