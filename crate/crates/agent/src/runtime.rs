//! The plan/act/observe loop.

use crate::planner::{PlanRequest, Planner, PlannerError};
use crate::registry::{name_artifacts, CallEnv, Registry};
use crate::script::{parse_reply, Action, Plan};
use crate::state::{ArtifactKind, CallError, ContextBlock, Feedback, Query, SessionState, SessionStatus, StepRecord};

/// Runs every call of `action` in order against the session document.
///
/// Each call works on a snapshot: a failing call leaves the document as
/// the previous call left it, and the remaining calls are skipped.
pub fn execute_action(registry: &Registry, action: &Action, state: &mut SessionState, query: &Query, step: usize) -> Feedback {
    let mut fb = Feedback::default();
    let mut lines = Vec::new();
    if let Some((call, name)) = action.first_unbound(&state.env_bindings) {
        let message = format!("variable ${name} is used before it is assigned");
        lines.push(format!("[{call}] {}\nerror UnboundVariable: {message}", action.calls[call]));
        lines.push("no calls were run".into());
        fb.text = lines.join("\n");
        fb.error = Some(CallError { call, code: "UnboundVariable".into(), message });
        return fb;
    }
    for (i, call) in action.calls.iter().enumerate() {
        let env = CallEnv { query, step, call: i };
        let result = registry.bind_args(call, &state.env_bindings).and_then(|args| {
            let (_, f) = registry.get(&call.tool).expect("bound tools exist");
            let mut ws = state.document.clone();
            let out = f(&mut ws, &args, &env)?;
            Ok((ws, out))
        });
        match result {
            Ok((ws, out)) => {
                state.document = ws;
                if let Some(var) = &call.bind {
                    state.env_bindings.insert(var.clone(), out.value);
                }
                let mut arts = name_artifacts(&env, &call.tool, out.artifacts, &mut state.artifacts);
                fb.artifacts.append(&mut arts);
                lines.push(format!("[{i}] {call}\n{}", out.text));
            }
            Err(e) => {
                lines.push(format!("[{i}] {call}\nerror {}: {}", e.code, e.message));
                let skipped = action.calls.len() - i - 1;
                if skipped > 0 {
                    lines.push(format!("{skipped} remaining call(s) skipped"));
                }
                fb.error = Some(CallError { call: i, code: e.code, message: e.message });
                break;
            }
        }
    }
    fb.text = lines.join("\n");
    fb
}

/// Prepends a step's feedback to the running context.
fn prepend_feedback(state: &mut SessionState, step: usize, plan: &str, action: Option<&str>, fb: &Feedback) {
    let mut text = format!("PLAN: {plan}\n");
    if let Some(a) = action {
        text.push_str(&format!("ACTION:\n{a}\n"));
    }
    text.push_str(&format!("RESULT:\n{}", fb.text));
    let mut blocks = vec![ContextBlock::Text { step, text }];
    blocks.extend(
        fb.artifacts
            .iter()
            .filter(|a| a.kind == ArtifactKind::Image)
            .map(|a| ContextBlock::Image { step, artifact: a.name.clone() }),
    );
    blocks.append(&mut state.context);
    state.context = blocks;
}

/// Asks the planner for one reply and acts on it. Returns the recorded
/// step, or `None` when the planner could not be reached.
pub fn run_step(planner: &mut dyn Planner, registry: &Registry, state: &mut SessionState, query: &Query) -> Option<StepRecord> {
    let step = state.transcript.len();
    let mut ask = |state: &SessionState, reprompt: Option<&str>| -> Result<String, PlannerError> {
        planner.respond(&PlanRequest {
            step,
            query,
            context: &state.context,
            artifacts: &state.artifacts,
            registry,
            reprompt,
        })
    };
    let mut first = ask(state, None);
    if let Ok(Err(e)) = first.as_ref().map(|t| parse_reply(t).map(|_| ())) {
        log::info!("step {step}: unparseable reply ({e}); asking again");
        first = ask(state, Some(&e.to_string()));
    }
    let mut warnings = planner.take_warnings();
    let raw = match first {
        Ok(raw) => raw,
        Err(e) => {
            state.flags.push(format!("step {step}: {e}"));
            state.flags.extend(warnings.into_iter().map(|w| format!("step {step}: {w}")));
            state.status = SessionStatus::Failed;
            return None;
        }
    };
    state.flags.extend(warnings.iter().map(|w| format!("step {step}: {w}")));
    let record = match parse_reply(&raw) {
        Ok(reply) if reply.plan.is_terminate() => {
            state.status = SessionStatus::Terminated;
            StepRecord { index: step, plan: Plan::Terminate, action: None, feedback: None, context_len: state.context.len(), warnings }
        }
        Ok(reply) => {
            let (src, action) = reply.action.expect("non-terminal replies carry an action");
            let fb = execute_action(registry, &action, state, query, step);
            prepend_feedback(state, step, reply.plan.as_str(), Some(&src), &fb);
            StepRecord {
                index: step,
                plan: reply.plan,
                action: Some(src),
                feedback: Some(fb),
                context_len: state.context.len(),
                warnings,
            }
        }
        Err(e) => {
            let message = format!("reply could not be parsed after one retry: {e}");
            let fb = Feedback {
                text: format!("error PlannerUnparseable: {message}"),
                artifacts: Vec::new(),
                error: Some(CallError { call: 0, code: "PlannerUnparseable".into(), message }),
            };
            warnings.push("PlannerUnparseable".into());
            let plan = Plan::Text(raw.lines().next().unwrap_or("").to_string());
            prepend_feedback(state, step, plan.as_str(), None, &fb);
            StepRecord { index: step, plan, action: None, feedback: Some(fb), context_len: state.context.len(), warnings }
        }
    };
    state.transcript.push(record.clone());
    Some(record)
}

/// Runs steps until the planner terminates, the step budget for this run is
/// used up, or the planner fails. `on_step` sees the state after each step.
pub fn run_with(
    planner: &mut dyn Planner,
    registry: &Registry,
    state: &mut SessionState,
    query: &Query,
    on_step: &mut dyn FnMut(&SessionState, &StepRecord),
) -> SessionStatus {
    state.begin_run(query);
    loop {
        if state.steps_in_run() >= state.step_budget {
            state.status = SessionStatus::BudgetExceeded;
            break;
        }
        match run_step(planner, registry, state, query) {
            Some(rec) => on_step(state, &rec),
            None => break,
        }
        if state.status.is_final() {
            break;
        }
    }
    state.status
}

/// Runs a fresh session for `query`.
pub fn run_session(planner: &mut dyn Planner, registry: &Registry, query: &Query, budget: usize) -> SessionState {
    let mut state = SessionState::new(query, budget);
    run_with(planner, registry, &mut state, query, &mut |_, _| {});
    state
}
