use std::fmt::Write;

use super::PlanRequest;
use crate::state::{AttachmentData, ContextBlock};

/// Fixed instructions placed before the tool catalogue.
pub const GENERAL_CONTEXT: &str = r#"You are a CAD design assistant working in a 2D sketch and 3D solid modeler.
Each turn, write a short plan and then one action: a small script of tool
calls that is executed in order. The results of every action are shown to
you, most recent first, before the next turn.

Reply format:
PLAN: <one or two sentences>
```action
$name = tool(arg, key=value)
tool($name, key=[1, 2])
```

Script rules: one call per line or separated by `;`. Arguments are
positional in signature order or named. Values are numbers, strings, true,
false, null, lists [..] and objects {..}. `$name = ...` keeps a call's
result; `$name.field` and `$name[0]` read parts of it. Variables persist
across turns. Lines starting with `#` are comments. If a call fails, its
changes are undone and the remaining calls are skipped.

When the request is complete, reply with the single word TERMINATE."#;

#[derive(Debug, Clone, PartialEq)]
pub enum PromptPart {
    Text(String),
    Image { name: String, png: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub system: String,
    pub parts: Vec<PromptPart>,
}

impl Prompt {
    /// The whole prompt as text, images replaced by their names.
    pub fn to_text(&self) -> String {
        let mut out = self.system.clone();
        for p in &self.parts {
            out.push_str("\n\n");
            match p {
                PromptPart::Text(t) => out.push_str(t),
                PromptPart::Image { name, .. } => {
                    let _ = write!(out, "[image {name}]");
                }
            }
        }
        out
    }
}

fn image_part(name: &str, bytes: Option<&Vec<u8>>, multimodal: bool) -> PromptPart {
    match bytes {
        Some(png) if multimodal => PromptPart::Image { name: name.into(), png: png.clone() },
        Some(png) => PromptPart::Text(format!("[image {name}, {} bytes, not shown]", png.len())),
        None => PromptPart::Text(format!("[image {name} unavailable]")),
    }
}

/// Assembles the prompt for one planning request.
pub fn build_prompt(req: &PlanRequest, multimodal: bool) -> Prompt {
    let system = format!("{GENERAL_CONTEXT}\n\n## Tools\n\n{}", req.registry.catalogue());
    let mut parts = vec![PromptPart::Text(format!("## Request\n\n{}", req.query.text))];
    for a in &req.query.attachments {
        match &a.data {
            AttachmentData::Image { png, .. } => {
                parts.push(PromptPart::Text(format!("Attachment {} (image):", a.name)));
                parts.push(image_part(&a.name, Some(png), multimodal));
            }
            AttachmentData::Sketch(s) => parts.push(PromptPart::Text(format!(
                "Attachment {} (sketch, {} primitives) is loaded as the active sketch.",
                a.name,
                s.len()
            ))),
            AttachmentData::Solid(m) => parts.push(PromptPart::Text(format!(
                "Attachment {} (solid, {} steps) is loaded as the solid.",
                a.name,
                m.steps().len()
            ))),
            AttachmentData::Mesh(m) => parts.push(PromptPart::Text(format!(
                "Attachment {} (mesh, {} triangles) can be sectioned with cross_section(source=\"{}\").",
                a.name,
                m.triangles.len(),
                a.name
            ))),
        }
    }
    if !req.context.is_empty() {
        parts.push(PromptPart::Text("## Results so far (most recent first)".into()));
        for block in req.context {
            match block {
                ContextBlock::Text { step, text } => parts.push(PromptPart::Text(format!("[step {step}]\n{text}"))),
                ContextBlock::Image { artifact, .. } => {
                    parts.push(image_part(artifact, req.artifacts.get(artifact), multimodal))
                }
            }
        }
    }
    if let Some(problem) = req.reprompt {
        parts.push(PromptPart::Text(format!(
            "Your previous reply could not be used: {problem}. Reply again using the required format."
        )));
    }
    parts.push(PromptPart::Text(format!("Step {}. Give your next PLAN and action, or TERMINATE.", req.step)));
    Prompt { system, parts }
}
