//! Session state: the query, the document under edit, bound variables, the
//! transcript and the running context.

use std::collections::BTreeMap;
use std::path::Path;

use cadkit_core::serialize::{parse_document, serialize, SerializationConfig};
use cadkit_core::solid::{parse_obj, parse_stl, Mesh, SolidModel};
use cadkit_core::SketchGraph;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::script::Plan;

pub const DEFAULT_BUDGET: usize = 16;

/// The document the tools edit: the active sketch and the solid built so
/// far by extrusions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Workspace {
    pub sketch: SketchGraph,
    pub solid: SolidModel,
}

impl Workspace {
    /// Exact `.sketch.json` text of the active sketch.
    pub fn sketch_json(&self) -> String {
        serialize(&self.sketch, &SerializationConfig::exact()).expect("stored primitives are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachmentKind {
    Sketch,
    Solid,
    Mesh,
    Image,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttachmentData {
    Sketch(SketchGraph),
    Solid(SolidModel),
    Mesh(Mesh),
    /// A PNG plus the parameterization the image parameterizer reports for
    /// it, read from a sidecar document when one exists.
    Image { png: Vec<u8>, parameterization: Option<SketchGraph> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub name: String,
    pub data: AttachmentData,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid attachment {name}: {reason}")]
pub struct InvalidAttachment {
    pub name: String,
    pub reason: String,
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

impl Attachment {
    pub fn kind(&self) -> AttachmentKind {
        match self.data {
            AttachmentData::Sketch(_) => AttachmentKind::Sketch,
            AttachmentData::Solid(_) => AttachmentKind::Solid,
            AttachmentData::Mesh(_) => AttachmentKind::Mesh,
            AttachmentData::Image { .. } => AttachmentKind::Image,
        }
    }

    /// Decodes an attachment. The kind comes from `kind` when given, else
    /// from the file name (`.obj`, `.stl`, `.png`, `.solid.json`, other
    /// `.json` as a sketch). `sidecar` is an optional parameterization
    /// document for images.
    pub fn decode(
        name: &str,
        kind: Option<AttachmentKind>,
        bytes: &[u8],
        sidecar: Option<&[u8]>,
    ) -> Result<Attachment, InvalidAttachment> {
        let fail = |reason: String| InvalidAttachment { name: name.to_string(), reason };
        let lower = name.to_ascii_lowercase();
        let kind = match kind {
            Some(k) => k,
            None if lower.ends_with(".obj") || lower.ends_with(".stl") => AttachmentKind::Mesh,
            None if lower.ends_with(".png") => AttachmentKind::Image,
            None if lower.ends_with(".solid.json") => AttachmentKind::Solid,
            None if lower.ends_with(".json") => AttachmentKind::Sketch,
            None => return Err(fail("unrecognized file type".into())),
        };
        let text = || std::str::from_utf8(bytes).map_err(|_| fail("not UTF-8 text".into()));
        let data = match kind {
            AttachmentKind::Sketch => {
                AttachmentData::Sketch(parse_document(text()?).map_err(|e| fail(e.to_string()))?.sketch)
            }
            AttachmentKind::Solid => {
                AttachmentData::Solid(serde_json::from_str(text()?).map_err(|e| fail(e.to_string()))?)
            }
            AttachmentKind::Mesh => {
                let mesh = if lower.ends_with(".obj") {
                    parse_obj(text()?)
                } else if lower.ends_with(".stl") {
                    parse_stl(bytes)
                } else {
                    std::str::from_utf8(bytes).map_or_else(|_| parse_stl(bytes), parse_obj)
                };
                let mesh = mesh.map_err(|e| fail(e.to_string()))?;
                if mesh.triangles.is_empty() {
                    return Err(fail("mesh has no triangles".into()));
                }
                AttachmentData::Mesh(mesh)
            }
            AttachmentKind::Image => {
                if !bytes.starts_with(PNG_MAGIC) {
                    return Err(fail("not a PNG image".into()));
                }
                let parameterization = match sidecar {
                    Some(s) => {
                        let t = std::str::from_utf8(s).map_err(|_| fail("sidecar is not UTF-8".into()))?;
                        Some(parse_document(t).map_err(|e| fail(format!("sidecar: {e}")))?.sketch)
                    }
                    None => None,
                };
                AttachmentData::Image { png: bytes.to_vec(), parameterization }
            }
        };
        Ok(Attachment { name: name.to_string(), data })
    }

    /// Reads an attachment from disk. Images pick up a sidecar named
    /// `<stem>.sketch.json` next to them.
    pub fn from_path(path: &Path) -> Result<Attachment, InvalidAttachment> {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        let bytes = std::fs::read(path).map_err(|e| InvalidAttachment { name: name.clone(), reason: e.to_string() })?;
        let sidecar = if name.to_ascii_lowercase().ends_with(".png") {
            let side = path.with_extension("sketch.json");
            std::fs::read(side).ok()
        } else {
            None
        };
        Attachment::decode(&name, None, &bytes, sidecar.as_deref())
    }

    pub fn summary(&self) -> AttachmentSummary {
        AttachmentSummary { name: self.name.clone(), kind: self.kind() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentSummary {
    pub name: String,
    pub kind: AttachmentKind,
}

/// The user request x₀: text plus attachments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Query {
    pub text: String,
    pub attachments: Vec<Attachment>,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), attachments: Vec::new() }
    }

    pub fn with(mut self, a: Attachment) -> Self {
        self.attachments.push(a);
        self
    }

    pub fn attachment(&self, name: &str) -> Option<&Attachment> {
        self.attachments.iter().find(|a| a.name == name)
    }

    /// Initial document: the first sketch and the first solid attached.
    pub fn initial_workspace(&self) -> Workspace {
        let mut ws = Workspace::default();
        if let Some(s) = self.attachments.iter().find_map(|a| match &a.data {
            AttachmentData::Sketch(s) => Some(s),
            _ => None,
        }) {
            ws.sketch = s.clone();
        }
        if let Some(m) = self.attachments.iter().find_map(|a| match &a.data {
            AttachmentData::Solid(m) => Some(m),
            _ => None,
        }) {
            ws.solid = m.clone();
        }
        ws
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Image,
    File,
}

/// Handle to bytes kept in [`SessionState::artifacts`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: ArtifactKind,
    pub name: String,
    pub media_type: String,
    pub size: usize,
}

/// A tool failure as the planner sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallError {
    /// Position of the failing call within the action.
    pub call: usize,
    pub code: String,
    pub message: String,
}

/// Output f_t of executing one action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Feedback {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<CallError>,
}

/// One entry of the running context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ContextBlock {
    Text { step: usize, text: String },
    Image { step: usize, artifact: String },
}

impl ContextBlock {
    pub fn step(&self) -> usize {
        match self {
            ContextBlock::Text { step, .. } | ContextBlock::Image { step, .. } => *step,
        }
    }
}

/// Record (p_t, a_t, f_t) of one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub plan: Plan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
    /// Context length after this step.
    pub context_len: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Idle,
    Running,
    Terminated,
    BudgetExceeded,
    Failed,
}

impl SessionStatus {
    pub fn is_final(self) -> bool {
        matches!(self, SessionStatus::Terminated | SessionStatus::BudgetExceeded | SessionStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub query_text: String,
    pub attachments: Vec<AttachmentSummary>,
    pub document: Workspace,
    pub env_bindings: BTreeMap<String, Value>,
    pub transcript: Vec<StepRecord>,
    /// Most recent first.
    pub context: Vec<ContextBlock>,
    pub step_budget: usize,
    pub status: SessionStatus,
    /// Transcript index where the current run started.
    pub run_start: usize,
    /// Problems noticed while running, e.g. failed fixture assertions.
    pub flags: Vec<String>,
    #[serde(skip)]
    pub artifacts: BTreeMap<String, Vec<u8>>,
}

impl SessionState {
    pub fn new(query: &Query, budget: usize) -> Self {
        Self {
            query_text: query.text.clone(),
            attachments: query.attachments.iter().map(Attachment::summary).collect(),
            document: query.initial_workspace(),
            env_bindings: BTreeMap::new(),
            transcript: Vec::new(),
            context: Vec::new(),
            step_budget: budget,
            status: SessionStatus::Idle,
            run_start: 0,
            flags: Vec::new(),
            artifacts: BTreeMap::new(),
        }
    }

    /// Starts a new run on this state with a fresh query; the document,
    /// bindings and context carry over.
    pub fn begin_run(&mut self, query: &Query) {
        self.query_text = query.text.clone();
        self.attachments = query.attachments.iter().map(Attachment::summary).collect();
        self.status = SessionStatus::Running;
        self.run_start = self.transcript.len();
    }

    pub fn steps_in_run(&self) -> usize {
        self.transcript.len() - self.run_start
    }

    /// Transcript as JSON lines, one step per line.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
    }
}
