//! Tool registry. Planners see a tool only through its signature and
//! docstring.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cadkit_core::{Ref, SubRef, Vec2, Vec3};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::script::ToolCall;
use crate::state::{Artifact, ArtifactKind, Query, Workspace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    /// Semantic type shown to the planner, e.g. `point`, `ref`, `number`.
    pub ty: String,
    /// Default shown in the catalogue; `None` marks a required parameter.
    pub default: Option<String>,
}

impl Param {
    pub fn required(name: &str, ty: &str) -> Self {
        Self { name: name.into(), ty: ty.into(), default: None }
    }

    pub fn optional(name: &str, ty: &str, default: &str) -> Self {
        Self { name: name.into(), ty: ty.into(), default: Some(default.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub params: Vec<Param>,
    pub returns: String,
    pub docstring: String,
}

impl ToolSpec {
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| match &p.default {
                Some(d) => format!("{}: {} = {d}", p.name, p.ty),
                None => format!("{}: {}", p.name, p.ty),
            })
            .collect();
        format!("{}({}) -> {}", self.name, params.join(", "), self.returns)
    }

    /// Catalogue entry: signature line followed by the indented docstring.
    pub fn render(&self) -> String {
        let mut out = self.signature();
        out.push('\n');
        for line in self.docstring.trim().lines() {
            if line.is_empty() {
                out.push('\n');
            } else {
                let _ = writeln!(out, "    {line}");
            }
        }
        out
    }
}

/// A tool failure. The code is a stable identifier, the message is for
/// the planner.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct ToolError {
    pub code: String,
    pub message: String,
}

impl ToolError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into() }
    }

    pub fn bad_argument(message: impl Into<String>) -> Self {
        Self::new("BadArgument", message)
    }
}

/// An artifact produced by a call before it is named and stored.
#[derive(Debug, Clone, PartialEq)]
pub struct NewArtifact {
    pub kind: ArtifactKind,
    /// Suffix appended to the call's artifact prefix.
    pub label: String,
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl NewArtifact {
    pub fn png(label: &str, bytes: Vec<u8>) -> Self {
        Self { kind: ArtifactKind::Image, label: label.into(), media_type: "image/png".into(), bytes }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToolOutput {
    /// Bound to the call's `$var`, if any.
    pub value: Value,
    /// Shown to the planner.
    pub text: String,
    pub artifacts: Vec<NewArtifact>,
}

impl ToolOutput {
    pub fn new(value: Value, text: impl Into<String>) -> Self {
        Self { value, text: text.into(), artifacts: Vec::new() }
    }
}

/// What a tool can see besides the document.
pub struct CallEnv<'a> {
    pub query: &'a Query,
    pub step: usize,
    pub call: usize,
}

impl CallEnv<'_> {
    pub fn artifact_name(&self, tool: &str, label: &str) -> String {
        let base = format!("s{:02}_c{:02}_{tool}", self.step, self.call);
        if label.is_empty() {
            format!("{base}.png")
        } else {
            format!("{base}_{label}.png")
        }
    }
}

pub type ToolFn = dyn Fn(&mut Workspace, &Args, &CallEnv) -> Result<ToolOutput, ToolError> + Send + Sync;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("a tool named `{0}` is already registered")]
    DuplicateTool(String),
    #[error("tool `{0}` has an empty docstring")]
    EmptyDocstring(String),
}

#[derive(Default)]
pub struct Registry {
    specs: Vec<ToolSpec>,
    impls: Vec<Box<ToolFn>>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("tools", &self.specs.iter().map(|s| &s.name).collect::<Vec<_>>()).finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, spec: ToolSpec, f: F) -> Result<(), RegistryError>
    where
        F: Fn(&mut Workspace, &Args, &CallEnv) -> Result<ToolOutput, ToolError> + Send + Sync + 'static,
    {
        if self.specs.iter().any(|s| s.name == spec.name) {
            return Err(RegistryError::DuplicateTool(spec.name));
        }
        if spec.docstring.trim().is_empty() {
            return Err(RegistryError::EmptyDocstring(spec.name));
        }
        self.specs.push(spec);
        self.impls.push(Box::new(f));
        Ok(())
    }

    pub fn specs(&self) -> &[ToolSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<(&ToolSpec, &ToolFn)> {
        let i = self.specs.iter().position(|s| s.name == name)?;
        Some((&self.specs[i], self.impls[i].as_ref()))
    }

    /// Every tool's catalogue entry, in registration order.
    pub fn catalogue(&self) -> String {
        self.specs.iter().map(ToolSpec::render).collect::<Vec<_>>().join("\n")
    }

    /// Evaluates a call's arguments and maps them to parameter names.
    pub fn bind_args(&self, call: &ToolCall, env: &BTreeMap<String, Value>) -> Result<Args, ToolError> {
        let (spec, _) =
            self.get(&call.tool).ok_or_else(|| ToolError::new("UnknownTool", format!("no tool named `{}`", call.tool)))?;
        let mut values = BTreeMap::new();
        for (i, arg) in call.args.iter().enumerate() {
            let name = match &arg.name {
                Some(n) => {
                    if !spec.params.iter().any(|p| &p.name == n) {
                        return Err(ToolError::new("UnknownParameter", format!("{} has no parameter `{n}`", spec.name)));
                    }
                    n.clone()
                }
                None => spec
                    .params
                    .get(i)
                    .map(|p| p.name.clone())
                    .ok_or_else(|| ToolError::bad_argument(format!("{} takes at most {} arguments", spec.name, spec.params.len())))?,
            };
            let v = arg.value.eval(env).map_err(|m| ToolError::new("UnboundVariable", m))?;
            if values.insert(name.clone(), v).is_some() {
                return Err(ToolError::bad_argument(format!("argument `{name}` given twice")));
            }
        }
        for p in &spec.params {
            if p.default.is_none() && !values.contains_key(&p.name) {
                return Err(ToolError::new("MissingArgument", format!("{} needs `{}`", spec.name, p.name)));
            }
        }
        Ok(Args { tool: spec.name.clone(), values })
    }
}

/// Bound arguments with typed accessors. Explicit `null` counts as absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Args {
    pub tool: String,
    pub values: BTreeMap<String, Value>,
}

impl Args {
    pub fn raw(&self, name: &str) -> Option<&Value> {
        self.values.get(name).filter(|v| !v.is_null())
    }

    fn bad(&self, name: &str, what: &str) -> ToolError {
        ToolError::bad_argument(format!("{}: `{name}` must be {what}", self.tool))
    }

    fn need<'a>(&'a self, name: &str) -> Result<&'a Value, ToolError> {
        self.raw(name).ok_or_else(|| ToolError::new("MissingArgument", format!("{} needs `{name}`", self.tool)))
    }

    pub fn f64(&self, name: &str) -> Result<f64, ToolError> {
        self.need(name)?.as_f64().ok_or_else(|| self.bad(name, "a number"))
    }

    pub fn f64_or(&self, name: &str, default: f64) -> Result<f64, ToolError> {
        self.raw(name).map_or(Ok(default), |v| v.as_f64().ok_or_else(|| self.bad(name, "a number")))
    }

    pub fn u32_or(&self, name: &str, default: u32) -> Result<u32, ToolError> {
        self.raw(name).map_or(Ok(default), |v| {
            v.as_u64().and_then(|n| u32::try_from(n).ok()).ok_or_else(|| self.bad(name, "a non-negative integer"))
        })
    }

    pub fn bool_or(&self, name: &str, default: bool) -> Result<bool, ToolError> {
        self.raw(name).map_or(Ok(default), |v| v.as_bool().ok_or_else(|| self.bad(name, "true or false")))
    }

    pub fn str(&self, name: &str) -> Result<&str, ToolError> {
        self.need(name)?.as_str().ok_or_else(|| self.bad(name, "a string"))
    }

    pub fn str_opt(&self, name: &str) -> Result<Option<&str>, ToolError> {
        self.raw(name).map(|v| v.as_str().ok_or_else(|| self.bad(name, "a string"))).transpose()
    }

    pub fn has(&self, name: &str) -> bool {
        self.raw(name).is_some()
    }

    fn numbers(&self, name: &str, v: &Value, n: usize) -> Result<Vec<f64>, ToolError> {
        let what = if n == 2 { "[x, y]" } else { "[x, y, z]" };
        let arr = v.as_array().filter(|a| a.len() == n).ok_or_else(|| self.bad(name, what))?;
        arr.iter().map(|x| x.as_f64().ok_or_else(|| self.bad(name, what))).collect()
    }

    pub fn point(&self, name: &str) -> Result<Vec2, ToolError> {
        let v = self.numbers(name, self.need(name)?, 2)?;
        Ok(Vec2::new(v[0], v[1]))
    }

    pub fn vec3_or(&self, name: &str, default: Vec3) -> Result<Vec3, ToolError> {
        match self.raw(name) {
            None => Ok(default),
            Some(v) => {
                let v = self.numbers(name, v, 3)?;
                Ok(Vec3::new(v[0], v[1], v[2]))
            }
        }
    }

    pub fn ids(&self, name: &str) -> Result<Vec<u32>, ToolError> {
        let v = self.need(name)?;
        let one = |x: &Value| x.as_u64().and_then(|n| u32::try_from(n).ok());
        match v {
            Value::Array(items) => items.iter().map(|x| one(x).ok_or_else(|| self.bad(name, "a list of ids"))).collect(),
            x => one(x).map(|i| vec![i]).ok_or_else(|| self.bad(name, "a list of ids")),
        }
    }

    /// A constraint reference: an id (whole primitive), `"id.sub"`,
    /// `[id, "sub"]` or `{"id": id, "sub": "sub"}`.
    pub fn reference(&self, name: &str) -> Result<Ref, ToolError> {
        parse_ref(self.need(name)?).ok_or_else(|| self.bad(name, "an id, \"id.sub\" or [id, \"sub\"]"))
    }

    pub fn reference_opt(&self, name: &str) -> Result<Option<Ref>, ToolError> {
        if self.has(name) {
            self.reference(name).map(Some)
        } else {
            Ok(None)
        }
    }
}

fn parse_ref(v: &Value) -> Option<Ref> {
    let id = |x: &Value| x.as_u64().and_then(|n| u32::try_from(n).ok());
    let sub = |x: &Value| x.as_str().and_then(SubRef::from_name);
    match v {
        Value::Number(_) => id(v).map(Ref::entire),
        Value::String(s) => {
            let (i, s) = s.split_once('.').unwrap_or((s.as_str(), "entire"));
            Some(Ref::new(i.trim().parse().ok()?, SubRef::from_name(s.trim())?))
        }
        Value::Array(a) if a.len() == 2 => Some(Ref::new(id(&a[0])?, sub(&a[1])?)),
        Value::Object(o) => {
            let s = o.get("sub").or_else(|| o.get("subref")).map_or(Some(SubRef::Entire), sub)?;
            Some(Ref::new(id(o.get("id")?)?, s))
        }
        _ => None,
    }
}

/// Stores a call's artifacts under their final names.
pub fn name_artifacts(
    env: &CallEnv,
    tool: &str,
    new: Vec<NewArtifact>,
    store: &mut BTreeMap<String, Vec<u8>>,
) -> Vec<Artifact> {
    new.into_iter()
        .map(|a| {
            let name = env.artifact_name(tool, &a.label);
            let size = a.bytes.len();
            store.insert(name.clone(), a.bytes);
            Artifact { kind: a.kind, name, media_type: a.media_type, size }
        })
        .collect()
}
