//! Textual sketch formats: JSON (the on-disk `.sketch.json` document), CSV,
//! Markdown and HTML, each under any parameterization strategy.
//!
//! Numbers are written fixed-point with trailing zeros trimmed. JSON under
//! the point-based or overparameterized strategy parses back to the same
//! sketch up to that rounding.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geom::Vec2;
use crate::params::{decode_fields, encode_fields, Strategy};
use crate::sketch::{
    Constraint, ConstraintKind, Primitive, PrimitiveId, PrimitiveKind, Ref, SketchError, SketchGraph, SubRef,
};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Markdown,
    Html,
}

impl Format {
    pub fn from_name(s: &str) -> Option<Format> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            "markdown" | "md" => Some(Format::Markdown),
            "html" => Some(Format::Html),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SerializationConfig {
    pub format: Format,
    pub strategy: Strategy,
    /// Decimal places. 17 or more writes the shortest exact representation.
    pub float_precision: usize,
}

impl Default for SerializationConfig {
    fn default() -> Self {
        Self { format: Format::Json, strategy: Strategy::PointBased, float_precision: 6 }
    }
}

impl SerializationConfig {
    pub fn json(strategy: Strategy) -> Self {
        Self { strategy, ..Self::default() }
    }

    /// Exact JSON, used for persisted documents.
    pub fn exact() -> Self {
        Self { float_precision: 17, ..Self::default() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violation: {0}")]
    Invariant(#[from] SketchError),
}

/// Formats `v` with `precision` decimals, trimming trailing zeros.
pub fn format_number(v: f64, precision: usize) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    if precision >= 17 {
        let s = format!("{v:?}");
        return if s == "-0.0" { "0.0".into() } else { s };
    }
    let mut s = format!("{v:.precision$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Serializes a sketch. Fails only when the strategy cannot represent a
/// primitive (a zero-length line in implicit form).
pub fn serialize(sketch: &SketchGraph, cfg: &SerializationConfig) -> Result<String, SketchError> {
    serialize_with_loops(sketch, &[], cfg)
}

/// Serializes a sketch plus closed polylines (section output). Tabular
/// formats list the loops in a third table.
pub fn serialize_with_loops(
    sketch: &SketchGraph,
    loops: &[Vec<Vec2>],
    cfg: &SerializationConfig,
) -> Result<String, SketchError> {
    let rows = sketch
        .primitives()
        .iter()
        .map(|(id, p)| Ok((*id, p.kind(), encode_fields(p, cfg.strategy)?)))
        .collect::<Result<Vec<_>, SketchError>>()?;
    let num = |v: f64| format_number(v, cfg.float_precision);
    Ok(match cfg.format {
        Format::Json => json_text(sketch, &rows, loops, cfg.strategy, &num),
        Format::Csv => tabular(sketch, &rows, loops, cfg.strategy, &num, &Csv),
        Format::Markdown => tabular(sketch, &rows, loops, cfg.strategy, &num, &Markdown),
        Format::Html => tabular(sketch, &rows, loops, cfg.strategy, &num, &Html),
    })
}

type Rows = [(PrimitiveId, PrimitiveKind, Vec<(&'static str, f64)>)];

fn ref_json(r: Ref) -> String {
    format!("{{\"id\": {}, \"subref\": \"{}\"}}", r.id, r.sub.name())
}

fn constraint_refs(c: &Constraint) -> Vec<Ref> {
    if c.kind.is_unary() && c.a == c.b {
        vec![c.a]
    } else {
        vec![c.a, c.b]
    }
}

fn json_text(
    sketch: &SketchGraph,
    rows: &Rows,
    loops: &[Vec<Vec2>],
    strategy: Strategy,
    num: &dyn Fn(f64) -> String,
) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"version\": {FORMAT_VERSION},");
    let _ = writeln!(out, "  \"strategy\": \"{}\",", strategy.name());
    let _ = writeln!(out, "  \"next_id\": {},", sketch.next_id());
    out.push_str("  \"primitives\": [");
    for (i, (id, kind, fields)) in rows.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let _ = write!(out, "    {{\"id\": {id}, \"type\": \"{}\"", kind.name());
        for (name, v) in fields {
            let _ = write!(out, ", \"{name}\": {}", num(*v));
        }
        out.push('}');
    }
    out.push_str(if rows.is_empty() { "],\n" } else { "\n  ],\n" });
    out.push_str("  \"constraints\": [");
    for (i, c) in sketch.constraints().iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let refs: Vec<String> = constraint_refs(c).into_iter().map(ref_json).collect();
        let _ = write!(out, "    {{\"kind\": \"{}\", \"refs\": [{}]}}", c.kind.name(), refs.join(", "));
    }
    out.push_str(if sketch.constraints().is_empty() { "]" } else { "\n  ]" });
    if !loops.is_empty() {
        out.push_str(",\n  \"loops\": [");
        for (i, lp) in loops.iter().enumerate() {
            out.push_str(if i == 0 { "\n" } else { ",\n" });
            let pts: Vec<String> = lp.iter().map(|p| format!("[{}, {}]", num(p.x), num(p.y))).collect();
            let _ = write!(out, "    [{}]", pts.join(", "));
        }
        out.push_str("\n  ]");
    }
    out.push_str("\n}\n");
    out
}

/// Union of the strategy's field names over all kinds, in first-seen order.
fn columns(strategy: Strategy) -> Vec<&'static str> {
    let mut cols: Vec<&'static str> = Vec::new();
    for kind in [PrimitiveKind::Line, PrimitiveKind::Arc, PrimitiveKind::Circle, PrimitiveKind::Point] {
        for f in strategy.fields(kind) {
            if !cols.contains(f) {
                cols.push(f);
            }
        }
    }
    cols
}

trait TableStyle {
    fn begin(&self, out: &mut String, title: &str);
    fn row(&self, out: &mut String, cells: &[String], header: bool);
    fn end(&self, out: &mut String);
}

struct Csv;
struct Markdown;
struct Html;

impl TableStyle for Csv {
    fn begin(&self, out: &mut String, title: &str) {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "# {title}");
    }
    fn row(&self, out: &mut String, cells: &[String], _header: bool) {
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fn end(&self, _out: &mut String) {}
}

impl TableStyle for Markdown {
    fn begin(&self, out: &mut String, title: &str) {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "### {title}\n");
    }
    fn row(&self, out: &mut String, cells: &[String], header: bool) {
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if header {
            let seps: Vec<&str> = cells.iter().map(|_| "---").collect();
            let _ = writeln!(out, "| {} |", seps.join(" | "));
        }
    }
    fn end(&self, _out: &mut String) {}
}

impl TableStyle for Html {
    fn begin(&self, out: &mut String, title: &str) {
        let _ = writeln!(out, "<table class=\"{}\">", title.to_ascii_lowercase());
    }
    fn row(&self, out: &mut String, cells: &[String], header: bool) {
        let tag = if header { "th" } else { "td" };
        out.push_str("  <tr>");
        for c in cells {
            let _ = write!(out, "<{tag}>{}</{tag}>", html_escape(c));
        }
        out.push_str("</tr>\n");
    }
    fn end(&self, out: &mut String) {
        out.push_str("</table>\n");
    }
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tabular(
    sketch: &SketchGraph,
    rows: &Rows,
    loops: &[Vec<Vec2>],
    strategy: Strategy,
    num: &dyn Fn(f64) -> String,
    style: &dyn TableStyle,
) -> String {
    let mut out = String::new();
    let cols = columns(strategy);
    style.begin(&mut out, "Primitives");
    let mut header = vec!["id".to_string(), "type".to_string()];
    header.extend(cols.iter().map(|c| c.to_string()));
    style.row(&mut out, &header, true);
    for (id, kind, fields) in rows {
        let mut cells = vec![id.to_string(), kind.name().to_string()];
        for col in &cols {
            cells.push(fields.iter().find(|(n, _)| n == col).map(|(_, v)| num(*v)).unwrap_or_default());
        }
        style.row(&mut out, &cells, false);
    }
    style.end(&mut out);

    style.begin(&mut out, "Constraints");
    let header: Vec<String> = ["kind", "id_a", "subref_a", "id_b", "subref_b"].iter().map(|s| s.to_string()).collect();
    style.row(&mut out, &header, true);
    for c in sketch.constraints() {
        let refs = constraint_refs(c);
        let mut cells = vec![c.kind.name().to_string()];
        for i in 0..2 {
            match refs.get(i) {
                Some(r) => cells.extend([r.id.to_string(), r.sub.name().to_string()]),
                None => cells.extend([String::new(), String::new()]),
            }
        }
        style.row(&mut out, &cells, false);
    }
    style.end(&mut out);

    if !loops.is_empty() {
        style.begin(&mut out, "Loops");
        let header: Vec<String> = ["loop", "vertex", "x", "y"].iter().map(|s| s.to_string()).collect();
        style.row(&mut out, &header, true);
        for (li, lp) in loops.iter().enumerate() {
            for (vi, p) in lp.iter().enumerate() {
                style.row(&mut out, &[li.to_string(), vi.to_string(), num(p.x), num(p.y)], false);
            }
        }
        style.end(&mut out);
    }
    out
}

/// A parsed JSON document: the sketch plus any section loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub sketch: SketchGraph,
    pub loops: Vec<Vec<Vec2>>,
}

pub fn parse_json(text: &str) -> Result<SketchGraph, ParseError> {
    parse_document(text).map(|d| d.sketch)
}

pub fn parse_document(text: &str) -> Result<Document, ParseError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ParseError::Syntax(e.to_string()))?;
    let schema = |m: &str| ParseError::Schema(m.to_string());
    let obj = root.as_object().ok_or_else(|| schema("document must be an object"))?;
    if let Some(v) = obj.get("version") {
        if v.as_u64() != Some(FORMAT_VERSION) {
            return Err(schema(&format!("unsupported version {v}")));
        }
    }
    let strategy = match obj.get("strategy") {
        None => Strategy::PointBased,
        Some(v) => v
            .as_str()
            .and_then(Strategy::from_name)
            .ok_or_else(|| schema(&format!("unknown strategy {v}")))?,
    };
    let mut sketch = SketchGraph::new();
    let prims = match obj.get("primitives") {
        None => &Vec::new(),
        Some(v) => v.as_array().ok_or_else(|| schema("`primitives` must be an array"))?,
    };
    for (i, rec) in prims.iter().enumerate() {
        let rec = rec.as_object().ok_or_else(|| schema(&format!("primitive #{i} must be an object")))?;
        let id = rec
            .get("id")
            .and_then(Value::as_u64)
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| schema(&format!("primitive #{i}: missing or invalid `id`")))?;
        let kind_name = rec
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(&format!("primitive {id}: missing `type`")))?;
        let kind = PrimitiveKind::from_name(kind_name)
            .ok_or_else(|| schema(&format!("primitive {id}: unknown type `{kind_name}`")))?;
        let get = |name: &str| rec.get(name).and_then(Value::as_f64);
        let p = decode_fields(kind, strategy, get).map_err(|e| match e {
            SketchError::MalformedRecord(m) => ParseError::Schema(format!("primitive {id}: {m}")),
            other => ParseError::Invariant(other),
        })?;
        sketch.insert_with_id(PrimitiveId(id), p)?;
    }
    if let Some(next) = obj.get("next_id") {
        let next = next
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| schema("`next_id` must be a non-negative integer"))?;
        sketch.reserve_ids_until(next);
    }
    let constraints = match obj.get("constraints") {
        None => &Vec::new(),
        Some(v) => v.as_array().ok_or_else(|| schema("`constraints` must be an array"))?,
    };
    for (i, rec) in constraints.iter().enumerate() {
        sketch.add_constraint(parse_constraint(rec, i)?)?;
    }
    let mut loops = Vec::new();
    if let Some(v) = obj.get("loops") {
        let arr = v.as_array().ok_or_else(|| schema("`loops` must be an array"))?;
        for lp in arr {
            let pts = lp.as_array().ok_or_else(|| schema("loop must be an array of points"))?;
            let mut out = Vec::with_capacity(pts.len());
            for p in pts {
                match p.as_array().map(|a| a.as_slice()) {
                    Some([x, y]) => match (x.as_f64(), y.as_f64()) {
                        (Some(x), Some(y)) => out.push(Vec2::new(x, y)),
                        _ => return Err(schema("loop vertex must be two numbers")),
                    },
                    _ => return Err(schema("loop vertex must be [x, y]")),
                }
            }
            loops.push(out);
        }
    }
    sketch.validate()?;
    Ok(Document { sketch, loops })
}

/// Parses one constraint record `{"kind", "refs": [{"id", "subref"}, ...]}`;
/// `index` only labels error messages.
pub fn parse_constraint(rec: &Value, index: usize) -> Result<Constraint, ParseError> {
    let i = index;
    let schema = |m: &str| ParseError::Schema(m.to_string());
    let kind_name = rec
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(&format!("constraint #{i}: missing `kind`")))?;
    let kind = ConstraintKind::from_name(kind_name)
        .ok_or_else(|| schema(&format!("constraint #{i}: unknown kind `{kind_name}`")))?;
    let refs = rec
        .get("refs")
        .and_then(Value::as_array)
        .ok_or_else(|| schema(&format!("constraint #{i}: missing `refs`")))?;
    let parse_ref = |r: &Value| -> Result<Ref, ParseError> {
        let id = r
            .get("id")
            .and_then(Value::as_u64)
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| schema(&format!("constraint #{i}: bad ref id")))?;
        let sub = match r.get("subref") {
            None => SubRef::Entire,
            Some(Value::String(s)) => {
                SubRef::from_name(s).ok_or_else(|| schema(&format!("constraint #{i}: unknown subref `{s}`")))?
            }
            Some(Value::Number(n)) => n
                .as_u64()
                .and_then(|c| u8::try_from(c).ok())
                .and_then(SubRef::from_code)
                .ok_or_else(|| schema(&format!("constraint #{i}: unknown subref code {n}")))?,
            Some(v) => return Err(schema(&format!("constraint #{i}: bad subref {v}"))),
        };
        Ok(Ref::new(id, sub))
    };
    match refs.as_slice() {
        [a] => {
            let a = parse_ref(a)?;
            Ok(Constraint::new(kind, a, a))
        }
        [a, b] => Ok(Constraint::new(kind, parse_ref(a)?, parse_ref(b)?)),
        _ => Err(schema(&format!("constraint #{i}: expected 1 or 2 refs"))),
    }
}

/// Reads only the constraint list of a document (or a bare JSON array of
/// constraint records) without checking references against primitives.
pub fn parse_constraint_list(text: &str) -> Result<Vec<Constraint>, ParseError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ParseError::Syntax(e.to_string()))?;
    let list = match &root {
        Value::Array(a) => a,
        Value::Object(o) => match o.get("constraints") {
            None => return Ok(Vec::new()),
            Some(Value::Array(a)) => a,
            Some(_) => return Err(ParseError::Schema("`constraints` must be an array".into())),
        },
        _ => return Err(ParseError::Schema("expected an object or an array".into())),
    };
    list.iter().enumerate().map(|(i, rec)| parse_constraint(rec, i)).collect()
}

/// Parses a primitive given as a JSON object under `strategy`
/// (for example `{"type": "line", "x_s": 0, ...}`).
pub fn parse_primitive(value: &Value, strategy: Strategy) -> Result<Primitive, ParseError> {
    let kind_name = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::Schema("missing `type`".into()))?;
    let kind = PrimitiveKind::from_name(kind_name)
        .ok_or_else(|| ParseError::Schema(format!("unknown type `{kind_name}`")))?;
    decode_fields(kind, strategy, |n| value.get(n).and_then(Value::as_f64)).map_err(|e| match e {
        SketchError::MalformedRecord(m) => ParseError::Schema(m),
        other => ParseError::Invariant(other),
    })
}
