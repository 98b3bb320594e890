//! The action language and the planner reply grammar.
//!
//! An action is a list of tool calls, one per statement:
//!
//! ```text
//! $top = addGeometry(kind="line", start=[0, 0], end=[4, 0])
//! addConstraint("horizontal", $top)
//! # comments run to the end of the line
//! constraint_checker(kind="coincident", a=[$top, "end"], b="1.start")
//! ```
//!
//! Statements end at a newline or `;` outside brackets. Arguments are
//! literals (numbers, strings, `true`, `false`, `null`, lists, objects) or
//! references to bound outputs, optionally indexed: `$p.id`, `$loops[0]`.
//!
//! A planner reply is a plan line followed by one fenced action block, or
//! the single word `TERMINATE`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use thiserror::Error;

pub const TERMINATE: &str = "TERMINATE";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathSeg {
    Field(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var { name: String, path: Vec<PathSeg> },
    List(Vec<Expr>),
    Object(Vec<(String, Expr)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub tool: String,
    pub args: Vec<Arg>,
    pub bind: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub calls: Vec<ToolCall>,
}

impl Expr {
    /// Names of the variables this expression reads.
    pub fn vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var { name, .. } => out.push(name),
            Expr::List(items) => items.iter().for_each(|e| e.vars(out)),
            Expr::Object(fields) => fields.iter().for_each(|(_, e)| e.vars(out)),
        }
    }

    /// Evaluates against bound outputs.
    pub fn eval(&self, env: &BTreeMap<String, Value>) -> Result<Value, String> {
        match self {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Var { name, path } => {
                let mut cur = env.get(name).ok_or_else(|| format!("${name} is not bound"))?;
                for seg in path {
                    cur = match seg {
                        PathSeg::Field(f) => cur.get(f.as_str()).ok_or_else(|| format!("${name} has no field `{f}`"))?,
                        PathSeg::Index(i) => cur.get(*i).ok_or_else(|| format!("${name} has no element {i}"))?,
                    };
                }
                Ok(cur.clone())
            }
            Expr::List(items) => items.iter().map(|e| e.eval(env)).collect::<Result<Vec<_>, _>>().map(Value::Array),
            Expr::Object(fields) => {
                let mut m = Map::new();
                for (k, e) in fields {
                    m.insert(k.clone(), e.eval(env)?);
                }
                Ok(Value::Object(m))
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var { name, path } => {
                write!(f, "${name}")?;
                for seg in path {
                    match seg {
                        PathSeg::Field(s) => write!(f, ".{s}")?,
                        PathSeg::Index(i) => write!(f, "[{i}]")?,
                    }
                }
                Ok(())
            }
            Expr::List(items) => {
                write!(f, "[")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "]")
            }
            Expr::Object(fields) => {
                write!(f, "{{")?;
                for (i, (k, e)) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}: {e}", Value::String(k.clone()))?;
                }
                write!(f, "}}")
            }
        }
    }
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(b) = &self.bind {
            write!(f, "${b} = ")?;
        }
        write!(f, "{}(", self.tool)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if let Some(n) = &a.name {
                write!(f, "{n}=")?;
            }
            write!(f, "{}", a.value)?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.calls.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl Action {
    /// Checks that every `$var` is bound before it is read, either in
    /// `bound` or by an earlier call of this action. Returns the first
    /// unbound name.
    pub fn first_unbound<'a>(&'a self, bound: &BTreeMap<String, Value>) -> Option<(usize, &'a str)> {
        let mut local: Vec<&str> = Vec::new();
        for (i, call) in self.calls.iter().enumerate() {
            let mut used = Vec::new();
            for a in &call.args {
                a.value.vars(&mut used);
            }
            if let Some(v) = used.into_iter().find(|v| !bound.contains_key(*v) && !local.contains(v)) {
                return Some((i, v));
            }
            if let Some(b) = &call.bind {
                local.push(b);
            }
        }
        None
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    /// Bracket nesting; newlines are plain whitespace inside brackets.
    depth: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src: src.as_bytes(), pos: 0, depth: 0 }
    }

    fn error(&self, message: impl Into<String>) -> ScriptError {
        let before = &self.src[..self.pos.min(self.src.len())];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let column = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
        ScriptError { line, column, message: message.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    /// Skips spaces, comments and (inside brackets) newlines.
    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            match c {
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b'\n' if self.depth > 0 => self.pos += 1,
                b'#' => {
                    while self.peek().is_some_and(|c| c != b'\n') {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ScriptError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{}`", c as char)))
        }
    }

    fn ident(&mut self) -> Result<String, ScriptError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        if start == self.pos || self.src[start].is_ascii_digit() {
            self.pos = start;
            return Err(self.error("expected an identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn action(&mut self) -> Result<Action, ScriptError> {
        let mut calls = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(b'\n' | b';') => {
                    self.pos += 1;
                    continue;
                }
                _ => {}
            }
            calls.push(self.call()?);
            self.skip_ws();
            match self.peek() {
                None | Some(b'\n' | b';') => {}
                Some(_) => return Err(self.error("expected end of statement")),
            }
        }
        Ok(Action { calls })
    }

    fn call(&mut self) -> Result<ToolCall, ScriptError> {
        let bind = if self.eat(b'$') {
            let name = self.ident()?;
            self.expect(b'=')?;
            Some(name)
        } else {
            None
        };
        let tool = self.ident()?;
        self.expect(b'(')?;
        self.depth += 1;
        let mut args = Vec::new();
        let mut named_seen = false;
        if !self.eat(b')') {
            loop {
                let save = self.pos;
                let name = match self.ident() {
                    Ok(n) if self.eat(b'=') => Some(n),
                    _ => {
                        self.pos = save;
                        None
                    }
                };
                if name.is_some() {
                    named_seen = true;
                } else if named_seen {
                    return Err(self.error("positional argument after a named one"));
                }
                let value = self.expr()?;
                args.push(Arg { name, value });
                if self.eat(b')') {
                    break;
                }
                self.expect(b',')?;
                if self.eat(b')') {
                    break;
                }
            }
        }
        self.depth -= 1;
        Ok(ToolCall { tool, args, bind })
    }

    fn expr(&mut self) -> Result<Expr, ScriptError> {
        self.skip_ws();
        match self.peek() {
            Some(b'$') => {
                self.pos += 1;
                let name = self.ident()?;
                let mut path = Vec::new();
                loop {
                    match self.peek() {
                        Some(b'.') => {
                            self.pos += 1;
                            path.push(PathSeg::Field(self.ident()?));
                        }
                        Some(b'[') => {
                            self.pos += 1;
                            let start = self.pos;
                            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                                self.pos += 1;
                            }
                            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                            let i = digits.parse().map_err(|_| self.error("expected an index"))?;
                            if self.peek() != Some(b']') {
                                return Err(self.error("expected `]`"));
                            }
                            self.pos += 1;
                            path.push(PathSeg::Index(i));
                        }
                        _ => break,
                    }
                }
                Ok(Expr::Var { name, path })
            }
            Some(b'[') => {
                self.pos += 1;
                self.depth += 1;
                let mut items = Vec::new();
                if !self.eat(b']') {
                    loop {
                        items.push(self.expr()?);
                        if self.eat(b']') {
                            break;
                        }
                        self.expect(b',')?;
                        if self.eat(b']') {
                            break;
                        }
                    }
                }
                self.depth -= 1;
                Ok(Expr::List(items))
            }
            Some(b'{') => {
                self.pos += 1;
                self.depth += 1;
                let mut fields = Vec::new();
                if !self.eat(b'}') {
                    loop {
                        self.skip_ws();
                        let key = if self.peek() == Some(b'"') { self.string()? } else { self.ident()? };
                        self.expect(b':')?;
                        fields.push((key, self.expr()?));
                        if self.eat(b'}') {
                            break;
                        }
                        self.expect(b',')?;
                        if self.eat(b'}') {
                            break;
                        }
                    }
                }
                self.depth -= 1;
                Ok(Expr::Object(fields))
            }
            Some(b'"') => Ok(Expr::Lit(Value::String(self.string()?))),
            Some(c) if c == b'-' || c == b'+' || c == b'.' || c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let word = self.ident()?;
                match word.as_str() {
                    "true" | "True" => Ok(Expr::Lit(Value::Bool(true))),
                    "false" | "False" => Ok(Expr::Lit(Value::Bool(false))),
                    "null" | "None" => Ok(Expr::Lit(Value::Null)),
                    _ => Err(self.error(format!("unexpected word `{word}`; strings need double quotes"))),
                }
            }
            _ => Err(self.error("expected a value")),
        }
    }

    fn string(&mut self) -> Result<String, ScriptError> {
        let start = self.pos;
        self.pos += 1;
        loop {
            match self.peek() {
                None | Some(b'\n') => {
                    self.pos = start;
                    return Err(self.error("unterminated string"));
                }
                Some(b'\\') => self.pos += 2,
                Some(b'"') => {
                    self.pos += 1;
                    break;
                }
                Some(_) => self.pos += 1,
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.error("invalid UTF-8"))?;
        serde_json::from_str(text).map_err(|e| self.error(format!("bad string literal: {e}")))
    }

    fn number(&mut self) -> Result<Expr, ScriptError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || matches!(c, b'-' | b'+' | b'.' | b'e' | b'E')) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let text = text.strip_prefix('+').unwrap_or(text);
        if let Ok(i) = text.parse::<i64>() {
            return Ok(Expr::Lit(Value::Number(i.into())));
        }
        match text.parse::<f64>().ok().and_then(Number::from_f64) {
            Some(n) => Ok(Expr::Lit(Value::Number(n))),
            None => {
                let msg = format!("bad number `{text}`");
                self.pos = start;
                Err(self.error(msg))
            }
        }
    }
}

pub fn parse_action(src: &str) -> Result<Action, ScriptError> {
    Parser::new(src).action()
}

/// The planner's decision for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Plan {
    Text(String),
    Terminate,
}

impl Plan {
    pub fn is_terminate(&self) -> bool {
        matches!(self, Plan::Terminate)
    }

    pub fn as_str(&self) -> &str {
        match self {
            Plan::Text(t) => t,
            Plan::Terminate => TERMINATE,
        }
    }
}

impl Serialize for Plan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Plan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == TERMINATE { Plan::Terminate } else { Plan::Text(s) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplyError {
    #[error("reply is empty")]
    Empty,
    #[error("reply has no plan text before the action block")]
    MissingPlan,
    #[error("reply has no fenced action block")]
    MissingAction,
    #[error("action block is not closed with ```")]
    UnclosedFence,
    #[error("reply has more than one fenced block")]
    ExtraBlocks,
    #[error("TERMINATE must not carry an action")]
    TerminateWithAction,
    #[error("action block is empty")]
    EmptyAction,
    #[error("action script: {0}")]
    Script(#[from] ScriptError),
}

/// A parsed reply: the plan, the action's source text and its calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub plan: Plan,
    pub action: Option<(String, Action)>,
}

fn strip_plan_label(s: &str) -> &str {
    let t = s.trim();
    for label in ["PLAN:", "Plan:", "plan:"] {
        if let Some(rest) = t.strip_prefix(label) {
            return rest.trim();
        }
    }
    t
}

pub fn parse_reply(text: &str) -> Result<Reply, ReplyError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ReplyError::Empty);
    }
    let Some(open) = text.find("```") else {
        let plan = strip_plan_label(text);
        if plan.trim_matches(|c: char| c == '*' || c.is_whitespace()) == TERMINATE {
            return Ok(Reply { plan: Plan::Terminate, action: None });
        }
        return Err(ReplyError::MissingAction);
    };
    let plan = strip_plan_label(&text[..open]);
    if plan.is_empty() {
        return Err(ReplyError::MissingPlan);
    }
    if plan == TERMINATE {
        return Err(ReplyError::TerminateWithAction);
    }
    let after = &text[open + 3..];
    // the info string (e.g. `action`) runs to the end of the fence line
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let close = body.find("```").ok_or(ReplyError::UnclosedFence)?;
    if body[close + 3..].contains("```") {
        return Err(ReplyError::ExtraBlocks);
    }
    let source = body[..close].trim_end().to_string();
    let action = parse_action(&source)?;
    if action.calls.is_empty() {
        return Err(ReplyError::EmptyAction);
    }
    Ok(Reply { plan: Plan::Text(plan.to_string()), action: Some((source, action)) })
}

/// Renders a reply in the grammar `parse_reply` accepts.
pub fn format_reply(plan: &str, action: Option<&str>) -> String {
    match action {
        Some(a) => format!("PLAN: {plan}\n```action\n{}\n```", a.trim_end()),
        None => plan.to_string(),
    }
}
