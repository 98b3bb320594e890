//! Batch runners: solve-before-evaluate for autoconstraining, and token
//! accuracy plus chamfer distance for parameterization.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chamfer::chamfer_with;
use super::matching::match_primitives;
use super::metrics::{accuracy, constraint_counts, primitive_counts, AccuracyMode, Counts, PF1_TOLERANCE};
use crate::par::Exec;
use crate::quantize::{quantize_with, Normalization};
use crate::render::{render_sketch_in, Canvas, DEFAULT_SIZE};
use crate::serialize::{parse_constraint_list, parse_json};
use crate::sketch::{Constraint, SketchGraph};
use crate::solver::{solve_with, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub tolerance: u32,
    pub accuracy_mode: AccuracyMode,
    /// Side of the square canvas used for chamfer distance.
    pub image_size: u32,
    pub solver: SolverConfig,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerance: PF1_TOLERANCE,
            accuracy_mode: AccuracyMode::default(),
            image_size: DEFAULT_SIZE,
            solver: SolverConfig::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoconstrainItem {
    pub name: String,
    /// Constrained ground truth; its primitives are the ones predictions
    /// are applied to.
    pub gt: SketchGraph,
    pub predicted: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamItem {
    pub name: String,
    pub gt: SketchGraph,
    pub pred: SketchGraph,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pf1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cd: Option<f64>,
    pub primitives: Counts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Counts>,
    /// Predicted constraints that could not be applied, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ItemReport {
    fn failed(name: &str, error: impl Into<String>) -> Self {
        Self { name: name.to_string(), error: Some(error.into()), ..Self::default() }
    }
}

/// Means over items. Failed items score zero in F1 and accuracy and are
/// left out of the chamfer mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub n_items: usize,
    pub n_errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pf1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    /// Squared pixels at `image_size`².
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cd: Option<f64>,
    /// `cd / image_size²`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cd_normalized: Option<f64>,
    pub image_size: u32,
    pub primitives: Counts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Counts>,
    pub items: Vec<ItemReport>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    fn aggregate(task: &str, items: Vec<ItemReport>, image_size: u32) -> Self {
        let has = |f: fn(&ItemReport) -> Option<f64>| items.iter().any(|i| f(i).is_some());
        let score_mean = |f: fn(&ItemReport) -> Option<f64>| {
            has(f).then(|| mean(items.iter().map(|i| f(i).unwrap_or(0.0))).unwrap_or(0.0))
        };
        let pf1 = score_mean(|i| i.pf1);
        let cf1 = score_mean(|i| i.cf1);
        let acc = score_mean(|i| i.acc);
        let cd = mean(items.iter().filter_map(|i| i.cd));
        let mut primitives = Counts::default();
        let mut constraints: Option<Counts> = None;
        for i in &items {
            primitives.add(i.primitives);
            if let Some(c) = i.constraints {
                constraints.get_or_insert_with(Counts::default).add(c);
            }
        }
        Self {
            task: task.to_string(),
            n_items: items.len(),
            n_errors: items.iter().filter(|i| i.error.is_some()).count(),
            pf1,
            cf1,
            acc,
            cd,
            cd_normalized: cd.map(|c| c / f64::from(image_size).powi(2)),
            image_size,
            primitives,
            constraints,
            items,
        }
    }

    /// Adds items that failed before scoring (for example unreadable files)
    /// and recomputes the aggregates.
    pub fn with_failures(self, failures: Vec<(String, String)>) -> Self {
        if failures.is_empty() {
            return self;
        }
        let mut items = self.items;
        items.extend(failures.iter().map(|(n, e)| ItemReport::failed(n, e.as_str())));
        Self::aggregate(&self.task, items, self.image_size)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task      {}", self.task);
        let _ = writeln!(s, "items     {} ({} failed)", self.n_items, self.n_errors);
        let row = |s: &mut String, label: &str, v: Option<f64>| {
            if let Some(v) = v {
                let _ = writeln!(s, "{label:<9} {v:.4}");
            }
        };
        row(&mut s, "PF1", self.pf1);
        row(&mut s, "CF1", self.cf1);
        row(&mut s, "Acc", self.acc);
        row(&mut s, "CD", self.cd);
        row(&mut s, "CD/w²", self.cd_normalized);
        let c = self.primitives;
        let _ = writeln!(s, "prims     tp {} fp {} fn {}", c.tp, c.fp, c.fn_);
        if let Some(c) = self.constraints {
            let _ = writeln!(s, "cons      tp {} fp {} fn {}", c.tp, c.fp, c.fn_);
        }
        let _ = writeln!(s);
        let width = self.items.iter().map(|i| i.name.len()).max().unwrap_or(4).max(4);
        let _ = writeln!(s, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>9}  note", "item", "PF1", "CF1", "Acc", "CD");
        let cell = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |v| format!("{v:.prec$}"));
        for i in &self.items {
            let note = match (&i.error, i.skipped.len()) {
                (Some(e), _) => e.clone(),
                (None, 0) => String::new(),
                (None, n) => format!("{n} constraint(s) skipped"),
            };
            let _ = writeln!(
                s,
                "{:<width$}  {:>6}  {:>6}  {:>6}  {:>9}  {note}",
                i.name,
                cell(i.pf1, 3),
                cell(i.cf1, 3),
                cell(i.acc, 3),
                cell(i.cd, 2)
            );
        }
        s
    }
}

/// Applies each item's predicted constraints to its bare primitives,
/// solves, and scores the result against the solved ground truth, both
/// quantized on the ground truth's normalization.
pub fn run_autoconstrain_eval(items: &[AutoconstrainItem], cfg: &EvalConfig) -> EvalReport {
    let reports = cfg.exec.map(items, |item| autoconstrain_item(item, cfg));
    EvalReport::aggregate("autoconstrain", reports, cfg.image_size)
}

fn autoconstrain_item(item: &AutoconstrainItem, cfg: &EvalConfig) -> ItemReport {
    let fail = |e: String| ItemReport::failed(&item.name, e);
    let gt = match solve_with(&item.gt, &cfg.solver) {
        Ok(r) if r.converged => r.solved,
        Ok(r) => return fail(format!("ground truth does not solve (residual {:.3e})", r.residual_norm)),
        Err(e) => return fail(format!("ground truth: {e}")),
    };
    let mut bare = item.gt.without_constraints();
    let mut skipped = Vec::new();
    for c in &item.predicted {
        if let Err(e) = bare.add_constraint(*c) {
            skipped.push(format!("{c}: {e}"));
        }
    }
    let pred = match solve_with(&bare, &cfg.solver) {
        Ok(r) => r,
        Err(e) => return fail(format!("prediction: {e}")),
    };
    let norm = match Normalization::of(&gt) {
        Ok(n) => n,
        Err(e) => return fail(format!("ground truth: {e}")),
    };
    let qg = quantize_with(&gt, norm);
    let qp = quantize_with(&pred.solved, norm);
    let m = match_primitives(&qg, &qp);
    let primitives = primitive_counts(&qg, &qp, &m, cfg.tolerance);
    let constraints = constraint_counts(&qg, &qp, &m, cfg.tolerance);
    ItemReport {
        name: item.name.clone(),
        pf1: Some(primitives.f1()),
        cf1: Some(constraints.f1()),
        primitives,
        constraints: Some(constraints),
        skipped,
        converged: Some(pred.converged),
        ..ItemReport::default()
    }
}

/// Scores predicted parameterizations: PF1 and token accuracy on the gt
/// normalization, and chamfer distance between renderings that share the
/// gt canvas.
pub fn run_param_eval(items: &[ParamItem], cfg: &EvalConfig) -> EvalReport {
    // items already run in parallel; keep the per-image transform sequential
    let inner = EvalConfig { exec: Exec::Sequential, ..*cfg };
    let reports = cfg.exec.map(items, |item| param_item(item, &inner));
    EvalReport::aggregate("param", reports, cfg.image_size)
}

fn param_item(item: &ParamItem, cfg: &EvalConfig) -> ItemReport {
    let fail = |e: String| ItemReport::failed(&item.name, e);
    let norm = match Normalization::of(&item.gt) {
        Ok(n) => n,
        Err(e) => return fail(format!("ground truth: {e}")),
    };
    let qg = quantize_with(&item.gt, norm);
    let qp = quantize_with(&item.pred, norm);
    let m = match_primitives(&qg, &qp);
    let primitives = primitive_counts(&qg, &qp, &m, cfg.tolerance);
    let acc = accuracy(&qg, &qp, &m, cfg.accuracy_mode);
    let canvas = Canvas::fit(item.gt.drawn_bounds(), cfg.image_size, cfg.image_size);
    let cd = if item.pred.is_empty() {
        None
    } else {
        let render = |s: &SketchGraph| render_sketch_in(s, canvas, false).map(|r| r.mask);
        match (render(&item.gt), render(&item.pred)) {
            (Ok(a), Ok(b)) => chamfer_with(&a, &b, cfg.exec).ok(),
            _ => None,
        }
    };
    ItemReport {
        name: item.name.clone(),
        pf1: Some(primitives.f1()),
        acc: Some(acc),
        cd,
        primitives,
        error: cd.is_none().then(|| "prediction renders empty".to_string()),
        ..ItemReport::default()
    }
}

const SUFFIX: &str = ".sketch.json";

/// Item names in `gt_dir`: the `manifest.json` list when present
/// (an array of names, or `{"items": [...]}`), otherwise every
/// `*.sketch.json` file, sorted.
pub fn dataset_names(gt_dir: &Path) -> std::io::Result<Vec<String>> {
    let manifest = gt_dir.join("manifest.json");
    if manifest.exists() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest)?)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let list = v.get("items").unwrap_or(&v);
        let names = list
            .as_array()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "manifest must list item names"))?
            .iter()
            .filter_map(|n| n.as_str().map(|s| s.trim_end_matches(SUFFIX).to_string()))
            .collect();
        return Ok(names);
    }
    let mut names: Vec<String> = fs::read_dir(gt_dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(SUFFIX)).map(String::from))
        .collect();
    names.sort();
    Ok(names)
}

fn item_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}{SUFFIX}"))
}

/// Loaded items plus `(name, reason)` for items that could not be read.
pub struct Dataset<T> {
    pub items: Vec<T>,
    pub failures: Vec<(String, String)>,
}

/// Pairs `gt_dir/<name>.sketch.json` with `pred_dir/<name>.sketch.json`;
/// only the prediction's constraint list is used.
pub fn load_autoconstrain_dir(gt_dir: &Path, pred_dir: &Path) -> std::io::Result<Dataset<AutoconstrainItem>> {
    let mut out = Dataset { items: Vec::new(), failures: Vec::new() };
    for name in dataset_names(gt_dir)? {
        let loaded = fs::read_to_string(item_path(gt_dir, &name))
            .map_err(|e| format!("ground truth: {e}"))
            .and_then(|t| parse_json(&t).map_err(|e| format!("ground truth: {e}")))
            .and_then(|gt| {
                let text = fs::read_to_string(item_path(pred_dir, &name)).map_err(|e| format!("prediction: {e}"))?;
                let predicted = parse_constraint_list(&text).map_err(|e| format!("prediction: {e}"))?;
                Ok(AutoconstrainItem { name: name.clone(), gt, predicted })
            });
        match loaded {
            Ok(item) => out.items.push(item),
            Err(e) => out.failures.push((name, e)),
        }
    }
    Ok(out)
}

pub fn load_param_dir(gt_dir: &Path, pred_dir: &Path) -> std::io::Result<Dataset<ParamItem>> {
    let mut out = Dataset { items: Vec::new(), failures: Vec::new() };
    for name in dataset_names(gt_dir)? {
        let read = |dir: &Path, what: &str| {
            fs::read_to_string(item_path(dir, &name))
                .map_err(|e| format!("{what}: {e}"))
                .and_then(|t| parse_json(&t).map_err(|e| format!("{what}: {e}")))
        };
        match read(gt_dir, "ground truth").and_then(|gt| Ok((gt, read(pred_dir, "prediction")?))) {
            Ok((gt, pred)) => out.items.push(ParamItem { name, gt, pred }),
            Err(e) => out.failures.push((name, e)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{ConstraintKind, Primitive, Ref, SubRef};

    fn square() -> SketchGraph {
        let mut s = SketchGraph::new();
        let pts = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
        for i in 0..4 {
            let (a, b) = (pts[i], pts[(i + 1) % 4]);
            s.add_primitive(Primitive::line(a.0, a.1, b.0, b.1)).unwrap();
        }
        for i in 0..4u32 {
            let c = Constraint::new(ConstraintKind::Coincident, Ref::new(i, SubRef::End), Ref::new((i + 1) % 4, SubRef::Start));
            s.add_constraint(c).unwrap();
        }
        s.add_constraint(Constraint::unary(ConstraintKind::Horizontal, 0)).unwrap();
        s.add_constraint(Constraint::unary(ConstraintKind::Vertical, 1)).unwrap();
        s.add_constraint(pair(ConstraintKind::Parallel, 0, 2)).unwrap();
        s
    }

    fn pair(kind: ConstraintKind, a: u32, b: u32) -> Constraint {
        Constraint::new(kind, Ref::entire(a), Ref::entire(b))
    }

    #[test]
    fn gt_constraints_score_perfectly() {
        let gt = square();
        let item = AutoconstrainItem { name: "sq".into(), predicted: gt.constraints().to_vec(), gt };
        let r = run_autoconstrain_eval(&[item], &EvalConfig::default());
        assert_eq!(r.pf1, Some(1.0));
        assert_eq!(r.cf1, Some(1.0));
        assert_eq!(r.n_errors, 0);
    }

    #[test]
    fn empty_prediction() {
        let gt = square();
        let item = AutoconstrainItem { name: "sq".into(), predicted: vec![], gt };
        let r = run_autoconstrain_eval(&[item], &EvalConfig::default());
        assert_eq!(r.pf1, Some(1.0));
        assert_eq!(r.cf1, Some(0.0));
    }

    #[test]
    fn destructive_prediction_lowers_pf1() {
        let gt = square();
        // forcing the bottom edge onto the right edge's far end wrecks the square
        let bad = vec![
            Constraint::new(ConstraintKind::Coincident, Ref::new(0, SubRef::Start), Ref::new(2, SubRef::Start)),
            pair(ConstraintKind::Perpendicular, 0, 2),
        ];
        let base = run_autoconstrain_eval(
            &[AutoconstrainItem { name: "a".into(), gt: gt.clone(), predicted: vec![] }],
            &EvalConfig::default(),
        );
        let r = run_autoconstrain_eval(&[AutoconstrainItem { name: "b".into(), gt, predicted: bad }], &EvalConfig::default());
        assert!(r.pf1.unwrap() < base.pf1.unwrap(), "{}", r.to_table());
    }

    #[test]
    fn inadmissible_constraints_are_skipped_not_fatal() {
        let gt = square();
        let bad = vec![Constraint::unary(ConstraintKind::Horizontal, 99)];
        let r = run_autoconstrain_eval(&[AutoconstrainItem { name: "x".into(), gt, predicted: bad }], &EvalConfig::default());
        assert_eq!(r.n_errors, 0);
        assert_eq!(r.items[0].skipped.len(), 1);
    }

    #[test]
    fn param_eval_identity_and_shift() {
        let gt = square().without_constraints();
        let same = ParamItem { name: "same".into(), gt: gt.clone(), pred: gt.clone() };
        let r = run_param_eval(&[same], &EvalConfig::default());
        assert_eq!(r.acc, Some(1.0));
        assert_eq!(r.cd, Some(0.0));
        let mut shifted = SketchGraph::new();
        for (_, p) in gt.primitives() {
            if let Primitive::Line { start, end } = *p {
                shifted.add_primitive(Primitive::line(start.x + 1.0, start.y, end.x + 1.0, end.y)).unwrap();
            }
        }
        let r = run_param_eval(&[ParamItem { name: "moved".into(), gt, pred: shifted }], &EvalConfig::default());
        assert!(r.acc.unwrap() < 1.0);
        assert!(r.cd.unwrap() > 0.0);
        assert!(r.to_table().contains("moved"));
    }

    #[test]
    fn failures_count_as_zero() {
        let gt = square();
        let item = AutoconstrainItem { name: "ok".into(), predicted: gt.constraints().to_vec(), gt };
        let r = run_autoconstrain_eval(&[item], &EvalConfig::default())
            .with_failures(vec![("missing".into(), "prediction: not found".into())]);
        assert_eq!(r.n_items, 2);
        assert_eq!(r.n_errors, 1);
        assert_eq!(r.pf1, Some(0.5));
    }
}
