//! PF1, CF1 and token accuracy over a primitive matching.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::matching::Matching;
use crate::quantize::QuantizedSketch;
use crate::sketch::{Constraint, PrimitiveId, Ref};

/// Maximum per-token distance for a primitive true positive.
pub const PF1_TOLERANCE: u32 = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR/(P+R)`, zero when undefined.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Matched pairs whose types agree and whose tokens are all within `tol`.
pub fn true_positive_pairs(
    gt: &QuantizedSketch,
    pred: &QuantizedSketch,
    m: &Matching,
    tol: u32,
) -> HashSet<(PrimitiveId, PrimitiveId)> {
    m.pairs
        .iter()
        .filter(|(g, p)| match (gt.get(*g), pred.get(*p)) {
            (Some(a), Some(b)) => a.kind == b.kind && a.token_distances(b).all(|d| d <= tol),
            _ => false,
        })
        .copied()
        .collect()
}

pub fn primitive_counts(gt: &QuantizedSketch, pred: &QuantizedSketch, m: &Matching, tol: u32) -> Counts {
    let tp = true_positive_pairs(gt, pred, m, tol).len();
    Counts { tp, fp: pred.primitives.len() - tp, fn_: gt.primitives.len() - tp }
}

pub fn pf1(gt: &QuantizedSketch, pred: &QuantizedSketch, m: &Matching) -> f64 {
    primitive_counts(gt, pred, m, PF1_TOLERANCE).f1()
}

/// A predicted constraint counts when, mapped through the matching, it
/// equals a not-yet-claimed gt constraint and every primitive it touches
/// is a primitive true positive.
pub fn constraint_counts(gt: &QuantizedSketch, pred: &QuantizedSketch, m: &Matching, tol: u32) -> Counts {
    let tps = true_positive_pairs(gt, pred, m, tol);
    let mut claimed = vec![false; gt.constraints.len()];
    let mut tp = 0;
    for c in &pred.constraints {
        let map = |r: Ref| {
            let g = m.pred_to_gt(r.id)?;
            tps.contains(&(g, r.id)).then_some(Ref { id: g, sub: r.sub })
        };
        let (Some(a), Some(b)) = (map(c.a), map(c.b)) else { continue };
        let mapped = Constraint::new(c.kind, a, b);
        if let Some(k) = gt.constraints.iter().enumerate().position(|(k, g)| !claimed[k] && g.same_as(&mapped)) {
            claimed[k] = true;
            tp += 1;
        }
    }
    Counts { tp, fp: pred.constraints.len() - tp, fn_: gt.constraints.len() - tp }
}

pub fn cf1(gt: &QuantizedSketch, pred: &QuantizedSketch, m: &Matching) -> f64 {
    constraint_counts(gt, pred, m, PF1_TOLERANCE).f1()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Fraction of gt tokens reproduced exactly.
    #[default]
    PerToken,
    /// Fraction of gt primitives with every token reproduced exactly.
    PerPrimitive,
}

/// Exact-token accuracy; unmatched or type-mismatched gt primitives miss
/// all of their tokens.
pub fn accuracy(gt: &QuantizedSketch, pred: &QuantizedSketch, m: &Matching, mode: AccuracyMode) -> f64 {
    let mut hit = 0usize;
    for &(g, p) in &m.pairs {
        let (Some(a), Some(b)) = (gt.get(g), pred.get(p)) else { continue };
        if a.kind != b.kind {
            continue;
        }
        let same = a.tokens.iter().zip(&b.tokens).filter(|(x, y)| x == y).count();
        hit += match mode {
            AccuracyMode::PerToken => same,
            AccuracyMode::PerPrimitive => usize::from(same == a.tokens.len()),
        };
    }
    let total = match mode {
        AccuracyMode::PerToken => gt.token_count(),
        AccuracyMode::PerPrimitive => gt.primitives.len(),
    };
    ratio(hit, total)
}
