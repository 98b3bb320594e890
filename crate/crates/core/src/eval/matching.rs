//! Primitive correspondence by minimum-cost assignment.

use serde::{Deserialize, Serialize};

use crate::quantize::{QuantizedPrimitive, QuantizedSketch};
use crate::sketch::PrimitiveId;

/// Cost of pairing primitives of different types.
pub const TYPE_MISMATCH_COST: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `(gt, pred)` pairs, ordered by gt id.
    pub pairs: Vec<(PrimitiveId, PrimitiveId)>,
    pub unmatched_gt: Vec<PrimitiveId>,
    pub unmatched_pred: Vec<PrimitiveId>,
    pub total_cost: f64,
}

impl Matching {
    pub fn pred_to_gt(&self, pred: PrimitiveId) -> Option<PrimitiveId> {
        self.pairs.iter().find(|(_, p)| *p == pred).map(|(g, _)| *g)
    }
}

/// Sum of per-token distances, or the type penalty.
pub fn pair_cost(gt: &QuantizedPrimitive, pred: &QuantizedPrimitive) -> i64 {
    if gt.kind != pred.kind {
        return TYPE_MISMATCH_COST;
    }
    gt.token_distances(pred).map(i64::from).sum()
}

/// Minimum-cost assignment on a rectangular cost matrix. Returns
/// `min(rows, cols)` `(row, col)` pairs sorted by row.
pub fn assignment(cost: &[Vec<i64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows <= cols {
        hungarian(rows, cols, |i, j| cost[i][j]).into_iter().enumerate().collect()
    } else {
        let mut pairs: Vec<(usize, usize)> =
            hungarian(cols, rows, |i, j| cost[j][i]).into_iter().enumerate().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Shortest augmenting path with potentials, O(n²m) for n ≤ m. Row `i`
/// is assigned column `result[i]`.
fn hungarian(n: usize, m: usize, cost: impl Fn(usize, usize) -> i64) -> Vec<usize> {
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

fn sorted(q: &QuantizedSketch) -> Vec<&QuantizedPrimitive> {
    let mut v: Vec<_> = q.primitives.iter().collect();
    v.sort_by_key(|p| p.id);
    v
}

/// Matches primitives of two sketches quantized on the same normalization.
pub fn match_primitives(gt: &QuantizedSketch, pred: &QuantizedSketch) -> Matching {
    let g = sorted(gt);
    let p = sorted(pred);
    let cost: Vec<Vec<i64>> = g.iter().map(|a| p.iter().map(|b| pair_cost(a, b)).collect()).collect();
    let assigned = assignment(&cost);
    let total: i64 = assigned.iter().map(|&(i, j)| cost[i][j]).sum();
    let mut gt_used = vec![false; g.len()];
    let mut pred_used = vec![false; p.len()];
    let pairs = assigned
        .iter()
        .map(|&(i, j)| {
            gt_used[i] = true;
            pred_used[j] = true;
            (g[i].id, p[j].id)
        })
        .collect();
    let unmatched = |v: &[&QuantizedPrimitive], used: &[bool]| {
        v.iter().zip(used).filter(|(_, u)| !**u).map(|(q, _)| q.id).collect()
    };
    Matching {
        pairs,
        unmatched_gt: unmatched(&g, &gt_used),
        unmatched_pred: unmatched(&p, &pred_used),
        total_cost: total as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_matrix() {
        let c = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = assignment(&c);
        let total: i64 = a.iter().map(|&(i, j)| c[i][j]).sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn rectangular_both_ways() {
        let c = vec![vec![10, 1], vec![1, 10], vec![5, 5]];
        let a = assignment(&c);
        assert_eq!(a, vec![(0, 1), (1, 0)]);
        let t: Vec<Vec<i64>> = (0..2).map(|j| (0..3).map(|i| c[i][j]).collect()).collect();
        assert_eq!(assignment(&t), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn empty() {
        assert!(assignment(&[]).is_empty());
        assert!(assignment(&[vec![], vec![]]).is_empty());
    }
}
