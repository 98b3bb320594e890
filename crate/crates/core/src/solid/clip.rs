//! Greiner–Hormann clipping of even-odd polygon sets.
//!
//! Both operands may hold several contours. Contours that touch the other
//! operand's boundary are traced through the intersection graph; the rest
//! are kept or dropped by a containment test. Degenerate configurations
//! (vertices on edges, overlapping collinear edges) are avoided by retrying
//! with the second operand shifted by a tiny deterministic offset.

use crate::geom::{Bounds2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipOp {
    Union,
    Intersection,
    /// First operand minus the second.
    Difference,
}

/// Even-odd membership over all contours (half-open crossing rule).
pub fn point_in_loops(loops: &[Vec<Vec2>], p: Vec2) -> bool {
    let mut inside = false;
    for lp in loops {
        let n = lp.len();
        for i in 0..n {
            let (a, b) = (lp[i], lp[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if x > p.x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn clean(loops: &[Vec<Vec2>]) -> Vec<Vec<Vec2>> {
    loops
        .iter()
        .map(|lp| {
            let mut v = lp.clone();
            v.dedup_by(|a, b| a.distance(*b) <= 1e-15);
            while v.len() > 1 && v[0].distance(v[v.len() - 1]) <= 1e-15 {
                v.pop();
            }
            v
        })
        .filter(|v| v.len() >= 3)
        .collect()
}

fn bounds_of(sets: &[&[Vec<Vec2>]]) -> Bounds2 {
    let mut b = Bounds2::empty();
    for set in sets {
        for p in set.iter().flatten() {
            b.include(*p);
        }
    }
    b
}

/// Boolean combination of two even-odd polygon sets.
pub fn clip(a: &[Vec<Vec2>], b: &[Vec<Vec2>], op: ClipOp) -> Vec<Vec<Vec2>> {
    let a = clean(a);
    let b = clean(b);
    if a.is_empty() {
        return if op == ClipOp::Union { b } else { Vec::new() };
    }
    if b.is_empty() {
        return if op == ClipOp::Intersection { Vec::new() } else { a };
    }
    let scale = bounds_of(&[&a, &b]).diagonal().max(1e-300);
    const GOLDEN: f64 = 2.399_963_229_728_653;
    for attempt in 0..16 {
        let shift = if attempt == 0 {
            Vec2::ZERO
        } else {
            Vec2::from_angle(GOLDEN * attempt as f64) * (scale * 1e-10 * attempt as f64)
        };
        let moved: Vec<Vec<Vec2>> = b.iter().map(|lp| lp.iter().map(|&p| p + shift).collect()).collect();
        if let Some(out) = clip_once(&a, &moved, op, scale) {
            return out;
        }
    }
    log::warn!("polygon clipping stayed degenerate after perturbation; falling back to containment rules");
    containment_only(&a, &b, op, &[], &[])
}

#[derive(Debug, Clone)]
struct Node {
    p: Vec2,
    next: usize,
    prev: usize,
    intersect: bool,
    entry: bool,
    neighbor: usize,
    visited: bool,
}

struct Graph {
    nodes: Vec<Node>,
    /// First node of each contour.
    heads: Vec<usize>,
    touched: Vec<bool>,
}

struct Hit {
    ta: f64,
    tb: f64,
    p: Vec2,
    a: (usize, usize),
    b: (usize, usize),
}

fn find_hits(a: &[Vec<Vec2>], b: &[Vec<Vec2>], scale: f64) -> Option<Vec<Hit>> {
    const EPS: f64 = 1e-9;
    let tol = 1e-12 * scale;
    let mut hits = Vec::new();
    let edge_boxes = |set: &[Vec<Vec2>]| -> Vec<Vec<(Vec2, Vec2)>> {
        set.iter()
            .map(|lp| {
                (0..lp.len())
                    .map(|i| {
                        let (p, q) = (lp[i], lp[(i + 1) % lp.len()]);
                        (Vec2::new(p.x.min(q.x), p.y.min(q.y)), Vec2::new(p.x.max(q.x), p.y.max(q.y)))
                    })
                    .collect()
            })
            .collect()
    };
    let boxes_b = edge_boxes(b);
    for (ca, la) in a.iter().enumerate() {
        for i in 0..la.len() {
            let (a0, a1) = (la[i], la[(i + 1) % la.len()]);
            let (lo, hi) = (Vec2::new(a0.x.min(a1.x) - tol, a0.y.min(a1.y) - tol), Vec2::new(a0.x.max(a1.x) + tol, a0.y.max(a1.y) + tol));
            for (cb, lb) in b.iter().enumerate() {
                for j in 0..lb.len() {
                    let (blo, bhi) = boxes_b[cb][j];
                    if bhi.x < lo.x || blo.x > hi.x || bhi.y < lo.y || blo.y > hi.y {
                        continue;
                    }
                    let (b0, b1) = (lb[j], lb[(j + 1) % lb.len()]);
                    let r = a1 - a0;
                    let s = b1 - b0;
                    let qp = b0 - a0;
                    let denom = r.cross(s);
                    if denom.abs() <= 1e-14 * r.norm() * s.norm() {
                        // parallel: overlapping collinear edges are degenerate
                        let rn = r.norm();
                        if rn > 0.0 && (qp.cross(r) / rn).abs() <= tol {
                            let t0 = qp.dot(r) / (rn * rn);
                            let t1 = (b1 - a0).dot(r) / (rn * rn);
                            if t0.max(t1) >= -EPS && t0.min(t1) <= 1.0 + EPS {
                                return None;
                            }
                        }
                        continue;
                    }
                    let t = qp.cross(s) / denom;
                    let u = qp.cross(r) / denom;
                    if t <= -EPS || t >= 1.0 + EPS || u <= -EPS || u >= 1.0 + EPS {
                        continue;
                    }
                    if t < EPS || t > 1.0 - EPS || u < EPS || u > 1.0 - EPS {
                        return None;
                    }
                    hits.push(Hit { ta: t, tb: u, p: a0 + r * t, a: (ca, i), b: (cb, j) });
                }
            }
        }
    }
    Some(hits)
}

/// Builds the node rings; returns the graph and, per hit, its node index.
fn build(set: &[Vec<Vec2>], hits: &[Hit], pick: impl Fn(&Hit) -> ((usize, usize), f64)) -> (Graph, Vec<usize>) {
    let mut per_edge: Vec<Vec<Vec<(f64, usize)>>> = set.iter().map(|lp| vec![Vec::new(); lp.len()]).collect();
    for (k, h) in hits.iter().enumerate() {
        let ((c, e), t) = pick(h);
        per_edge[c][e].push((t, k));
    }
    let mut nodes = Vec::new();
    let mut heads = Vec::new();
    let mut touched = Vec::new();
    let mut hit_node = vec![usize::MAX; hits.len()];
    for (c, lp) in set.iter().enumerate() {
        let first = nodes.len();
        heads.push(first);
        touched.push(per_edge[c].iter().any(|e| !e.is_empty()));
        for (i, &p) in lp.iter().enumerate() {
            nodes.push(Node { p, next: 0, prev: 0, intersect: false, entry: false, neighbor: 0, visited: false });
            let mut xs = per_edge[c][i].clone();
            xs.sort_by(|x, y| x.0.total_cmp(&y.0));
            for (_, k) in xs {
                hit_node[k] = nodes.len();
                nodes.push(Node {
                    p: hits[k].p,
                    next: 0,
                    prev: 0,
                    intersect: true,
                    entry: false,
                    neighbor: 0,
                    visited: false,
                });
            }
        }
        let last = nodes.len();
        for n in first..last {
            nodes[n].next = if n + 1 == last { first } else { n + 1 };
            nodes[n].prev = if n == first { last - 1 } else { n - 1 };
        }
    }
    (Graph { nodes, heads, touched }, hit_node)
}

fn mark_entries(g: &mut Graph, other: &[Vec<Vec2>], flip: bool) {
    for (c, &head) in g.heads.iter().enumerate() {
        if !g.touched[c] {
            continue;
        }
        let mut inside = point_in_loops(other, g.nodes[head].p);
        let mut n = head;
        loop {
            if g.nodes[n].intersect {
                g.nodes[n].entry = !inside != flip;
                inside = !inside;
            }
            n = g.nodes[n].next;
            if n == head {
                break;
            }
        }
    }
}

fn containment_only(
    a: &[Vec<Vec2>],
    b: &[Vec<Vec2>],
    op: ClipOp,
    skip_a: &[bool],
    skip_b: &[bool],
) -> Vec<Vec<Vec2>> {
    let mut out = Vec::new();
    for (i, lp) in a.iter().enumerate() {
        if skip_a.get(i).copied().unwrap_or(false) {
            continue;
        }
        let inside = point_in_loops(b, lp[0]);
        let keep = match op {
            ClipOp::Intersection => inside,
            ClipOp::Union | ClipOp::Difference => !inside,
        };
        if keep {
            out.push(lp.clone());
        }
    }
    for (i, lp) in b.iter().enumerate() {
        if skip_b.get(i).copied().unwrap_or(false) {
            continue;
        }
        let inside = point_in_loops(a, lp[0]);
        let keep = match op {
            ClipOp::Intersection | ClipOp::Difference => inside,
            ClipOp::Union => !inside,
        };
        if keep {
            out.push(lp.clone());
        }
    }
    out
}

fn clip_once(a: &[Vec<Vec2>], b: &[Vec<Vec2>], op: ClipOp, scale: f64) -> Option<Vec<Vec<Vec2>>> {
    let hits = find_hits(a, b, scale)?;
    let (mut ga, na) = build(a, &hits, |h| (h.a, h.ta));
    let (mut gb, nb) = build(b, &hits, |h| (h.b, h.tb));
    for k in 0..hits.len() {
        ga.nodes[na[k]].neighbor = nb[k];
        gb.nodes[nb[k]].neighbor = na[k];
    }
    let (flip_a, flip_b) = match op {
        ClipOp::Intersection => (false, false),
        ClipOp::Union => (true, true),
        ClipOp::Difference => (true, false),
    };
    mark_entries(&mut ga, b, flip_a);
    mark_entries(&mut gb, a, flip_b);

    let mut out = containment_only(a, b, op, &ga.touched, &gb.touched);
    let budget = 2 * (ga.nodes.len() + gb.nodes.len()) + 8;
    for &start in &na {
        if ga.nodes[start].visited {
            continue;
        }
        let mut poly = Vec::new();
        let mut on_a = true;
        let mut cur = start;
        let mut steps = 0;
        loop {
            let (g, o) = if on_a { (&mut ga, &mut gb) } else { (&mut gb, &mut ga) };
            if g.nodes[cur].visited {
                break;
            }
            g.nodes[cur].visited = true;
            let nb_idx = g.nodes[cur].neighbor;
            o.nodes[nb_idx].visited = true;
            poly.push(g.nodes[cur].p);
            let forward = g.nodes[cur].entry;
            loop {
                cur = if forward { g.nodes[cur].next } else { g.nodes[cur].prev };
                steps += 1;
                if steps > budget {
                    return None;
                }
                if g.nodes[cur].intersect {
                    break;
                }
                poly.push(g.nodes[cur].p);
            }
            cur = g.nodes[cur].neighbor;
            on_a = !on_a;
        }
        if poly.len() >= 3 {
            out.push(poly);
        }
    }
    Some(out)
}
