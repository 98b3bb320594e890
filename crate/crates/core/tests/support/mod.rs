//! Random generators and independent reference implementations shared by
//! the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, TAU};

use cadkit_core::render::RasterImage;
use cadkit_core::solid::{circle_sketch, extrude, rectangle_sketch, BooleanOp, ExtrusionOp, SolidModel};
use cadkit_core::{Constraint, ConstraintKind, Primitive, Ref, SketchGraph, SubRef, Vec2, Vec3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_primitive(rng: &mut ChaCha8Rng) -> Primitive {
    let c = |rng: &mut ChaCha8Rng| -> f64 { rng.gen_range(-50.0..50.0) };
    match rng.gen_range(0..4) {
        0 => loop {
            let (a, b, x, y) = (c(rng), c(rng), c(rng), c(rng));
            if (a - x).hypot(b - y) > 1.0 {
                break Primitive::line(a, b, x, y);
            }
        },
        1 => Primitive::circle(c(rng), c(rng), rng.gen_range(0.5..30.0)),
        2 => loop {
            let (ts, te) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
            let gap = (ts - te).abs();
            if gap > 0.2 && gap < TAU - 0.2 {
                break Primitive::arc(c(rng), c(rng), rng.gen_range(0.5..30.0), ts, te, rng.gen_bool(0.5));
            }
        },
        _ => Primitive::point(c(rng), c(rng)),
    }
}

fn dir(angle: f64) -> Vec2 {
    Vec2::new(angle.cos(), angle.sin())
}

/// A sketch of `n` primitives whose constraints hold exactly on the drawn
/// geometry. A chain of lines and tangent arcs comes first, with some lines
/// horizontal, vertical, parallel, perpendicular or equal to earlier ones;
/// remaining primitives are circles (equal or tangent to chain lines) and
/// points pinned to chain vertices.
pub fn satisfiable_sketch(rng: &mut ChaCha8Rng, n: usize) -> SketchGraph {
    let mut s = SketchGraph::new();
    let chain_len = rng.gen_range(2..=n.max(2)).min(n);
    let mut p = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    let mut heading: f64 = rng.gen_range(0.0..TAU);
    // (id, direction angle, length) for chain lines
    let mut lines: Vec<(u32, f64, f64)> = Vec::new();
    let mut prev: Option<u32> = None;
    let mut prev_is_line = false;
    let mut circles: Vec<(u32, f64)> = Vec::new();
    let mut vertices: Vec<(u32, SubRef, Vec2)> = Vec::new();
    let add = |s: &mut SketchGraph, c: Constraint| {
        s.add_constraint(c).expect("generated constraint is admissible");
    };
    for k in 0..chain_len {
        let arc_here = k > 0 && prev_is_line && rng.gen_bool(0.3);
        if arc_here {
            let r = rng.gen_range(1.0..4.0);
            let left = rng.gen_bool(0.5);
            let normal = if left { heading + FRAC_PI_2 } else { heading - FRAC_PI_2 };
            let center = p + dir(normal) * r;
            let theta_s = (p - center).angle();
            let sweep = rng.gen_range(0.4..2.0);
            // turning left is counter-clockwise around the center
            let clockwise = !left;
            let theta_e = if clockwise { theta_s - sweep } else { theta_s + sweep };
            let a = Primitive::arc(center.x, center.y, r, theta_s.rem_euclid(TAU), theta_e.rem_euclid(TAU), clockwise);
            let id = s.add_primitive(a).unwrap().0;
            let pid = prev.unwrap();
            add(&mut s, Constraint::new(ConstraintKind::Coincident, Ref::new(pid, SubRef::End), Ref::new(id, SubRef::Start)));
            add(&mut s, Constraint::new(ConstraintKind::Tangent, Ref::entire(pid), Ref::entire(id)));
            if let Primitive::Arc(arc) = s.get(cadkit_core::PrimitiveId(id)).copied().unwrap() {
                p = arc.end();
            }
            heading += if clockwise { -sweep } else { sweep };
            vertices.push((id, SubRef::End, p));
            circles.push((id, r));
            prev = Some(id);
            prev_is_line = false;
            continue;
        }
        let mut length = rng.gen_range(2.0..8.0);
        let mut unary = None;
        let mut pair = None;
        match rng.gen_range(0..6) {
            0 => {
                heading = if rng.gen_bool(0.5) { 0.0 } else { std::f64::consts::PI };
                unary = Some(ConstraintKind::Horizontal);
            }
            1 => {
                heading = if rng.gen_bool(0.5) { FRAC_PI_2 } else { -FRAC_PI_2 };
                unary = Some(ConstraintKind::Vertical);
            }
            2 if !lines.is_empty() => {
                let (id, a, _) = lines[rng.gen_range(0..lines.len())];
                heading = a + if rng.gen_bool(0.5) { FRAC_PI_2 } else { -FRAC_PI_2 };
                pair = Some((ConstraintKind::Perpendicular, id));
            }
            3 if !lines.is_empty() => {
                let (id, a, _) = lines[rng.gen_range(0..lines.len())];
                heading = a + if rng.gen_bool(0.5) { 0.0 } else { std::f64::consts::PI };
                pair = Some((ConstraintKind::Parallel, id));
            }
            4 if !lines.is_empty() => {
                let (id, _, l) = lines[rng.gen_range(0..lines.len())];
                heading += rng.gen_range(-1.5..1.5);
                length = l;
                pair = Some((ConstraintKind::Equal, id));
            }
            _ => heading += rng.gen_range(-1.5..1.5),
        }
        let q = p + dir(heading) * length;
        let id = s.add_primitive(Primitive::line(p.x, p.y, q.x, q.y)).unwrap().0;
        if let Some(pid) = prev {
            add(&mut s, Constraint::new(ConstraintKind::Coincident, Ref::new(pid, SubRef::End), Ref::new(id, SubRef::Start)));
        }
        if let Some(kind) = unary {
            add(&mut s, Constraint::unary(kind, id));
        }
        if let Some((kind, other)) = pair {
            add(&mut s, Constraint::new(kind, Ref::entire(other), Ref::entire(id)));
        }
        vertices.push((id, SubRef::End, q));
        lines.push((id, heading, length));
        p = q;
        prev = Some(id);
        prev_is_line = true;
    }
    for _ in chain_len..n {
        match rng.gen_range(0..3) {
            0 if !lines.is_empty() => {
                // circle tangent to a chain line
                let (lid, a, l) = lines[rng.gen_range(0..lines.len())];
                let Some(Primitive::Line { start, .. }) = s.get(cadkit_core::PrimitiveId(lid)).copied() else {
                    unreachable!()
                };
                let r = rng.gen_range(0.5..3.0);
                let foot = start + dir(a) * (l * rng.gen_range(0.2..0.8));
                let side = if rng.gen_bool(0.5) { FRAC_PI_2 } else { -FRAC_PI_2 };
                let c = foot + dir(a + side) * r;
                let id = s.add_primitive(Primitive::circle(c.x, c.y, r)).unwrap().0;
                add(&mut s, Constraint::new(ConstraintKind::Tangent, Ref::entire(lid), Ref::entire(id)));
                circles.push((id, r));
            }
            1 if !circles.is_empty() => {
                let (cid, r) = circles[rng.gen_range(0..circles.len())];
                let c = Vec2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
                let id = s.add_primitive(Primitive::circle(c.x, c.y, r)).unwrap().0;
                add(&mut s, Constraint::new(ConstraintKind::Equal, Ref::entire(cid), Ref::entire(id)));
                circles.push((id, r));
            }
            _ => {
                let (vid, sub, v) = vertices[rng.gen_range(0..vertices.len())];
                let id = s.add_primitive(Primitive::point(v.x, v.y)).unwrap().0;
                add(&mut s, Constraint::new(ConstraintKind::Coincident, Ref::new(vid, sub), Ref::entire(id)));
            }
        }
    }
    s
}

/// Adds uniform noise of `amount` to every coordinate and radius and
/// `amount / 10` radians to arc angles; constraints are kept.
pub fn perturb(sketch: &SketchGraph, rng: &mut ChaCha8Rng, amount: f64) -> SketchGraph {
    let mut out = sketch.clone();
    let d = |rng: &mut ChaCha8Rng| rng.gen_range(-amount..amount);
    for (id, p) in sketch.primitives() {
        let q = match *p {
            Primitive::Line { start, end } => {
                Primitive::line(start.x + d(rng), start.y + d(rng), end.x + d(rng), end.y + d(rng))
            }
            Primitive::Circle { center, radius } => Primitive::circle(center.x + d(rng), center.y + d(rng), radius + d(rng)),
            Primitive::Arc(a) => Primitive::arc(
                a.center.x + d(rng),
                a.center.y + d(rng),
                a.radius + d(rng),
                (a.start_angle + d(rng) / 10.0).rem_euclid(TAU),
                (a.end_angle + d(rng) / 10.0).rem_euclid(TAU),
                a.clockwise,
            ),
            Primitive::Point { pos } => Primitive::point(pos.x + d(rng), pos.y + d(rng)),
        };
        out.set_primitive(*id, q).unwrap();
    }
    out
}

/// Minimum assignment cost over every injective map of the smaller side
/// into the larger.
pub fn brute_force_assignment_cost(cost: &[Vec<i64>]) -> i64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0;
    }
    let t: Vec<Vec<i64>>;
    let c = if rows <= cols {
        cost
    } else {
        t = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        &t[..]
    };
    fn rec(c: &[Vec<i64>], row: usize, used: &mut Vec<bool>, acc: i64, best: &mut i64) {
        if row == c.len() {
            *best = (*best).min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                rec(c, row + 1, used, acc + c[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = i64::MAX;
    rec(c, 0, &mut vec![false; c[0].len()], 0, &mut best);
    best
}

/// Pairwise chamfer distance, straight from the definition.
pub fn chamfer_brute_force(a: &RasterImage, b: &RasterImage) -> f64 {
    let pa = a.foreground();
    let pb = b.foreground();
    let nearest = |p: (u32, u32), set: &[(u32, u32)]| {
        set.iter()
            .map(|q| {
                let dx = f64::from(p.0) - f64::from(q.0);
                let dy = f64::from(p.1) - f64::from(q.1);
                dx * dx + dy * dy
            })
            .fold(f64::INFINITY, f64::min)
    };
    let ab: f64 = pa.iter().map(|&p| nearest(p, &pb)).sum();
    let ba: f64 = pb.iter().map(|&p| nearest(p, &pa)).sum();
    ba / (2.0 * pb.len() as f64) + ab / (2.0 * pa.len() as f64)
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32, density: f64) -> RasterImage {
    let mut img = RasterImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if rng.gen_bool(density) {
                img.set(x, y);
            }
        }
    }
    if img.count() == 0 {
        img.set(rng.gen_range(0..w), rng.gen_range(0..h));
    }
    img
}

/// Analytic profile of a generated step.
#[derive(Debug, Clone, Copy)]
pub enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    /// Signed clearance: positive inside, negative outside.
    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => (x - x0).min(x1 - x).min(y - y0).min(y1 - y),
            Shape::Disk { cx, cy, r } => r - (x - cx).hypot(y - cy),
        }
    }
}

/// One step of a generated model with an independent description.
#[derive(Debug, Clone, Copy)]
pub struct OracleStep {
    pub shape: Shape,
    pub op: ExtrusionOp,
}

/// Rotation `Rz(phi) Ry(theta) Rz(gamma)` as a row-major matrix.
fn rotation(theta: f64, phi: f64, gamma: f64) -> [[f64; 3]; 3] {
    let rz = |a: f64| {
        let (s, c) = a.sin_cos();
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    };
    let (s, c) = theta.sin_cos();
    let ry = [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]];
    let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        m
    };
    mul(mul(rz(phi), ry), rz(gamma))
}

impl OracleStep {
    /// Signed clearance of `p` from this step's prism boundary.
    pub fn clearance(&self, p: Vec3) -> f64 {
        let o = &self.op;
        let r = rotation(o.theta, o.phi, o.gamma);
        let d = [p.x - o.tau_x, p.y - o.tau_y, p.z - o.tau_z];
        // local = Rᵀ d
        let local: Vec<f64> = (0..3).map(|j| (0..3).map(|i| r[i][j] * d[i]).sum()).collect();
        let (x, y, h) = (local[0] / o.sigma, local[1] / o.sigma, local[2]);
        let planar = self.shape.clearance(x, y) * o.sigma;
        planar.min(h + o.d_minus).min(o.d_plus - h)
    }
}

pub fn oracle_occupancy(steps: &[OracleStep], p: Vec3) -> bool {
    let mut acc = false;
    for s in steps {
        let inside = s.clearance(p) > 0.0;
        acc = match s.op.beta {
            BooleanOp::New | BooleanOp::Join => acc || inside,
            BooleanOp::Cut => acc && !inside,
            BooleanOp::Intersect => acc && inside,
        };
    }
    acc
}

/// Random 2–4 step model made of rectangle and disk extrusions in random
/// orientations, with its oracle description.
pub fn random_model(rng: &mut ChaCha8Rng) -> (SolidModel, Vec<OracleStep>) {
    let n = rng.gen_range(2..=4);
    let mut model = SolidModel::new();
    let mut steps = Vec::new();
    for k in 0..n {
        let shape = if rng.gen_bool(0.5) {
            let (x0, y0) = (rng.gen_range(-1.0..0.0), rng.gen_range(-1.0..0.0));
            Shape::Rect { x0, y0, x1: x0 + rng.gen_range(0.3..1.5), y1: y0 + rng.gen_range(0.3..1.5) }
        } else {
            Shape::Disk { cx: rng.gen_range(-0.5..0.5), cy: rng.gen_range(-0.5..0.5), r: rng.gen_range(0.2..0.9) }
        };
        let beta = if k == 0 {
            BooleanOp::New
        } else {
            [BooleanOp::Cut, BooleanOp::Join, BooleanOp::Intersect, BooleanOp::New][rng.gen_range(0..4)]
        };
        let op = ExtrusionOp {
            theta: rng.gen_range(0.0..std::f64::consts::PI),
            phi: rng.gen_range(0.0..TAU),
            gamma: rng.gen_range(0.0..TAU),
            tau_x: rng.gen_range(-0.3..0.3),
            tau_y: rng.gen_range(-0.3..0.3),
            tau_z: rng.gen_range(-0.3..0.3),
            sigma: rng.gen_range(0.5..1.5),
            d_minus: rng.gen_range(0.0..0.8),
            d_plus: rng.gen_range(0.2..1.0),
            beta,
        };
        let sketch = match shape {
            Shape::Rect { x0, y0, x1, y1 } => rectangle_sketch(x0, y0, x1, y1),
            Shape::Disk { cx, cy, r } => circle_sketch(cx, cy, r),
        };
        model = extrude(&model, sketch, op).unwrap();
        steps.push(OracleStep { shape, op });
    }
    (model, steps)
}

pub mod suites;
