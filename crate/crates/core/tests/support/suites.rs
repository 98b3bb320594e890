//! Larger checks reused by the acceptance suite.

use std::time::{Duration, Instant};

use cadkit_core::solver::{constraint_jacobian, pack, residual_at, solve, check_constraint, max_displacement};
use cadkit_core::{Constraint, ConstraintKind, Primitive, Ref, SketchGraph, SubRef};
use rand::Rng;

use super::{perturb, random_primitive, rng, satisfiable_sketch};

pub struct SolverSuite {
    pub count: usize,
    /// `(index, residual)` of sketches that failed to reach 1e-6.
    pub failures: Vec<(usize, f64)>,
    pub worst_residual: f64,
    pub worst_idempotence: f64,
    pub elapsed: Duration,
}

/// Solves `count` perturbed satisfiable sketches of 3–10 primitives, then
/// re-solves each result to measure idempotence.
pub fn solver_suite(seed: u64, count: usize) -> SolverSuite {
    let mut r = rng(seed);
    let start = Instant::now();
    let mut failures = Vec::new();
    let (mut worst_residual, mut worst_idempotence) = (0.0f64, 0.0f64);
    for i in 0..count {
        let n = r.gen_range(3..=10);
        let exact = satisfiable_sketch(&mut r, n);
        let noisy = perturb(&exact, &mut r, 0.05);
        let out = solve(&noisy).expect("generated sketch is well formed");
        worst_residual = worst_residual.max(out.residual_norm);
        if !(out.residual_norm <= 1e-6) {
            failures.push((i, out.residual_norm));
            continue;
        }
        let again = solve(&out.solved).unwrap();
        worst_idempotence = worst_idempotence.max(max_displacement(&out.solved, &again.solved));
    }
    SolverSuite { count, failures, worst_residual, worst_idempotence, elapsed: start.elapsed() }
}

fn random_of(r: &mut rand_chacha::ChaCha8Rng, want: &[&str]) -> Primitive {
    loop {
        let p = random_primitive(r);
        if want.contains(&p.kind().name()) {
            return p;
        }
    }
}

/// A random admissible instance of `kind` on two fresh primitives.
pub fn random_instance(r: &mut rand_chacha::ChaCha8Rng, kind: ConstraintKind) -> (SketchGraph, Constraint) {
    use ConstraintKind as K;
    let subs = [SubRef::Start, SubRef::End, SubRef::Mid, SubRef::Entire];
    loop {
        let mut s = SketchGraph::new();
        let c = match kind {
            K::Horizontal | K::Vertical => {
                s.add_primitive(random_of(r, &["line"])).unwrap();
                Constraint::unary(kind, 0)
            }
            K::Parallel | K::Perpendicular => {
                s.add_primitive(random_of(r, &["line"])).unwrap();
                s.add_primitive(random_of(r, &["line"])).unwrap();
                Constraint::new(kind, Ref::entire(0), Ref::entire(1))
            }
            K::Equal => {
                let set: &[&str] = if r.gen_bool(0.5) { &["line"] } else { &["circle", "arc"] };
                s.add_primitive(random_of(r, set)).unwrap();
                s.add_primitive(random_of(r, set)).unwrap();
                Constraint::new(kind, Ref::entire(0), Ref::entire(1))
            }
            K::Tangent => {
                let first: &[&str] = if r.gen_bool(0.5) { &["line"] } else { &["circle", "arc"] };
                s.add_primitive(random_of(r, first)).unwrap();
                s.add_primitive(random_of(r, &["circle", "arc"])).unwrap();
                Constraint::new(kind, Ref::entire(0), Ref::entire(1))
            }
            K::Coincident => {
                s.add_primitive(random_primitive(r)).unwrap();
                s.add_primitive(random_primitive(r)).unwrap();
                let a = Ref::new(0, subs[r.gen_range(0..4)]);
                let b = Ref::new(1, subs[r.gen_range(0..4)]);
                Constraint::new(kind, a, b)
            }
        };
        if s.check_constraint_admissible(&c).is_ok() {
            return (s, c);
        }
    }
}

/// Worst Frobenius-relative difference between the analytic Jacobian and
/// central differences with step `h`, over `trials` random instances.
pub fn jacobian_error(kind: ConstraintKind, seed: u64, trials: usize, h: f64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (s, c) = random_instance(&mut r, kind);
        let j = constraint_jacobian(&s, &c).unwrap();
        let x0 = pack(&s);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for col in 0..x0.len() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[col] += h;
            xm[col] -= h;
            let fp = residual_at(&s, &c, xp.as_slice()).unwrap();
            let fm = residual_at(&s, &c, xm.as_slice()).unwrap();
            for row in 0..fp.len() {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                diff += (fd - j[(row, col)]).powi(2);
                norm += j[(row, col)].powi(2);
            }
        }
        let rel = if norm == 0.0 { diff.sqrt() } else { (diff / norm).sqrt() };
        worst = worst.max(rel);
    }
    worst
}

pub struct CheckerCase {
    pub name: &'static str,
    pub sketch: SketchGraph,
    pub constraint: Constraint,
    /// `(valid, causes_movement, degenerate)`; `None` = not asserted.
    pub expected: (bool, Option<bool>, bool),
}

fn sketch_of(prims: &[Primitive], constraints: &[Constraint]) -> SketchGraph {
    let mut s = SketchGraph::new();
    for p in prims {
        s.add_primitive(*p).unwrap();
    }
    for c in constraints {
        s.add_constraint(*c).unwrap();
    }
    s
}

/// Hand-derived checker expectations.
pub fn checker_cases() -> Vec<CheckerCase> {
    use ConstraintKind as K;
    let pair = |k, a, b| Constraint::new(k, Ref::entire(a), Ref::entire(b));
    let horizontal = Primitive::line(0.0, 0.0, 4.0, 0.0);
    vec![
        CheckerCase {
            name: "horizontal on horizontal line",
            sketch: sketch_of(&[horizontal], &[]),
            constraint: Constraint::unary(K::Horizontal, 0),
            expected: (true, Some(false), false),
        },
        CheckerCase {
            name: "vertical on horizontal line",
            sketch: sketch_of(&[horizontal], &[]),
            constraint: Constraint::unary(K::Vertical, 0),
            expected: (true, Some(true), false),
        },
        CheckerCase {
            name: "line start coincident with its own end",
            sketch: sketch_of(&[horizontal], &[]),
            constraint: Constraint::new(K::Coincident, Ref::new(0, SubRef::Start), Ref::new(0, SubRef::End)),
            expected: (false, None, true),
        },
        CheckerCase {
            name: "vertical on a line already held horizontal",
            sketch: sketch_of(&[horizontal], &[Constraint::unary(K::Horizontal, 0)]),
            constraint: Constraint::unary(K::Vertical, 0),
            expected: (false, Some(true), true),
        },
        CheckerCase {
            name: "coincident on touching endpoints",
            sketch: sketch_of(&[horizontal, Primitive::line(4.0, 0.0, 4.0, 3.0)], &[]),
            constraint: Constraint::new(K::Coincident, Ref::new(0, SubRef::End), Ref::new(1, SubRef::Start)),
            expected: (true, Some(false), false),
        },
        CheckerCase {
            name: "coincident on distant endpoints",
            sketch: sketch_of(&[horizontal, Primitive::line(6.0, 1.0, 6.0, 3.0)], &[]),
            constraint: Constraint::new(K::Coincident, Ref::new(0, SubRef::End), Ref::new(1, SubRef::Start)),
            expected: (true, Some(true), false),
        },
        CheckerCase {
            name: "parallel on parallel lines",
            sketch: sketch_of(&[horizontal, Primitive::line(0.0, 2.0, 3.0, 2.0)], &[]),
            constraint: pair(K::Parallel, 0, 1),
            expected: (true, Some(false), false),
        },
        CheckerCase {
            name: "perpendicular on lines at 45 degrees",
            sketch: sketch_of(&[horizontal, Primitive::line(0.0, 2.0, 2.0, 4.0)], &[]),
            constraint: pair(K::Perpendicular, 0, 1),
            expected: (true, Some(true), false),
        },
        CheckerCase {
            name: "equal on circles of radius 1 and 2",
            sketch: sketch_of(&[Primitive::circle(0.0, 0.0, 1.0), Primitive::circle(5.0, 0.0, 2.0)], &[]),
            constraint: pair(K::Equal, 0, 1),
            expected: (true, Some(true), false),
        },
        CheckerCase {
            name: "tangent on a touching line and circle",
            sketch: sketch_of(&[horizontal, Primitive::circle(2.0, 1.0, 1.0)], &[]),
            constraint: pair(K::Tangent, 0, 1),
            expected: (true, Some(false), false),
        },
        CheckerCase {
            name: "tangent on a separated line and circle",
            sketch: sketch_of(&[horizontal, Primitive::circle(2.0, 3.0, 1.0)], &[]),
            constraint: pair(K::Tangent, 0, 1),
            expected: (true, Some(true), false),
        },
    ]
}

/// Runs every case; returns `(name, ok, observed)` rows.
pub fn run_checker_cases() -> Vec<(&'static str, bool, (bool, bool, bool))> {
    checker_cases()
        .into_iter()
        .map(|case| {
            let r = check_constraint(&case.sketch, &case.constraint).unwrap();
            let (v, m, d) = case.expected;
            let ok = r.valid == v && m.map_or(true, |m| r.causes_movement == m) && r.degenerate == d;
            (case.name, ok, (r.valid, r.causes_movement, r.degenerate))
        })
        .collect()
}

pub struct SelfConsistency {
    pub mean_pf1: f64,
    pub mean_cf1: f64,
    pub errors: usize,
    pub elapsed: Duration,
}

/// Feeds each sketch's own constraints (shuffled, operands swapped) back
/// through the autoconstraining pipeline.
pub fn self_consistency(seed: u64, count: usize) -> SelfConsistency {
    use cadkit_core::eval::{run_autoconstrain_eval, AutoconstrainItem, EvalConfig};
    use rand::seq::SliceRandom;
    let mut r = rng(seed);
    let items: Vec<AutoconstrainItem> = (0..count)
        .map(|i| {
            let n = r.gen_range(3..=10);
            let gt = perturb(&satisfiable_sketch(&mut r, n), &mut r, 0.05);
            let mut predicted: Vec<Constraint> =
                gt.constraints().iter().map(|c| Constraint::new(c.kind, c.b, c.a)).collect();
            predicted.shuffle(&mut r);
            AutoconstrainItem { name: format!("sketch{i:03}"), gt, predicted }
        })
        .collect();
    let start = Instant::now();
    let report = run_autoconstrain_eval(&items, &EvalConfig::default());
    SelfConsistency {
        mean_pf1: report.pf1.unwrap_or(0.0),
        mean_cf1: report.cf1.unwrap_or(0.0),
        errors: report.n_errors,
        elapsed: start.elapsed(),
    }
}

/// Hand-counted scoring fixture, tokens given directly.
///
/// gt: line 0, line 1, circle 2 with coincident(0.end, 1.start),
/// perpendicular(0, 1), tangent(1, 2), horizontal(0).
/// pred (ids shuffled): line 0 exact, line 1 with one token 6 units off,
/// circle 2 with every token 3 units off, and an extra point.
/// pred constraints: horizontal(0), coincident(0.end, 1.start), tangent(1, 2).
///
/// Primitive TPs are lines 0 and circle 2: P = 2/4, R = 2/3, PF1 = 4/7.
/// Only horizontal(0) avoids line 1: P = 1/3, R = 1/4, CF1 = 2/7.
pub fn hand_counted_fixture() -> (cadkit_core::quantize::QuantizedSketch, cadkit_core::quantize::QuantizedSketch, f64, f64) {
    use cadkit_core::quantize::{Normalization, QuantizedPrimitive, QuantizedSketch, BINS};
    use cadkit_core::{PrimitiveId, PrimitiveKind as K, Vec2};
    let qp = |id: u32, kind, tokens: &[u8]| QuantizedPrimitive { id: PrimitiveId(id), kind, tokens: tokens.to_vec(), reversed: false };
    let norm = Normalization { origin: Vec2::ZERO, side: 1.0 };
    let gt = QuantizedSketch {
        bins_per_axis: BINS,
        normalization: norm,
        primitives: vec![
            qp(0, K::Line, &[10, 10, 40, 10]),
            qp(1, K::Line, &[40, 10, 40, 50]),
            qp(2, K::Circle, &[50, 30, 10]),
        ],
        constraints: vec![
            Constraint::new(ConstraintKind::Coincident, Ref::new(0, SubRef::End), Ref::new(1, SubRef::Start)),
            Constraint::new(ConstraintKind::Perpendicular, Ref::entire(0), Ref::entire(1)),
            Constraint::new(ConstraintKind::Tangent, Ref::entire(1), Ref::entire(2)),
            Constraint::unary(ConstraintKind::Horizontal, 0),
        ],
    };
    // pred ids: 7 = gt 0, 3 = gt 1, 5 = gt 2, 1 = extra point
    let pred = QuantizedSketch {
        bins_per_axis: BINS,
        normalization: norm,
        primitives: vec![
            qp(1, K::Point, &[5, 60]),
            qp(3, K::Line, &[40, 10, 46, 50]),
            qp(5, K::Circle, &[53, 27, 13]),
            qp(7, K::Line, &[10, 10, 40, 10]),
        ],
        constraints: vec![
            Constraint::unary(ConstraintKind::Horizontal, 7),
            Constraint::new(ConstraintKind::Coincident, Ref::new(3, SubRef::Start), Ref::new(7, SubRef::End)),
            Constraint::new(ConstraintKind::Tangent, Ref::entire(5), Ref::entire(3)),
        ],
    };
    (gt, pred, 4.0 / 7.0, 2.0 / 7.0)
}

/// Matching cost written out independently of the library.
pub fn oracle_cost(a: &cadkit_core::quantize::QuantizedPrimitive, b: &cadkit_core::quantize::QuantizedPrimitive) -> i64 {
    if a.kind != b.kind {
        return 1_000_000;
    }
    let angle_slots: &[usize] = if a.kind == cadkit_core::PrimitiveKind::Arc { &[3, 4] } else { &[] };
    a.tokens
        .iter()
        .zip(&b.tokens)
        .enumerate()
        .map(|(i, (&x, &y))| {
            let d = (i64::from(x) - i64::from(y)).abs();
            if angle_slots.contains(&i) {
                d.min(64 - d)
            } else {
                d
            }
        })
        .sum()
}

/// A random ground truth with up to `max` primitives and a prediction
/// quantized on the same grid.
pub fn random_quantized_pair(
    r: &mut rand_chacha::ChaCha8Rng,
    max: usize,
) -> (cadkit_core::quantize::QuantizedSketch, cadkit_core::quantize::QuantizedSketch) {
    use cadkit_core::quantize::{quantize, quantize_with};
    let sketch = |r: &mut rand_chacha::ChaCha8Rng, n: usize| {
        let mut s = SketchGraph::new();
        for _ in 0..n {
            s.add_primitive(random_primitive(r)).unwrap();
        }
        s
    };
    let ng = r.gen_range(1..=max);
    let np = r.gen_range(0..=max);
    let gt = quantize(&sketch(r, ng)).unwrap();
    let pred = quantize_with(&sketch(r, np), gt.normalization);
    (gt, pred)
}

/// Instances where the library's matching cost differs from brute force.
pub fn matching_mismatches(seed: u64, count: usize) -> Vec<usize> {
    let mut r = rng(seed);
    (0..count)
        .filter(|_| {
            let (gt, pred) = random_quantized_pair(&mut r, 7);
            let m = cadkit_core::eval::match_primitives(&gt, &pred);
            let cost: Vec<Vec<i64>> =
                gt.primitives.iter().map(|a| pred.primitives.iter().map(|b| oracle_cost(a, b)).collect()).collect();
            m.total_cost != super::brute_force_assignment_cost(&cost) as f64
                || m.pairs.len() != gt.primitives.len().min(pred.primitives.len())
        })
        .collect()
}

/// Largest gap between the distance-transform chamfer and the pairwise
/// definition over `count` random 64x64 mask pairs.
pub fn chamfer_worst_error(seed: u64, count: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let (da, db) = (r.gen_range(0.002..0.3), r.gen_range(0.002..0.3));
        let a = super::random_mask(&mut r, 64, 64, da);
        let b = super::random_mask(&mut r, 64, 64, db);
        let got = cadkit_core::eval::chamfer(&a, &b).unwrap();
        worst = worst.max((got - super::chamfer_brute_force(&a, &b)).abs());
    }
    worst
}

pub struct Conversions {
    pub worst_conversion: f64,
    /// Primitives whose dequantized parameters moved by more than half a bin.
    pub dequantization_violations: usize,
    /// Primitives whose tokens changed on a second quantization.
    pub token_violations: usize,
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

fn within_half_bin(a: &Primitive, b: &Primitive, half: f64) -> bool {
    let close = |u: cadkit_core::Vec2, v: cadkit_core::Vec2| (u.x - v.x).abs() <= half && (u.y - v.y).abs() <= half;
    let half_angle = std::f64::consts::PI / 64.0 + 1e-12;
    match (a, b) {
        (Primitive::Line { start: s0, end: e0 }, Primitive::Line { start: s1, end: e1 }) => close(*s0, *s1) && close(*e0, *e1),
        (Primitive::Circle { center: c0, radius: r0 }, Primitive::Circle { center: c1, radius: r1 }) => {
            close(*c0, *c1) && (r0 - r1).abs() <= half
        }
        (Primitive::Arc(a0), Primitive::Arc(a1)) => {
            let (a0, a1) = (a0.to_ccw(), a1.to_ccw());
            close(a0.center, a1.center)
                && (a0.radius - a1.radius).abs() <= half
                && circular_gap(a0.start_angle, a1.start_angle) <= half_angle
                && circular_gap(a0.end_angle, a1.end_angle) <= half_angle
        }
        (Primitive::Point { pos: p0 }, Primitive::Point { pos: p1 }) => close(*p0, *p1),
        _ => false,
    }
}

/// Parameterization and quantization round trips on `count` random
/// primitives, each quantized on its own.
pub fn conversions(seed: u64, count: usize) -> Conversions {
    use cadkit_core::params::{from_implicit, from_point_based, overparameterize, to_implicit, to_point_based};
    use cadkit_core::quantize::{dequantize, quantize, quantize_with};
    let mut r = rng(seed);
    let one = |p: Primitive| {
        let mut s = SketchGraph::new();
        s.add_primitive(p).unwrap();
        s
    };
    let moved = |a: Primitive, b: Primitive| max_displacement(&one(a), &one(b));
    let mut out = Conversions { worst_conversion: 0.0, dequantization_violations: 0, token_violations: 0 };
    for _ in 0..count {
        let p = random_primitive(&mut r);
        let over = overparameterize(&p).unwrap();
        for back in [
            from_implicit(&to_implicit(&p).unwrap()).unwrap(),
            from_point_based(&to_point_based(&p)).unwrap(),
            over.to_primitive().unwrap(),
            from_point_based(&over.to_point_based()).unwrap(),
        ] {
            out.worst_conversion = out.worst_conversion.max(moved(p, back));
        }
        let q = quantize(&one(p)).unwrap();
        let Ok(back) = dequantize(&q) else { continue };
        let half = q.normalization.bin_width() / 2.0 + 1e-9;
        if !within_half_bin(&p, &back.primitives()[0].1, half) {
            out.dequantization_violations += 1;
        }
        if quantize_with(&back, q.normalization).primitives != q.primitives {
            out.token_violations += 1;
        }
    }
    out
}

pub struct SolidChecks {
    pub points_checked: usize,
    pub occupancy_violations: usize,
    /// Largest vertex distance from the unit square, or infinity if the
    /// section is not a single four-vertex loop.
    pub cube_section_error: f64,
    pub drilled_area_relative_error: f64,
}

pub fn solid_checks(seed: u64) -> SolidChecks {
    use cadkit_core::par::Exec;
    use cadkit_core::solid::{
        circle_sketch, cross_section_solid_with, extrude, rectangle_sketch, BooleanOp, ExtrusionOp, SectionMethod,
        SectionPlane, SolidModel,
    };
    use cadkit_core::Vec3;
    let mut r = rng(seed);
    let (mut checked, mut violations) = (0, 0);
    for _ in 0..20 {
        let (model, steps) = super::random_model(&mut r);
        for _ in 0..10_000 {
            let p = Vec3::new(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
            if steps.iter().any(|s| s.clearance(p).abs() < 1e-9) {
                continue;
            }
            checked += 1;
            if model.occupancy(p) != super::oracle_occupancy(&steps, p) {
                violations += 1;
            }
        }
    }
    let cube = extrude(&SolidModel::new(), rectangle_sketch(0.0, 0.0, 1.0, 1.0), ExtrusionOp::along_z(1.0, BooleanOp::New)).unwrap();
    let mid = cross_section_solid_with(&cube, &SectionPlane::axis(2, 0.5), SectionMethod::Auto, Exec::default()).unwrap();
    let cube_section_error = if mid.loops.len() == 1 && mid.loops[0].len() == 4 {
        mid.loops[0]
            .iter()
            .map(|v| {
                [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
                    .iter()
                    .map(|&(x, y)| (v.x - x).hypot(v.y - y))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let cut = ExtrusionOp { d_minus: 1.0, ..ExtrusionOp::along_z(2.0, BooleanOp::Cut) };
    let drilled = extrude(&cube, circle_sketch(0.5, 0.5, 0.25), cut).unwrap();
    let sec = cross_section_solid_with(&drilled, &SectionPlane::axis(2, 0.5), SectionMethod::Contour, Exec::default()).unwrap();
    let want = 1.0 - std::f64::consts::PI / 16.0;
    SolidChecks {
        points_checked: checked,
        occupancy_violations: violations,
        cube_section_error,
        drilled_area_relative_error: (sec.area() - want).abs() / want,
    }
}
