//! Damped least-squares constraint solver and the constraint checker.
//!
//! Every primitive contributes its free parameters to one vector: lines
//! `(x_s, y_s, x_e, y_e)`, circles `(x_c, y_c, r)`, arcs
//! `(x_c, y_c, r, theta_s, theta_e)` and points `(x, y)`. Each constraint
//! yields residual rows with analytic gradients. Levenberg–Marquardt steps
//! carry a fixed floor damping (`anchor_weight`) so that rank-deficient,
//! under-determined systems take minimum-norm corrections and stay close to
//! the drawn geometry.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geom::{normalize_angle, Vec2};
use crate::sketch::{
    Arc, Constraint, ConstraintKind, Primitive, PrimitiveId, PrimitiveKind, Ref, SketchError, SketchGraph, SubRef,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Residual norm at which iteration stops.
    pub residual_tol: f64,
    /// Residual norm below which a checked constraint counts as satisfied.
    pub validity_tol: f64,
    pub max_iterations: usize,
    /// Floor damping added to every step, scaled by `min(1, |r|)`.
    pub anchor_weight: f64,
    /// Movement threshold relative to the sketch bbox diagonal.
    pub move_tol_rel: f64,
    /// Collapse threshold (line length / radius) relative to the bbox diagonal.
    pub degenerate_tol_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-8,
            validity_tol: 1e-6,
            max_iterations: 200,
            anchor_weight: 1e-6,
            move_tol_rel: 1e-4,
            degenerate_tol_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solved: SketchGraph,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Largest movement of any anchor point, center or radius.
    pub max_displacement: f64,
    /// Primitives that collapsed (length or radius below tolerance).
    pub degenerate: Vec<PrimitiveId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub valid: bool,
    pub causes_movement: bool,
    pub degenerate: bool,
    pub residual_before: f64,
    pub residual_after: f64,
    pub max_displacement: f64,
}

/// Offsets of each primitive's parameters in the packed vector.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    offsets: Vec<usize>,
    len: usize,
}

pub fn param_count(kind: PrimitiveKind) -> usize {
    match kind {
        PrimitiveKind::Line => 4,
        PrimitiveKind::Circle => 3,
        PrimitiveKind::Arc => 5,
        PrimitiveKind::Point => 2,
    }
}

impl ParamLayout {
    pub fn of(sketch: &SketchGraph) -> Self {
        let mut offsets = Vec::with_capacity(sketch.len());
        let mut len = 0;
        for (_, p) in sketch.primitives() {
            offsets.push(len);
            len += param_count(p.kind());
        }
        Self { offsets, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub fn pack(sketch: &SketchGraph) -> DVector<f64> {
    let mut x = Vec::new();
    for (_, p) in sketch.primitives() {
        match *p {
            Primitive::Line { start, end } => x.extend([start.x, start.y, end.x, end.y]),
            Primitive::Circle { center, radius } => x.extend([center.x, center.y, radius]),
            Primitive::Arc(a) => x.extend([a.center.x, a.center.y, a.radius, a.start_angle, a.end_angle]),
            Primitive::Point { pos } => x.extend([pos.x, pos.y]),
        }
    }
    DVector::from_vec(x)
}

/// Primitive `index` of `template` with its parameters read from `x`.
fn primitive_at(template: &SketchGraph, layout: &ParamLayout, x: &[f64], index: usize) -> Primitive {
    let o = layout.offsets[index];
    match template.primitives()[index].1 {
        Primitive::Line { .. } => Primitive::Line { start: Vec2::new(x[o], x[o + 1]), end: Vec2::new(x[o + 2], x[o + 3]) },
        Primitive::Circle { .. } => Primitive::Circle { center: Vec2::new(x[o], x[o + 1]), radius: x[o + 2] },
        Primitive::Arc(a) => Primitive::Arc(Arc {
            center: Vec2::new(x[o], x[o + 1]),
            radius: x[o + 2],
            start_angle: x[o + 3],
            end_angle: x[o + 4],
            clockwise: a.clockwise,
        }),
        Primitive::Point { .. } => Primitive::Point { pos: Vec2::new(x[o], x[o + 1]) },
    }
}

fn unpack(template: &SketchGraph, layout: &ParamLayout, x: &[f64]) -> SketchGraph {
    let mut out = template.clone();
    for (index, p) in out.primitives_mut().enumerate() {
        let mut q = primitive_at(template, layout, x, index);
        if let Primitive::Arc(ref mut a) = q {
            a.start_angle = normalize_angle(a.start_angle);
            a.end_angle = normalize_angle(a.end_angle);
            // negative radius is the same circle reflected through the center
            if a.radius < 0.0 {
                a.radius = -a.radius;
                a.start_angle = normalize_angle(a.start_angle + std::f64::consts::PI);
                a.end_angle = normalize_angle(a.end_angle + std::f64::consts::PI);
            }
        }
        if let Primitive::Circle { ref mut radius, .. } = q {
            *radius = radius.abs();
        }
        *p = q;
    }
    out
}

/// One residual row: value plus sparse gradient (indices may repeat).
#[derive(Debug, Clone, Default)]
pub struct Row {
    pub value: f64,
    pub grad: Vec<(usize, f64)>,
}

type PointGrad = Vec<(usize, Vec2)>;

/// Frozen choice between external and internal tangency of two curves.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TangentBranch {
    External,
    /// `|c_i - c_j| - sign * (r_i - r_j)`
    Internal(f64),
}

struct Ctx<'a> {
    template: &'a SketchGraph,
    layout: &'a ParamLayout,
    x: &'a [f64],
}

impl Ctx<'_> {
    fn index(&self, id: PrimitiveId) -> Result<usize, SketchError> {
        self.template.index_of(id).ok_or(SketchError::DanglingReference(id))
    }

    fn prim(&self, index: usize) -> Primitive {
        primitive_at(self.template, self.layout, self.x, index)
    }

    fn point(&self, r: Ref) -> Result<(Vec2, PointGrad), SketchError> {
        let i = self.index(r.id)?;
        let o = self.layout.offsets[i];
        let p = self.prim(i);
        let ex = Vec2::new(1.0, 0.0);
        let ey = Vec2::new(0.0, 1.0);
        let arc_point = |a: &Arc, theta: f64, weights: [f64; 2]| -> (Vec2, PointGrad) {
            let dir = Vec2::from_angle(theta);
            let dtheta = dir.perp() * a.radius;
            let mut g = vec![(o, ex), (o + 1, ey), (o + 2, dir)];
            if weights[0] != 0.0 {
                g.push((o + 3, dtheta * weights[0]));
            }
            if weights[1] != 0.0 {
                g.push((o + 4, dtheta * weights[1]));
            }
            (a.center + dir * a.radius, g)
        };
        match (p, r.sub) {
            (Primitive::Line { start, .. }, SubRef::Start) => Ok((start, vec![(o, ex), (o + 1, ey)])),
            (Primitive::Line { end, .. }, SubRef::End) => Ok((end, vec![(o + 2, ex), (o + 3, ey)])),
            (Primitive::Line { start, end }, SubRef::Mid) => Ok((
                start.lerp(end, 0.5),
                vec![(o, ex * 0.5), (o + 1, ey * 0.5), (o + 2, ex * 0.5), (o + 3, ey * 0.5)],
            )),
            (Primitive::Arc(a), SubRef::Start) => Ok(arc_point(&a, a.start_angle, [1.0, 0.0])),
            (Primitive::Arc(a), SubRef::End) => Ok(arc_point(&a, a.end_angle, [0.0, 1.0])),
            (Primitive::Arc(a), SubRef::Mid) => Ok(arc_point(&a, a.angle_at(0.5), [0.5, 0.5])),
            (Primitive::Circle { center, .. }, SubRef::Mid) => Ok((center, vec![(o, ex), (o + 1, ey)])),
            (Primitive::Point { pos }, SubRef::Entire) => Ok((pos, vec![(o, ex), (o + 1, ey)])),
            (p, sub) => p.ref_point(sub).map(|_| unreachable!("all point refs handled above")),
        }
    }

    /// Line offset plus its geometry.
    fn line(&self, id: PrimitiveId) -> Result<(usize, Vec2, Vec2), SketchError> {
        let i = self.index(id)?;
        match self.prim(i) {
            Primitive::Line { start, end } => Ok((self.layout.offsets[i], start, end)),
            p => Err(SketchError::IncompatibleKind(format!("expected a line, got {}", p.kind()))),
        }
    }

    /// Center/radius of a circle or arc plus parameter offset.
    fn curve(&self, id: PrimitiveId) -> Result<(usize, Vec2, f64), SketchError> {
        let i = self.index(id)?;
        match self.prim(i) {
            Primitive::Circle { center, radius } => Ok((self.layout.offsets[i], center, radius)),
            Primitive::Arc(a) => Ok((self.layout.offsets[i], a.center, a.radius)),
            p => Err(SketchError::IncompatibleKind(format!("expected a circle or arc, got {}", p.kind()))),
        }
    }

    fn is_line(&self, id: PrimitiveId) -> Result<bool, SketchError> {
        Ok(matches!(self.prim(self.index(id)?), Primitive::Line { .. }))
    }
}

/// Unit direction of a line and its gradient w.r.t. `(x_s, y_s, x_e, y_e)`.
fn unit_direction(o: usize, start: Vec2, end: Vec2) -> (Vec2, PointGrad) {
    let d = end - start;
    let len = d.norm().max(1e-300);
    let u = d * (1.0 / len);
    // (I - u u^T) / len, columns for d.x and d.y
    let col_x = Vec2::new(1.0 - u.x * u.x, -u.x * u.y) * (1.0 / len);
    let col_y = Vec2::new(-u.x * u.y, 1.0 - u.y * u.y) * (1.0 / len);
    (u, vec![(o, -col_x), (o + 1, -col_y), (o + 2, col_x), (o + 3, col_y)])
}

fn project(grad: &PointGrad, w: Vec2, out: &mut Vec<(usize, f64)>, sign: f64) {
    out.extend(grad.iter().map(|&(k, g)| (k, sign * g.dot(w))));
}

fn pick_branch(ci: Vec2, ri: f64, cj: Vec2, rj: f64) -> TangentBranch {
    let dist = ci.distance(cj);
    let external = (dist - (ri + rj)).abs();
    let internal = (dist - (ri - rj).abs()).abs();
    if internal < external {
        TangentBranch::Internal(if ri >= rj { 1.0 } else { -1.0 })
    } else {
        TangentBranch::External
    }
}

fn constraint_rows(ctx: &Ctx<'_>, c: &Constraint, branch: Option<TangentBranch>) -> Result<Vec<Row>, SketchError> {
    match c.kind {
        ConstraintKind::Coincident => {
            let (pa, ga) = ctx.point(c.a)?;
            let (pb, gb) = ctx.point(c.b)?;
            let mut rows = Vec::with_capacity(2);
            for axis in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)] {
                let mut grad = Vec::new();
                project(&ga, axis, &mut grad, 1.0);
                project(&gb, axis, &mut grad, -1.0);
                rows.push(Row { value: (pa - pb).dot(axis), grad });
            }
            Ok(rows)
        }
        ConstraintKind::Horizontal => {
            let (o, s, e) = ctx.line(c.a.id)?;
            Ok(vec![Row { value: s.y - e.y, grad: vec![(o + 1, 1.0), (o + 3, -1.0)] }])
        }
        ConstraintKind::Vertical => {
            let (o, s, e) = ctx.line(c.a.id)?;
            Ok(vec![Row { value: s.x - e.x, grad: vec![(o, 1.0), (o + 2, -1.0)] }])
        }
        ConstraintKind::Parallel | ConstraintKind::Perpendicular => {
            let (oi, si, ei) = ctx.line(c.a.id)?;
            let (oj, sj, ej) = ctx.line(c.b.id)?;
            let (ui, gi) = unit_direction(oi, si, ei);
            let (uj, gj) = unit_direction(oj, sj, ej);
            let mut grad = Vec::new();
            let value = if c.kind == ConstraintKind::Parallel {
                project(&gi, Vec2::new(uj.y, -uj.x), &mut grad, 1.0);
                project(&gj, Vec2::new(-ui.y, ui.x), &mut grad, 1.0);
                ui.cross(uj)
            } else {
                project(&gi, uj, &mut grad, 1.0);
                project(&gj, ui, &mut grad, 1.0);
                ui.dot(uj)
            };
            Ok(vec![Row { value, grad }])
        }
        ConstraintKind::Equal => {
            if ctx.is_line(c.a.id)? {
                let (oi, si, ei) = ctx.line(c.a.id)?;
                let (oj, sj, ej) = ctx.line(c.b.id)?;
                let ui = (ei - si).normalized().unwrap_or(Vec2::ZERO);
                let uj = (ej - sj).normalized().unwrap_or(Vec2::ZERO);
                let grad = vec![
                    (oi, -ui.x),
                    (oi + 1, -ui.y),
                    (oi + 2, ui.x),
                    (oi + 3, ui.y),
                    (oj, uj.x),
                    (oj + 1, uj.y),
                    (oj + 2, -uj.x),
                    (oj + 3, -uj.y),
                ];
                Ok(vec![Row { value: si.distance(ei) - sj.distance(ej), grad }])
            } else {
                let (oi, _, ri) = ctx.curve(c.a.id)?;
                let (oj, _, rj) = ctx.curve(c.b.id)?;
                Ok(vec![Row { value: ri - rj, grad: vec![(oi + 2, 1.0), (oj + 2, -1.0)] }])
            }
        }
        ConstraintKind::Tangent => {
            let (line_id, curve_id) = match (ctx.is_line(c.a.id)?, ctx.is_line(c.b.id)?) {
                (true, false) => (Some(c.a.id), c.b.id),
                (false, true) => (Some(c.b.id), c.a.id),
                (false, false) => (None, c.b.id),
                (true, true) => {
                    return Err(SketchError::IncompatibleKind("tangent between two lines".into()));
                }
            };
            match line_id {
                Some(lid) => {
                    let (ol, s, e) = ctx.line(lid)?;
                    let (oc, center, r) = ctx.curve(curve_id)?;
                    Ok(vec![line_curve_tangent(ol, s, e, oc, center, r)])
                }
                None => {
                    let (oi, ci, ri) = ctx.curve(c.a.id)?;
                    let (oj, cj, rj) = ctx.curve(c.b.id)?;
                    let branch = branch.unwrap_or_else(|| pick_branch(ci, ri, cj, rj));
                    let delta = ci - cj;
                    let dist = delta.norm();
                    let n = if dist > 0.0 { delta * (1.0 / dist) } else { Vec2::ZERO };
                    let mut grad = vec![(oi, n.x), (oi + 1, n.y), (oj, -n.x), (oj + 1, -n.y)];
                    let value = match branch {
                        TangentBranch::External => {
                            grad.extend([(oi + 2, -1.0), (oj + 2, -1.0)]);
                            dist - (ri + rj)
                        }
                        TangentBranch::Internal(sign) => {
                            grad.extend([(oi + 2, -sign), (oj + 2, sign)]);
                            dist - sign * (ri - rj)
                        }
                    };
                    Ok(vec![Row { value, grad }])
                }
            }
        }
    }
}

/// `dist(center, line) - r` with its gradient.
fn line_curve_tangent(ol: usize, s: Vec2, e: Vec2, oc: usize, center: Vec2, r: f64) -> Row {
    let d = e - s;
    let w = center - s;
    let len = d.norm().max(1e-300);
    let u = d * (1.0 / len);
    let n = d.cross(w);
    let sg = if n >= 0.0 { 1.0 } else { -1.0 };
    let dn_dd = Vec2::new(w.y, -w.x);
    let dn_dw = Vec2::new(-d.y, d.x);
    let dn_ds = -dn_dd - dn_dw;
    let dn_de = dn_dd;
    let df_ds = dn_ds * (sg / len) + u * (n.abs() / (len * len));
    let df_de = dn_de * (sg / len) - u * (n.abs() / (len * len));
    let df_dc = dn_dw * (sg / len);
    Row {
        value: n.abs() / len - r,
        grad: vec![
            (ol, df_ds.x),
            (ol + 1, df_ds.y),
            (ol + 2, df_de.x),
            (ol + 3, df_de.y),
            (oc, df_dc.x),
            (oc + 1, df_dc.y),
            (oc + 2, -1.0),
        ],
    }
}

/// Residual vector of one constraint on the current geometry. For
/// curve–curve tangency the branch closest to the drawing is used.
pub fn residual(sketch: &SketchGraph, c: &Constraint) -> Result<Vec<f64>, SketchError> {
    sketch.check_constraint_admissible(c)?;
    let layout = ParamLayout::of(sketch);
    let x = pack(sketch);
    let ctx = Ctx { template: sketch, layout: &layout, x: x.as_slice() };
    Ok(constraint_rows(&ctx, c, None)?.into_iter().map(|r| r.value).collect())
}

/// Analytic Jacobian of one constraint w.r.t. the packed parameter vector
/// of `sketch` (see [`pack`]).
pub fn constraint_jacobian(sketch: &SketchGraph, c: &Constraint) -> Result<DMatrix<f64>, SketchError> {
    sketch.check_constraint_admissible(c)?;
    let layout = ParamLayout::of(sketch);
    let x = pack(sketch);
    let ctx = Ctx { template: sketch, layout: &layout, x: x.as_slice() };
    let rows = constraint_rows(&ctx, c, None)?;
    let mut j = DMatrix::zeros(rows.len(), layout.len());
    for (i, row) in rows.iter().enumerate() {
        for &(k, g) in &row.grad {
            j[(i, k)] += g;
        }
    }
    Ok(j)
}

/// Residual vector of one constraint evaluated at an arbitrary parameter
/// vector laid out like `pack(sketch)`. Used for finite-difference checks.
pub fn residual_at(sketch: &SketchGraph, c: &Constraint, x: &[f64]) -> Result<Vec<f64>, SketchError> {
    let layout = ParamLayout::of(sketch);
    let base = pack(sketch);
    let ctx = Ctx { template: sketch, layout: &layout, x };
    // freeze the branch at the template geometry so both sides agree
    let branch = tangent_branch(&Ctx { template: sketch, layout: &layout, x: base.as_slice() }, c)?;
    Ok(constraint_rows(&ctx, c, branch)?.into_iter().map(|r| r.value).collect())
}

fn tangent_branch(ctx: &Ctx<'_>, c: &Constraint) -> Result<Option<TangentBranch>, SketchError> {
    if c.kind != ConstraintKind::Tangent || ctx.is_line(c.a.id)? || ctx.is_line(c.b.id)? {
        return Ok(None);
    }
    let (_, ci, ri) = ctx.curve(c.a.id)?;
    let (_, cj, rj) = ctx.curve(c.b.id)?;
    Ok(Some(pick_branch(ci, ri, cj, rj)))
}

/// Extra soft residual `weight * (size - target)` on a line length or radius.
#[derive(Debug, Clone, Copy)]
struct SizeHold {
    index: usize,
    target: f64,
    weight: f64,
}

struct System<'a> {
    template: &'a SketchGraph,
    layout: ParamLayout,
    constraints: Vec<(Constraint, Option<TangentBranch>)>,
    holds: Vec<SizeHold>,
}

struct Eval {
    r: DVector<f64>,
    j: DMatrix<f64>,
    /// Norm of the hard-constraint rows only.
    hard_norm: f64,
}

impl<'a> System<'a> {
    fn new(template: &'a SketchGraph) -> Result<Self, SketchError> {
        let layout = ParamLayout::of(template);
        let x0 = pack(template);
        let ctx = Ctx { template, layout: &layout, x: x0.as_slice() };
        let mut constraints = Vec::with_capacity(template.constraints().len());
        for c in template.constraints() {
            constraints.push((*c, tangent_branch(&ctx, c)?));
        }
        Ok(Self { template, layout, constraints, holds: Vec::new() })
    }

    fn eval(&self, x: &[f64]) -> Result<Eval, SketchError> {
        let ctx = Ctx { template: self.template, layout: &self.layout, x };
        let mut rows = Vec::new();
        for (c, branch) in &self.constraints {
            rows.extend(constraint_rows(&ctx, c, *branch)?);
        }
        let hard = rows.len();
        for hold in &self.holds {
            let o = self.layout.offsets[hold.index];
            let row = match ctx.prim(hold.index) {
                Primitive::Line { start, end } => {
                    let u = (end - start).normalized().unwrap_or(Vec2::ZERO) * hold.weight;
                    Row {
                        value: hold.weight * (start.distance(end) - hold.target),
                        grad: vec![(o, -u.x), (o + 1, -u.y), (o + 2, u.x), (o + 3, u.y)],
                    }
                }
                Primitive::Circle { radius, .. } => {
                    Row { value: hold.weight * (radius - hold.target), grad: vec![(o + 2, hold.weight)] }
                }
                Primitive::Arc(a) => {
                    Row { value: hold.weight * (a.radius - hold.target), grad: vec![(o + 2, hold.weight)] }
                }
                Primitive::Point { .. } => continue,
            };
            rows.push(row);
        }
        let mut r = DVector::zeros(rows.len());
        let mut j = DMatrix::zeros(rows.len(), self.layout.len());
        for (i, row) in rows.iter().enumerate() {
            r[i] = row.value;
            for &(k, g) in &row.grad {
                j[(i, k)] += g;
            }
        }
        let hard_norm = r.rows(0, hard).norm();
        Ok(Eval { r, j, hard_norm })
    }
}

struct LmOutcome {
    x: DVector<f64>,
    iterations: usize,
    hard_norm: f64,
}

/// Levenberg–Marquardt with Nielsen damping updates. Stops once the hard
/// residual norm reaches `cfg.residual_tol` (or, when soft holds are
/// present, once progress stalls), after `cfg.max_iterations`, or when the
/// damping blows up.
fn levenberg_marquardt(sys: &System<'_>, x0: DVector<f64>, cfg: &SolverConfig) -> Result<LmOutcome, SketchError> {
    let n = sys.layout.len();
    let mut x = x0;
    let mut ev = sys.eval(x.as_slice())?;
    let soft = !sys.holds.is_empty();
    if n == 0 || ev.r.is_empty() || (!soft && ev.hard_norm <= cfg.residual_tol) {
        return Ok(LmOutcome { hard_norm: ev.hard_norm, x, iterations: 0 });
    }
    let mut jtj = ev.j.transpose() * &ev.j;
    let mut mu = 1e-3 * jtj.diagonal().max().max(1e-12);
    let mut nu = 2.0;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let g = ev.j.transpose() * &ev.r;
        // the floor shrinks with the residual so near-singular but
        // consistent systems still converge fast
        let floor = cfg.anchor_weight * ev.r.norm().min(1.0);
        let mut a = jtj.clone();
        for i in 0..n {
            a[(i, i)] += floor + mu;
        }
        let Some(chol) = a.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let step = chol.solve(&(-&g));
        let predicted = -step.dot(&g) - 0.5 * (&ev.j * &step).norm_squared();
        let candidate = &x + &step;
        let next = sys.eval(candidate.as_slice())?;
        let actual = 0.5 * (ev.r.norm_squared() - next.r.norm_squared());
        let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };
        if rho > 0.0 {
            let small_step = step.norm() <= 1e-15 * (x.norm() + 1e-15);
            let stalled = soft && actual <= 1e-14 * ev.r.norm_squared().max(1e-300);
            x = candidate;
            ev = next;
            jtj = ev.j.transpose() * &ev.j;
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if (!soft && ev.hard_norm <= cfg.residual_tol) || small_step || stalled {
                break;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() || mu > 1e30 {
                break;
            }
        }
    }
    Ok(LmOutcome { hard_norm: ev.hard_norm, x, iterations })
}

fn collapsed(p: &Primitive, tol: f64) -> bool {
    p.size().is_some_and(|s| s < tol)
}

/// Largest movement of any anchor point, center or radius between two
/// sketches with identical primitive lists.
pub fn max_displacement(before: &SketchGraph, after: &SketchGraph) -> f64 {
    before
        .primitives()
        .iter()
        .zip(after.primitives())
        .map(|((_, a), (_, b))| primitive_displacement(a, b))
        .fold(0.0, f64::max)
}

fn primitive_displacement(a: &Primitive, b: &Primitive) -> f64 {
    match (a, b) {
        (Primitive::Line { start: s0, end: e0 }, Primitive::Line { start: s1, end: e1 }) => {
            s0.distance(*s1).max(e0.distance(*e1))
        }
        (Primitive::Circle { center: c0, radius: r0 }, Primitive::Circle { center: c1, radius: r1 }) => {
            c0.distance(*c1).max((r0 - r1).abs())
        }
        (Primitive::Arc(a0), Primitive::Arc(a1)) => a0
            .start()
            .distance(a1.start())
            .max(a0.end().distance(a1.end()))
            .max(a0.mid().distance(a1.mid()))
            .max(a0.center.distance(a1.center))
            .max((a0.radius - a1.radius).abs()),
        (Primitive::Point { pos: p0 }, Primitive::Point { pos: p1 }) => p0.distance(*p1),
        _ => f64::INFINITY,
    }
}

/// Solves the sketch's constraint system. The input is not modified.
///
/// When the plain solve collapses a primitive that was not collapsed
/// before, a second attempt starts from a slightly rotated copy of the
/// collapsing lines with soft holds on their original sizes, then polishes
/// without holds. The second attempt is kept only if it converges without
/// collapse; constraints that force a collapse still report it.
pub fn solve(sketch: &SketchGraph) -> Result<SolveResult, SketchError> {
    solve_with(sketch, &SolverConfig::default())
}

pub fn solve_with(sketch: &SketchGraph, cfg: &SolverConfig) -> Result<SolveResult, SketchError> {
    let sys = System::new(sketch)?;
    let x0 = pack(sketch);
    let deg_tol = cfg.degenerate_tol_rel * sketch.scale();
    let first = levenberg_marquardt(&sys, x0.clone(), cfg)?;
    let first_sketch = unpack(sketch, &sys.layout, first.x.as_slice());
    let newly_collapsed = |out: &SketchGraph| -> Vec<usize> {
        sketch
            .primitives()
            .iter()
            .zip(out.primitives())
            .enumerate()
            .filter(|(_, ((_, a), (_, b)))| !collapsed(a, deg_tol) && collapsed(b, deg_tol))
            .map(|(i, _)| i)
            .collect()
    };
    let mut best = (first_sketch, first.hard_norm, first.iterations);
    let collapsed_first = newly_collapsed(&best.0);
    if !collapsed_first.is_empty() {
        let mut start = x0.clone();
        let mut held = System::new(sketch)?;
        for &i in &collapsed_first {
            let o = sys.layout.offsets[i];
            let p = &sketch.primitives()[i].1;
            if let Primitive::Line { start: s, end: e } = *p {
                let mid = s.lerp(e, 0.5);
                let rot = |q: Vec2| {
                    let (sin, cos) = 0.1f64.sin_cos();
                    let v = q - mid;
                    mid + Vec2::new(v.x * cos - v.y * sin, v.x * sin + v.y * cos)
                };
                let (s2, e2) = (rot(s), rot(e));
                start[o] = s2.x;
                start[o + 1] = s2.y;
                start[o + 2] = e2.x;
                start[o + 3] = e2.y;
            }
            if let Some(size) = p.size() {
                held.holds.push(SizeHold { index: i, target: size, weight: 0.1 });
            }
        }
        let relaxed = levenberg_marquardt(&held, start, cfg)?;
        let polished = levenberg_marquardt(&sys, relaxed.x, cfg)?;
        let candidate = unpack(sketch, &sys.layout, polished.x.as_slice());
        if polished.hard_norm <= cfg.residual_tol && newly_collapsed(&candidate).is_empty() {
            best = (candidate, polished.hard_norm, first.iterations + relaxed.iterations + polished.iterations);
        }
    }
    let (solved, residual_norm, iterations) = best;
    let degenerate = newly_collapsed(&solved).into_iter().map(|i| sketch.primitives()[i].0).collect();
    let max_displacement = max_displacement(sketch, &solved);
    Ok(SolveResult {
        converged: residual_norm <= cfg.residual_tol,
        residual_norm,
        iterations,
        max_displacement,
        degenerate,
        solved,
    })
}

/// Norm of all constraint residuals of `sketch` at its current geometry.
pub fn total_residual(sketch: &SketchGraph) -> Result<f64, SketchError> {
    let sys = System::new(sketch)?;
    Ok(sys.eval(pack(sketch).as_slice())?.hard_norm)
}

/// Adds `c` to a copy of the sketch, solves, and reports whether the
/// result is valid and whether anything moved.
pub fn check_constraint(sketch: &SketchGraph, c: &Constraint) -> Result<ConstraintReport, SketchError> {
    check_constraint_with(sketch, c, &SolverConfig::default())
}

pub fn check_constraint_with(
    sketch: &SketchGraph,
    c: &Constraint,
    cfg: &SolverConfig,
) -> Result<ConstraintReport, SketchError> {
    let before: f64 = residual(sketch, c)?.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut trial = sketch.clone();
    match trial.add_constraint(*c) {
        Ok(_) | Err(SketchError::DuplicateConstraint) => {}
        Err(e) => return Err(e),
    }
    let result = solve_with(&trial, cfg)?;
    let scale = sketch.scale();
    let degenerate = !result.degenerate.is_empty();
    Ok(ConstraintReport {
        valid: result.converged && result.residual_norm <= cfg.validity_tol && !degenerate,
        causes_movement: result.max_displacement > cfg.move_tol_rel * scale,
        degenerate,
        residual_before: before,
        residual_after: result.residual_norm,
        max_displacement: result.max_displacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::Ref;

    fn sketch(prims: &[Primitive]) -> SketchGraph {
        let mut s = SketchGraph::new();
        for p in prims {
            s.add_primitive(*p).unwrap();
        }
        s
    }

    #[test]
    fn satisfied_horizontal_has_zero_residual() {
        let s = sketch(&[Primitive::line(0.0, 0.0, 3.0, 0.0)]);
        assert_eq!(residual(&s, &Constraint::unary(ConstraintKind::Horizontal, 0)).unwrap(), vec![0.0]);
    }

    #[test]
    fn perpendicular_axes_residual() {
        let s = sketch(&[Primitive::line(0.0, 0.0, 1.0, 0.0), Primitive::line(0.0, 0.0, 0.0, 1.0)]);
        let c = Constraint::new(ConstraintKind::Perpendicular, Ref::entire(0), Ref::entire(1));
        assert_eq!(residual(&s, &c).unwrap(), vec![0.0]);
    }

    #[test]
    fn line_circle_tangent_residual() {
        let s = sketch(&[Primitive::line(-1.0, 0.0, 1.0, 0.0), Primitive::circle(0.0, 2.0, 1.0)]);
        let c = Constraint::new(ConstraintKind::Tangent, Ref::entire(0), Ref::entire(1));
        let r = residual(&s, &c).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn horizontal_projects_to_mean_height() {
        let mut s = sketch(&[Primitive::line(0.0, 0.0, 3.0, 1.0)]);
        s.add_constraint(Constraint::unary(ConstraintKind::Horizontal, 0)).unwrap();
        let res = solve(&s).unwrap();
        assert!(res.converged);
        match res.solved.primitives()[0].1 {
            Primitive::Line { start, end } => {
                assert!((start.y - 0.5).abs() < 1e-6 && (end.y - 0.5).abs() < 1e-6);
                assert!((start.x - 0.0).abs() < 1e-6 && (end.x - 3.0).abs() < 1e-6);
            }
            ref p => panic!("{p:?}"),
        }
    }

    #[test]
    fn unconstrained_sketch_is_untouched() {
        let s = sketch(&[Primitive::line(0.0, 0.0, 3.0, 1.0), Primitive::arc(1.0, 1.0, 2.0, 0.5, 2.0, false)]);
        let res = solve(&s).unwrap();
        assert!(res.converged);
        assert_eq!(res.max_displacement, 0.0);
        assert_eq!(res.solved, s);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn horizontal_and_vertical_collapse_is_reported() {
        let mut s = sketch(&[Primitive::line(0.0, 0.0, 3.0, 1.0)]);
        s.add_constraint(Constraint::unary(ConstraintKind::Horizontal, 0)).unwrap();
        s.add_constraint(Constraint::unary(ConstraintKind::Vertical, 0)).unwrap();
        let res = solve(&s).unwrap();
        assert!(res.converged);
        assert_eq!(res.degenerate, vec![PrimitiveId(0)]);
    }

    #[test]
    fn checker_on_satisfied_constraint() {
        let s = sketch(&[Primitive::line(0.0, 1.0, 4.0, 1.0)]);
        let r = check_constraint(&s, &Constraint::unary(ConstraintKind::Horizontal, 0)).unwrap();
        assert!(r.valid && !r.causes_movement && !r.degenerate);
    }

    #[test]
    fn checker_vertical_on_horizontal_line_rotates() {
        let s = sketch(&[Primitive::line(1.0, 1.0, 3.0, 1.0)]);
        let r = check_constraint(&s, &Constraint::unary(ConstraintKind::Vertical, 0)).unwrap();
        assert_eq!((r.valid, r.causes_movement, r.degenerate), (true, true, false));
    }

    #[test]
    fn checker_self_coincident_collapses() {
        let s = sketch(&[Primitive::line(1.0, 1.0, 3.0, 2.0)]);
        let c = Constraint::new(ConstraintKind::Coincident, Ref::new(0, SubRef::End), Ref::new(0, SubRef::Start));
        let r = check_constraint(&s, &c).unwrap();
        assert!(r.degenerate);
        assert!(!r.valid);
    }

    #[test]
    fn checker_rejects_dangling() {
        let s = sketch(&[Primitive::line(1.0, 1.0, 3.0, 2.0)]);
        assert!(matches!(
            check_constraint(&s, &Constraint::unary(ConstraintKind::Vertical, 4)),
            Err(SketchError::DanglingReference(_))
        ));
    }

    #[test]
    fn tangent_circles_keep_drawn_branch() {
        // nearly internally tangent: small circle inside the big one
        let mut s = sketch(&[Primitive::circle(0.0, 0.0, 3.0), Primitive::circle(1.8, 0.0, 1.0)]);
        s.add_constraint(Constraint::new(ConstraintKind::Tangent, Ref::entire(0), Ref::entire(1))).unwrap();
        let res = solve(&s).unwrap();
        assert!(res.converged);
        let (c0, c1) = match (res.solved.primitives()[0].1, res.solved.primitives()[1].1) {
            (Primitive::Circle { center: a, radius: ra }, Primitive::Circle { center: b, radius: rb }) => {
                ((a, ra), (b, rb))
            }
            _ => unreachable!(),
        };
        assert!((c0.0.distance(c1.0) - (c0.1 - c1.1)).abs() < 1e-7);
    }
}
