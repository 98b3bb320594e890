//! Sketch-extrude solids.
//!
//! A [`SolidModel`] is an ordered program of extrusions. Nothing is meshed:
//! membership is answered by [`SolidModel::occupancy`] and planar sections
//! by [`section::cross_section_solid`].

pub mod clip;
pub mod mesh;
pub mod section;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{normalize_angle, Vec2, Vec3};
use crate::sketch::{Primitive, SketchGraph};

pub use mesh::{cross_section_mesh, parse_obj, parse_stl, Mesh};
pub use section::{
    cross_section_solid, cross_section_solid_with, section_image, SectionMethod, SectionPlane, SectionPolygon,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolidError {
    #[error("profile is not closed: {0}")]
    OpenProfile(String),
    #[error("invalid extrusion: {0}")]
    InvalidExtrusion(String),
    #[error("section plane normal is zero or not finite")]
    DegeneratePlane,
    #[error("model has no extrusions")]
    EmptyModel,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("{open_chains} section chain(s) could not be closed")]
    UnclosableLoops { open_chains: usize, partial: SectionPolygon },
    #[error("mesh parse error: {0}")]
    MeshParse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BooleanOp {
    New,
    Cut,
    Join,
    Intersect,
}

impl BooleanOp {
    pub fn from_name(s: &str) -> Option<BooleanOp> {
        match s.trim().to_ascii_lowercase().as_str() {
            "new" => Some(BooleanOp::New),
            "cut" => Some(BooleanOp::Cut),
            "join" | "fuse" => Some(BooleanOp::Join),
            "intersect" | "common" => Some(BooleanOp::Intersect),
            _ => None,
        }
    }

    pub fn combine(self, acc: bool, inside: bool) -> bool {
        match self {
            BooleanOp::New | BooleanOp::Join => acc || inside,
            BooleanOp::Cut => acc && !inside,
            BooleanOp::Intersect => acc && inside,
        }
    }
}

/// Placement and extent of one extrusion. The sketch plane is rotated by
/// `Rz(phi) * Ry(theta) * Rz(gamma)`, translated by `tau` and scaled by
/// `sigma`; the profile sweeps from `-d_minus` to `d_plus` along the plane
/// normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrusionOp {
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub tau_x: f64,
    #[serde(default)]
    pub tau_y: f64,
    #[serde(default)]
    pub tau_z: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub d_minus: f64,
    #[serde(default)]
    pub d_plus: f64,
    pub beta: BooleanOp,
}

fn one() -> f64 {
    1.0
}

impl ExtrusionOp {
    /// Extrusion of the XY plane along +Z.
    pub fn along_z(d_plus: f64, beta: BooleanOp) -> Self {
        Self {
            theta: 0.0,
            phi: 0.0,
            gamma: 0.0,
            tau_x: 0.0,
            tau_y: 0.0,
            tau_z: 0.0,
            sigma: 1.0,
            d_minus: 0.0,
            d_plus,
            beta,
        }
    }

    pub fn validate(&self) -> Result<(), SolidError> {
        let vals = [
            self.theta, self.phi, self.gamma, self.tau_x, self.tau_y, self.tau_z, self.sigma, self.d_minus, self.d_plus,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(SolidError::InvalidExtrusion("parameters must be finite".into()));
        }
        if self.sigma <= 0.0 {
            return Err(SolidError::InvalidExtrusion("sigma must be positive".into()));
        }
        if self.d_minus < 0.0 || self.d_plus < 0.0 || self.d_minus + self.d_plus <= 0.0 {
            return Err(SolidError::InvalidExtrusion("extrusion distances must be >= 0 with a positive sum".into()));
        }
        Ok(())
    }

    pub fn frame(&self) -> Frame {
        let (sp, cp) = self.phi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        let (sg, cg) = self.gamma.sin_cos();
        // columns of Rz(phi) Ry(theta) Rz(gamma)
        let rz_ry = |x: f64, y: f64, z: f64| {
            // Ry(theta)
            let (x1, y1, z1) = (ct * x + st * z, y, -st * x + ct * z);
            // Rz(phi)
            Vec3::new(cp * x1 - sp * y1, sp * x1 + cp * y1, z1)
        };
        let u = rz_ry(cg, sg, 0.0);
        let v = rz_ry(-sg, cg, 0.0);
        let n = rz_ry(0.0, 0.0, 1.0);
        Frame { origin: Vec3::new(self.tau_x, self.tau_y, self.tau_z), u, v, n, sigma: self.sigma }
    }
}

/// Orthonormal sketch-plane frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub n: Vec3,
    pub sigma: f64,
}

impl Frame {
    pub fn to_world(&self, q: Vec2, h: f64) -> Vec3 {
        self.origin + self.u * (self.sigma * q.x) + self.v * (self.sigma * q.y) + self.n * h
    }

    /// Sketch coordinates and signed height of a world point.
    pub fn pullback(&self, p: Vec3) -> (Vec2, f64) {
        let d = p - self.origin;
        (Vec2::new(d.dot(self.u) / self.sigma, d.dot(self.v) / self.sigma), d.dot(self.n))
    }
}

/// Boundary piece of a profile loop. Arcs run from `start` through the
/// signed angle `span` (negative = clockwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Line(Vec2, Vec2),
    Arc { center: Vec2, radius: f64, start: f64, span: f64 },
}

impl Piece {
    fn arc_point(center: Vec2, radius: f64, theta: f64) -> Vec2 {
        center + Vec2::from_angle(theta) * radius
    }

    pub fn start(&self) -> Vec2 {
        match *self {
            Piece::Line(a, _) => a,
            Piece::Arc { center, radius, start, .. } => Self::arc_point(center, radius, start),
        }
    }

    pub fn end(&self) -> Vec2 {
        match *self {
            Piece::Line(_, b) => b,
            Piece::Arc { center, radius, start, span } => Self::arc_point(center, radius, start + span),
        }
    }

    /// Vertices from start to end (end excluded), chord sagitta ≤ `tol`.
    pub fn polyline(&self, tol: f64, out: &mut Vec<Vec2>) {
        match *self {
            Piece::Line(a, _) => out.push(a),
            Piece::Arc { center, radius, start, span } => {
                let step = if tol > 0.0 && tol < radius { 2.0 * (1.0 - tol / radius).acos() } else { PI / 4.0 };
                let n = ((span.abs() / step).ceil() as usize).clamp(2, 1 << 14);
                for i in 0..n {
                    out.push(Self::arc_point(center, radius, start + span * i as f64 / n as f64));
                }
            }
        }
    }

    /// Parameters `t` at which the line `q0 + t d` (|d| = 1) crosses this
    /// piece. A crossing counts when the piece passes from `s <= 0` to
    /// `s > 0` or back, with `s` the signed offset from the line, so
    /// shared endpoints between consecutive pieces are counted once.
    fn crossings(&self, q0: Vec2, d: Vec2, out: &mut Vec<f64>) {
        let s = |p: Vec2| d.cross(p - q0);
        match *self {
            Piece::Line(a, b) => {
                let (sa, sb) = (s(a), s(b));
                if (sa > 0.0) != (sb > 0.0) {
                    let k = sa / (sa - sb);
                    let p = a + (b - a) * k;
                    out.push(d.dot(p - q0));
                }
            }
            Piece::Arc { center, radius, start, span } => {
                let (start, span) = if span < 0.0 { (start + span, -span) } else { (start, span) };
                // split into pieces on which s is monotone
                let psi = d.y.atan2(d.x);
                let mut cuts = vec![0.0];
                for extreme in [psi + FRAC_PI_2, psi - FRAC_PI_2] {
                    let rel = normalize_angle(extreme - start);
                    if rel > 0.0 && rel < span {
                        cuts.push(rel);
                    }
                }
                cuts.push(span);
                cuts.sort_by(f64::total_cmp);
                let sc = s(center);
                for w in cuts.windows(2) {
                    let (a0, a1) = (start + w[0], start + w[1]);
                    let (pa, pb) = (Self::arc_point(center, radius, a0), Self::arc_point(center, radius, a1));
                    if (s(pa) > 0.0) != (s(pb) > 0.0) {
                        let k = (-sc / radius).clamp(-1.0, 1.0).asin();
                        // sub-arc facing along +d uses the principal branch
                        let mid = normalize_angle(0.5 * (a0 + a1) - psi);
                        let phi = if !(FRAC_PI_2..=3.0 * FRAC_PI_2).contains(&mid) { psi + k } else { psi + PI - k };
                        out.push(d.dot(Self::arc_point(center, radius, phi) - q0));
                    }
                }
            }
        }
    }
}

/// Closed loops extracted from a sketch, filled even-odd.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub loops: Vec<Vec<Piece>>,
}

/// Endpoint proximity used to chain primitives into loops.
pub const CHAIN_TOL: f64 = 1e-6;

impl Profile {
    pub fn from_sketch(sketch: &SketchGraph) -> Result<Profile, SolidError> {
        let mut loops = Vec::new();
        let mut open: Vec<Piece> = Vec::new();
        for (_, p) in sketch.primitives() {
            match *p {
                Primitive::Line { start, end } => open.push(Piece::Line(start, end)),
                Primitive::Arc(a) => {
                    let c = a.to_ccw();
                    open.push(Piece::Arc { center: c.center, radius: c.radius, start: c.start_angle, span: c.span() })
                }
                Primitive::Circle { center, radius } => {
                    loops.push(vec![Piece::Arc { center, radius, start: 0.0, span: TAU }]);
                }
                Primitive::Point { .. } => {}
            }
        }
        let tol = CHAIN_TOL * sketch.scale().max(1.0);
        let mut used = vec![false; open.len()];
        for first in 0..open.len() {
            if used[first] {
                continue;
            }
            used[first] = true;
            let mut chain = vec![open[first]];
            let origin = open[first].start();
            let mut cursor = open[first].end();
            while cursor.distance(origin) > tol {
                let next = (0..open.len()).find_map(|k| {
                    if used[k] {
                        return None;
                    }
                    if open[k].start().distance(cursor) <= tol {
                        Some((k, false))
                    } else if open[k].end().distance(cursor) <= tol {
                        Some((k, true))
                    } else {
                        None
                    }
                });
                let Some((k, flip)) = next else {
                    return Err(SolidError::OpenProfile(format!(
                        "chain starting at ({:.6}, {:.6}) ends at ({:.6}, {:.6})",
                        origin.x, origin.y, cursor.x, cursor.y
                    )));
                };
                used[k] = true;
                let piece = if flip { reverse(open[k]) } else { open[k] };
                cursor = piece.end();
                chain.push(piece);
            }
            loops.push(chain);
        }
        if loops.is_empty() {
            return Err(SolidError::OpenProfile("sketch has no closed loop".into()));
        }
        Ok(Profile { loops })
    }

    /// Even-odd point membership.
    pub fn contains(&self, p: Vec2) -> bool {
        let mut xs = Vec::new();
        for lp in &self.loops {
            for piece in lp {
                piece.crossings(p, Vec2::new(1.0, 0.0), &mut xs);
            }
        }
        xs.iter().filter(|&&t| t > 0.0).count() % 2 == 1
    }

    /// Sorted crossing parameters of the line `q0 + t d` with the boundary;
    /// consecutive pairs bound the inside intervals.
    pub fn line_crossings(&self, q0: Vec2, d: Vec2) -> Vec<f64> {
        let d = d.normalized().unwrap_or(Vec2::new(1.0, 0.0));
        let mut ts = Vec::new();
        for lp in &self.loops {
            for piece in lp {
                piece.crossings(q0, d, &mut ts);
            }
        }
        ts.sort_by(f64::total_cmp);
        ts
    }

    pub fn polylines(&self, tol: f64) -> Vec<Vec<Vec2>> {
        self.loops
            .iter()
            .map(|lp| {
                let mut pts = Vec::new();
                for piece in lp {
                    piece.polyline(tol, &mut pts);
                }
                pts
            })
            .collect()
    }

    /// Piece endpoints (the profile's corner vertices).
    pub fn vertices(&self) -> Vec<Vec2> {
        self.loops
            .iter()
            .flat_map(|lp| lp.iter().filter(|p| !matches!(p, Piece::Arc { span, .. } if span.abs() >= TAU)).map(Piece::start))
            .collect()
    }

    pub fn bounds(&self) -> crate::geom::Bounds2 {
        let mut b = crate::geom::Bounds2::empty();
        for lp in &self.loops {
            for piece in lp {
                match *piece {
                    Piece::Line(a, c) => {
                        b.include(a);
                        b.include(c);
                    }
                    Piece::Arc { center, radius, .. } => {
                        b.include(center - Vec2::new(radius, radius));
                        b.include(center + Vec2::new(radius, radius));
                    }
                }
            }
        }
        b
    }
}

fn reverse(p: Piece) -> Piece {
    match p {
        Piece::Line(a, b) => Piece::Line(b, a),
        Piece::Arc { center, radius, start, span } => Piece::Arc { center, radius, start: start + span, span: -span },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub sketch: SketchGraph,
    pub op: ExtrusionOp,
    profile: Profile,
    frame: Frame,
}

impl Step {
    pub fn new(sketch: SketchGraph, op: ExtrusionOp) -> Result<Step, SolidError> {
        op.validate()?;
        let profile = Profile::from_sketch(&sketch)?;
        Ok(Step { frame: op.frame(), sketch, op, profile })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Membership in this step's prism alone.
    pub fn contains(&self, p: Vec3) -> bool {
        let (q, h) = self.frame.pullback(p);
        h >= -self.op.d_minus && h <= self.op.d_plus && self.profile.contains(q)
    }
}

/// Serialized form of a model: the steps' sketches and operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub sketch: SketchGraph,
    pub op: ExtrusionOp,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<StepRecord>", into = "Vec<StepRecord>")]
pub struct SolidModel {
    steps: Vec<Step>,
}

impl TryFrom<Vec<StepRecord>> for SolidModel {
    type Error = SolidError;
    fn try_from(records: Vec<StepRecord>) -> Result<Self, SolidError> {
        records.into_iter().try_fold(SolidModel::new(), |m, r| extrude(&m, r.sketch, r.op))
    }
}

impl From<SolidModel> for Vec<StepRecord> {
    fn from(m: SolidModel) -> Self {
        m.steps.into_iter().map(|s| StepRecord { sketch: s.sketch, op: s.op }).collect()
    }
}

impl SolidModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn occupancy(&self, p: Vec3) -> bool {
        self.steps.iter().fold(false, |acc, s| s.op.beta.combine(acc, s.contains(p)))
    }

    /// Wireframe edges: profile loops at both caps plus vertical edges at
    /// profile vertices.
    pub fn wire_edges(&self) -> Vec<(Vec3, Vec3)> {
        let mut edges = Vec::new();
        for s in &self.steps {
            let tol = 1e-3 * s.sketch.scale();
            for h in [-s.op.d_minus, s.op.d_plus] {
                for lp in s.profile.polylines(tol) {
                    for (i, &a) in lp.iter().enumerate() {
                        let b = lp[(i + 1) % lp.len()];
                        edges.push((s.frame.to_world(a, h), s.frame.to_world(b, h)));
                    }
                }
            }
            for q in s.profile.vertices() {
                edges.push((s.frame.to_world(q, -s.op.d_minus), s.frame.to_world(q, s.op.d_plus)));
            }
        }
        edges
    }

    /// World-space bounding box corners of every step's prism.
    pub fn corners(&self) -> Vec<Vec3> {
        let mut out = Vec::new();
        for s in &self.steps {
            let b = s.profile.bounds();
            for h in [-s.op.d_minus, s.op.d_plus] {
                for q in [b.min, Vec2::new(b.max.x, b.min.y), b.max, Vec2::new(b.min.x, b.max.y)] {
                    out.push(s.frame.to_world(q, h));
                }
            }
        }
        out
    }
}

/// Appends an extrusion step. The first step must be `New`; a later `New`
/// is accepted and unions like `Join`.
pub fn extrude(model: &SolidModel, sketch: SketchGraph, op: ExtrusionOp) -> Result<SolidModel, SolidError> {
    if model.steps.is_empty() && op.beta != BooleanOp::New {
        return Err(SolidError::InvalidExtrusion("the first extrusion must create a new body".into()));
    }
    let step = Step::new(sketch, op)?;
    let mut out = model.clone();
    out.steps.push(step);
    Ok(out)
}

/// Closed rectangle sketch with corners `(x0, y0)` and `(x1, y1)`.
pub fn rectangle_sketch(x0: f64, y0: f64, x1: f64, y1: f64) -> SketchGraph {
    let mut s = SketchGraph::new();
    for (a, b) in [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))] {
        s.add_primitive(Primitive::line(a.0, a.1, b.0, b.1)).expect("rectangle sides are valid");
    }
    s
}

pub fn circle_sketch(cx: f64, cy: f64, r: f64) -> SketchGraph {
    let mut s = SketchGraph::new();
    s.add_primitive(Primitive::circle(cx, cy, r)).expect("circle is valid");
    s
}
