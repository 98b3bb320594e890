//! The parametric sketch document: primitives, constraints and the editing
//! commands the agent tools call into.
//!
//! Primitives are stored in their canonical form (line endpoints, circle
//! center/radius, arc center/radius/angles, point position). Other
//! parameterizations are derived views, see [`crate::params`].

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{normalize_angle, Bounds2, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("constraint references unknown primitive {0}")]
    DanglingReference(PrimitiveId),
    #[error("incompatible constraint: {0}")]
    IncompatibleKind(String),
    #[error("duplicate constraint")]
    DuplicateConstraint,
    #[error("sub-reference `entire` does not resolve to a point")]
    EntireHasNoPoint,
    #[error("sub-reference {sub} is not valid for a {kind}")]
    IncompatibleSubRef { kind: PrimitiveKind, sub: SubRef },
    #[error("degenerate primitive: {0}")]
    DegeneratePrimitive(String),
    #[error("malformed parameter record: {0}")]
    MalformedRecord(String),
    #[error("sketch is empty")]
    EmptySketch,
    #[error("unknown primitive {0}")]
    UnknownPrimitive(PrimitiveId),
}

/// Identifier of a primitive inside one sketch. Never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrimitiveId(pub u32);

impl fmt::Display for PrimitiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The part of a primitive a constraint attaches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubRef {
    Start,
    End,
    Mid,
    Entire,
}

impl SubRef {
    pub const ALL: [SubRef; 4] = [SubRef::Start, SubRef::End, SubRef::Mid, SubRef::Entire];

    /// Integer encoding in `1..=4`.
    pub fn code(self) -> u8 {
        match self {
            SubRef::Start => 1,
            SubRef::End => 2,
            SubRef::Mid => 3,
            SubRef::Entire => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<SubRef> {
        SubRef::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SubRef::Start => "start",
            SubRef::End => "end",
            SubRef::Mid => "mid",
            SubRef::Entire => "entire",
        }
    }

    pub fn from_name(s: &str) -> Option<SubRef> {
        match s.trim().to_ascii_lowercase().as_str() {
            "start" | "1" => Some(SubRef::Start),
            "end" | "2" => Some(SubRef::End),
            "mid" | "middle" | "center" | "3" => Some(SubRef::Mid),
            "entire" | "4" => Some(SubRef::Entire),
            _ => None,
        }
    }
}

impl fmt::Display for SubRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Line,
    Circle,
    Arc,
    Point,
}

impl PrimitiveKind {
    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Line => "line",
            PrimitiveKind::Circle => "circle",
            PrimitiveKind::Arc => "arc",
            PrimitiveKind::Point => "point",
        }
    }

    pub fn from_name(s: &str) -> Option<PrimitiveKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "line" | "linesegment" | "line_segment" => Some(PrimitiveKind::Line),
            "circle" => Some(PrimitiveKind::Circle),
            "arc" | "arcofcircle" | "arc_of_circle" => Some(PrimitiveKind::Arc),
            "point" => Some(PrimitiveKind::Point),
            _ => None,
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A circular arc drawn from `start_angle` to `end_angle`, counter-clockwise
/// unless `clockwise` is set. Angles are radians in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: Vec2,
    pub radius: f64,
    pub start_angle: f64,
    pub end_angle: f64,
    pub clockwise: bool,
}

impl Arc {
    /// Swept angle in `[0, 2π)`, measured in the drawing direction.
    pub fn span(&self) -> f64 {
        if self.clockwise {
            normalize_angle(self.start_angle - self.end_angle)
        } else {
            normalize_angle(self.end_angle - self.start_angle)
        }
    }

    /// Angle reached after sweeping `fraction` of the span from the start.
    pub fn angle_at(&self, fraction: f64) -> f64 {
        let delta = self.span() * fraction;
        if self.clockwise {
            normalize_angle(self.start_angle - delta)
        } else {
            normalize_angle(self.start_angle + delta)
        }
    }

    pub fn point_at_angle(&self, theta: f64) -> Vec2 {
        self.center + Vec2::from_angle(theta) * self.radius
    }

    pub fn start(&self) -> Vec2 {
        self.point_at_angle(self.start_angle)
    }

    pub fn end(&self) -> Vec2 {
        self.point_at_angle(self.end_angle)
    }

    pub fn mid(&self) -> Vec2 {
        self.point_at_angle(self.angle_at(0.5))
    }

    /// True when `theta` lies on the swept range (inclusive).
    pub fn contains_angle(&self, theta: f64) -> bool {
        let rel = if self.clockwise {
            normalize_angle(self.start_angle - theta)
        } else {
            normalize_angle(theta - self.start_angle)
        };
        rel <= self.span() + 1e-12
    }

    /// The same geometric arc expressed counter-clockwise.
    pub fn to_ccw(&self) -> Arc {
        if self.clockwise {
            Arc {
                start_angle: self.end_angle,
                end_angle: self.start_angle,
                clockwise: false,
                ..*self
            }
        } else {
            *self
        }
    }

    /// Arc through three points (start, a point on the arc, end).
    pub fn through_points(start: Vec2, mid: Vec2, end: Vec2) -> Result<Arc, SketchError> {
        let turn = (mid - start).cross(end - mid);
        let scale = (mid - start).norm().max((end - mid).norm()).max(1e-300);
        if turn.abs() <= 1e-12 * scale * scale {
            return Err(SketchError::DegeneratePrimitive(
                "arc points are collinear".into(),
            ));
        }
        let center = circumcenter(start, mid, end);
        let radius = start.distance(center);
        Ok(Arc {
            center,
            radius,
            start_angle: (start - center).angle(),
            end_angle: (end - center).angle(),
            // a counter-clockwise arc always turns left
            clockwise: turn < 0.0,
        })
    }
}

fn circumcenter(a: Vec2, b: Vec2, c: Vec2) -> Vec2 {
    let bx = b - a;
    let cx = c - a;
    let d = 2.0 * bx.cross(cx);
    let b2 = bx.norm_sq();
    let c2 = cx.norm_sq();
    a + Vec2::new(cx.y * b2 - bx.y * c2, bx.x * c2 - cx.x * b2) * (1.0 / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Line { start: Vec2, end: Vec2 },
    Circle { center: Vec2, radius: f64 },
    Arc(Arc),
    Point { pos: Vec2 },
}

impl Primitive {
    pub fn line(x_s: f64, y_s: f64, x_e: f64, y_e: f64) -> Self {
        Primitive::Line { start: Vec2::new(x_s, y_s), end: Vec2::new(x_e, y_e) }
    }

    pub fn circle(x_c: f64, y_c: f64, r: f64) -> Self {
        Primitive::Circle { center: Vec2::new(x_c, y_c), radius: r }
    }

    pub fn arc(x_c: f64, y_c: f64, r: f64, theta_s: f64, theta_e: f64, clockwise: bool) -> Self {
        Primitive::Arc(Arc {
            center: Vec2::new(x_c, y_c),
            radius: r,
            start_angle: theta_s,
            end_angle: theta_e,
            clockwise,
        })
    }

    pub fn point(x: f64, y: f64) -> Self {
        Primitive::Point { pos: Vec2::new(x, y) }
    }

    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::Line { .. } => PrimitiveKind::Line,
            Primitive::Circle { .. } => PrimitiveKind::Circle,
            Primitive::Arc(_) => PrimitiveKind::Arc,
            Primitive::Point { .. } => PrimitiveKind::Point,
        }
    }

    /// Checks the primitive invariants and returns the canonical copy
    /// (arc angles wrapped into `[0, 2π)`).
    pub fn validated(&self) -> Result<Primitive, SketchError> {
        let bad = |msg: &str| Err(SketchError::InvalidPrimitive(msg.to_string()));
        match *self {
            Primitive::Line { start, end } => {
                if !start.is_finite() || !end.is_finite() {
                    return bad("nonfinite line coordinate");
                }
                Ok(*self)
            }
            Primitive::Circle { center, radius } => {
                if !center.is_finite() || !radius.is_finite() {
                    return bad("nonfinite circle parameter");
                }
                if radius <= 0.0 {
                    return bad("circle radius must be positive");
                }
                Ok(*self)
            }
            Primitive::Arc(a) => {
                if !a.center.is_finite()
                    || !a.radius.is_finite()
                    || !a.start_angle.is_finite()
                    || !a.end_angle.is_finite()
                {
                    return bad("nonfinite arc parameter");
                }
                if a.radius <= 0.0 {
                    return bad("arc radius must be positive");
                }
                let arc = Arc {
                    start_angle: normalize_angle(a.start_angle),
                    end_angle: normalize_angle(a.end_angle),
                    ..a
                };
                if arc.start_angle == arc.end_angle {
                    return bad("arc span must be nonzero");
                }
                Ok(Primitive::Arc(arc))
            }
            Primitive::Point { pos } => {
                if !pos.is_finite() {
                    return bad("nonfinite point coordinate");
                }
                Ok(*self)
            }
        }
    }

    /// Resolves a sub-reference to a coordinate. Arc `mid` is the angular
    /// midpoint along the drawn direction; circle `mid` is the center; a
    /// point's `entire` is its position.
    pub fn ref_point(&self, sub: SubRef) -> Result<Vec2, SketchError> {
        let incompatible = || SketchError::IncompatibleSubRef { kind: self.kind(), sub };
        match (self, sub) {
            (Primitive::Line { start, .. }, SubRef::Start) => Ok(*start),
            (Primitive::Line { end, .. }, SubRef::End) => Ok(*end),
            (Primitive::Line { start, end }, SubRef::Mid) => Ok(start.lerp(*end, 0.5)),
            (Primitive::Arc(a), SubRef::Start) => Ok(a.start()),
            (Primitive::Arc(a), SubRef::End) => Ok(a.end()),
            (Primitive::Arc(a), SubRef::Mid) => Ok(a.mid()),
            (Primitive::Circle { center, .. }, SubRef::Mid) => Ok(*center),
            (Primitive::Point { pos }, SubRef::Entire) => Ok(*pos),
            (Primitive::Line { .. } | Primitive::Arc(_) | Primitive::Circle { .. }, SubRef::Entire) => {
                Err(SketchError::EntireHasNoPoint)
            }
            _ => Err(incompatible()),
        }
    }

    /// Whether `sub` names a point of this primitive (usable by Coincident).
    pub fn is_point_ref(&self, sub: SubRef) -> bool {
        self.ref_point(sub).is_ok()
    }

    /// Bounds of the drawn geometry (exact for arcs).
    pub fn drawn_bounds(&self, b: &mut Bounds2) {
        match *self {
            Primitive::Line { start, end } => {
                b.include(start);
                b.include(end);
            }
            Primitive::Circle { center, radius } => {
                b.include(center - Vec2::new(radius, radius));
                b.include(center + Vec2::new(radius, radius));
            }
            Primitive::Arc(a) => {
                b.include(a.start());
                b.include(a.end());
                for k in 0..4 {
                    let theta = f64::from(k) * TAU / 4.0;
                    if a.contains_angle(theta) {
                        b.include(a.point_at_angle(theta));
                    }
                }
            }
            Primitive::Point { pos } => b.include(pos),
        }
    }

    /// Bounds covering every positional parameter, including arc centers
    /// and full circle extents of arcs.
    pub fn parameter_bounds(&self, b: &mut Bounds2) {
        match *self {
            Primitive::Arc(a) => {
                b.include(a.center - Vec2::new(a.radius, a.radius));
                b.include(a.center + Vec2::new(a.radius, a.radius));
            }
            _ => self.drawn_bounds(b),
        }
    }

    /// Length for lines, radius for circles and arcs.
    pub fn size(&self) -> Option<f64> {
        match *self {
            Primitive::Line { start, end } => Some(start.distance(end)),
            Primitive::Circle { radius, .. } => Some(radius),
            Primitive::Arc(a) => Some(a.radius),
            Primitive::Point { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Coincident,
    Parallel,
    Equal,
    Vertical,
    Horizontal,
    Perpendicular,
    Tangent,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 7] = [
        ConstraintKind::Coincident,
        ConstraintKind::Parallel,
        ConstraintKind::Equal,
        ConstraintKind::Vertical,
        ConstraintKind::Horizontal,
        ConstraintKind::Perpendicular,
        ConstraintKind::Tangent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::Coincident => "coincident",
            ConstraintKind::Parallel => "parallel",
            ConstraintKind::Equal => "equal",
            ConstraintKind::Vertical => "vertical",
            ConstraintKind::Horizontal => "horizontal",
            ConstraintKind::Perpendicular => "perpendicular",
            ConstraintKind::Tangent => "tangent",
        }
    }

    pub fn from_name(s: &str) -> Option<ConstraintKind> {
        let s = s.trim().to_ascii_lowercase();
        ConstraintKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Horizontal and vertical act on one primitive.
    pub fn is_unary(self) -> bool {
        matches!(self, ConstraintKind::Horizontal | ConstraintKind::Vertical)
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A constraint anchor: a primitive plus the part of it being referenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ref {
    pub id: PrimitiveId,
    pub sub: SubRef,
}

impl Ref {
    pub fn new(id: u32, sub: SubRef) -> Self {
        Self { id: PrimitiveId(id), sub }
    }

    pub fn entire(id: u32) -> Self {
        Self::new(id, SubRef::Entire)
    }
}

impl fmt::Display for Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.id, self.sub)
    }
}

/// An undirected constraint edge. Single-primitive constraints use `b == a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub a: Ref,
    pub b: Ref,
}

impl Constraint {
    pub fn new(kind: ConstraintKind, a: Ref, b: Ref) -> Self {
        Self { kind, a, b }
    }

    pub fn unary(kind: ConstraintKind, id: u32) -> Self {
        let r = Ref::entire(id);
        Self { kind, a: r, b: r }
    }

    /// The references as an order-independent pair.
    pub fn unordered_refs(&self) -> (Ref, Ref) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }

    pub fn same_as(&self, other: &Constraint) -> bool {
        self.kind == other.kind && self.unordered_refs() == other.unordered_refs()
    }

    pub fn ids(&self) -> [PrimitiveId; 2] {
        [self.a.id, self.b.id]
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind.is_unary() && self.a == self.b {
            write!(f, "{}({})", self.kind, self.a.id)
        } else {
            write!(f, "{}({}, {})", self.kind, self.a, self.b)
        }
    }
}

/// Checks that `kind` admits the operand combination.
pub fn check_compatibility(
    kind: ConstraintKind,
    (pa, sa): (&Primitive, SubRef),
    (pb, sb): (&Primitive, SubRef),
    same_ref: bool,
    same_primitive: bool,
) -> Result<(), SketchError> {
    use PrimitiveKind as K;
    let fail = |msg: String| Err(SketchError::IncompatibleKind(msg));
    let (ka, kb) = (pa.kind(), pb.kind());
    let both_entire = sa == SubRef::Entire && sb == SubRef::Entire;
    let curved = |k: K| matches!(k, K::Circle | K::Arc);
    match kind {
        ConstraintKind::Horizontal | ConstraintKind::Vertical => {
            if !same_ref {
                return fmt_fail(kind, "acts on a single primitive");
            }
            if ka != K::Line || sa != SubRef::Entire {
                return fail(format!("{kind} requires an entire line, got {ka}.{sa}"));
            }
            Ok(())
        }
        ConstraintKind::Parallel | ConstraintKind::Perpendicular => {
            if same_primitive {
                return fmt_fail(kind, "needs two distinct lines");
            }
            if ka != K::Line || kb != K::Line || !both_entire {
                return fail(format!("{kind} requires two entire lines, got {ka}/{kb}"));
            }
            Ok(())
        }
        ConstraintKind::Equal => {
            if same_primitive {
                return fmt_fail(kind, "needs two distinct primitives");
            }
            if !both_entire {
                return fmt_fail(kind, "requires entire references");
            }
            if (ka == K::Line && kb == K::Line) || (curved(ka) && curved(kb)) {
                Ok(())
            } else {
                fail(format!("equal between {ka} and {kb} is not supported"))
            }
        }
        ConstraintKind::Tangent => {
            if same_primitive {
                return fmt_fail(kind, "needs two distinct primitives");
            }
            if !both_entire {
                return fmt_fail(kind, "requires entire references");
            }
            let ok = (ka == K::Line && curved(kb)) || (curved(ka) && kb == K::Line) || (curved(ka) && curved(kb));
            if ok {
                Ok(())
            } else {
                fail(format!("tangent between {ka} and {kb} is not supported"))
            }
        }
        ConstraintKind::Coincident => {
            if same_ref {
                return fmt_fail(kind, "references the same point twice");
            }
            if !pa.is_point_ref(sa) || !pb.is_point_ref(sb) {
                return fail(format!("coincident needs two point references, got {ka}.{sa} and {kb}.{sb}"));
            }
            Ok(())
        }
    }
}

fn fmt_fail(kind: ConstraintKind, what: &str) -> Result<(), SketchError> {
    Err(SketchError::IncompatibleKind(format!("{kind} {what}")))
}

/// Index of a constraint within its sketch.
pub type ConstraintIndex = usize;

/// A constrained sketch: primitives plus constraint edges between them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SketchGraph {
    primitives: Vec<(PrimitiveId, Primitive)>,
    constraints: Vec<Constraint>,
    next_id: u32,
}

impl SketchGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn primitives(&self) -> &[(PrimitiveId, Primitive)] {
        &self.primitives
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Next id `add_primitive` will hand out.
    pub fn next_id(&self) -> PrimitiveId {
        PrimitiveId(self.next_id)
    }

    pub fn index_of(&self, id: PrimitiveId) -> Option<usize> {
        self.primitives.iter().position(|(pid, _)| *pid == id)
    }

    pub fn get(&self, id: PrimitiveId) -> Option<&Primitive> {
        self.primitives.iter().find(|(pid, _)| *pid == id).map(|(_, p)| p)
    }

    pub fn add_primitive(&mut self, p: Primitive) -> Result<PrimitiveId, SketchError> {
        let p = p.validated()?;
        let id = PrimitiveId(self.next_id);
        self.next_id += 1;
        self.primitives.push((id, p));
        Ok(id)
    }

    /// Inserts a primitive under an explicit id (used when loading
    /// documents). The id counter moves past it.
    pub fn insert_with_id(&mut self, id: PrimitiveId, p: Primitive) -> Result<(), SketchError> {
        let p = p.validated()?;
        if self.index_of(id).is_some() {
            return Err(SketchError::InvalidPrimitive(format!("duplicate primitive id {id}")));
        }
        self.primitives.push((id, p));
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    /// Raises the id counter, e.g. to honor ids consumed by deleted primitives.
    pub fn reserve_ids_until(&mut self, next: u32) {
        self.next_id = self.next_id.max(next);
    }

    /// Replaces the geometry of an existing primitive in place.
    pub fn set_primitive(&mut self, id: PrimitiveId, p: Primitive) -> Result<(), SketchError> {
        let p = p.validated()?;
        let idx = self.index_of(id).ok_or(SketchError::UnknownPrimitive(id))?;
        if self.primitives[idx].1.kind() != p.kind() {
            return Err(SketchError::InvalidPrimitive(format!(
                "cannot change primitive {id} from {} to {}",
                self.primitives[idx].1.kind(),
                p.kind()
            )));
        }
        self.primitives[idx].1 = p;
        Ok(())
    }

    /// Checks references and kind/arity compatibility without inserting.
    pub fn check_constraint_admissible(&self, c: &Constraint) -> Result<(), SketchError> {
        let pa = self.get(c.a.id).ok_or(SketchError::DanglingReference(c.a.id))?;
        let pb = self.get(c.b.id).ok_or(SketchError::DanglingReference(c.b.id))?;
        check_compatibility(c.kind, (pa, c.a.sub), (pb, c.b.sub), c.a == c.b, c.a.id == c.b.id)
    }

    /// Appends a constraint. Geometry is not moved; solving is explicit.
    pub fn add_constraint(&mut self, c: Constraint) -> Result<ConstraintIndex, SketchError> {
        self.check_constraint_admissible(&c)?;
        if self.constraints.iter().any(|e| e.same_as(&c)) {
            return Err(SketchError::DuplicateConstraint);
        }
        self.constraints.push(c);
        Ok(self.constraints.len() - 1)
    }

    pub fn remove_constraint(&mut self, index: ConstraintIndex) -> Option<Constraint> {
        (index < self.constraints.len()).then(|| self.constraints.remove(index))
    }

    /// Removes the listed primitives and every constraint touching them.
    /// Unknown ids are ignored. Returns the number of primitives removed.
    pub fn del_geometries(&mut self, ids: &[PrimitiveId]) -> usize {
        let before = self.primitives.len();
        self.primitives.retain(|(id, _)| !ids.contains(id));
        let removed = before - self.primitives.len();
        if removed > 0 {
            let live: Vec<PrimitiveId> = self.primitives.iter().map(|(id, _)| *id).collect();
            self.constraints
                .retain(|c| live.contains(&c.a.id) && live.contains(&c.b.id));
        }
        removed
    }

    /// Resolves a constraint anchor to a coordinate.
    pub fn subref_point(&self, r: Ref) -> Result<Vec2, SketchError> {
        self.get(r.id).ok_or(SketchError::UnknownPrimitive(r.id))?.ref_point(r.sub)
    }

    /// Full invariant check: valid primitives, resolving and admissible
    /// constraints, no duplicates.
    pub fn validate(&self) -> Result<(), SketchError> {
        for (i, (id, p)) in self.primitives.iter().enumerate() {
            p.validated()?;
            if self.primitives[..i].iter().any(|(o, _)| o == id) {
                return Err(SketchError::InvalidPrimitive(format!("duplicate primitive id {id}")));
            }
            if id.0 >= self.next_id {
                return Err(SketchError::InvalidPrimitive(format!("id {id} beyond id counter")));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            self.check_constraint_admissible(c)?;
            if self.constraints[..i].iter().any(|e| e.same_as(c)) {
                return Err(SketchError::DuplicateConstraint);
            }
        }
        Ok(())
    }

    pub fn drawn_bounds(&self) -> Bounds2 {
        let mut b = Bounds2::empty();
        for (_, p) in &self.primitives {
            p.drawn_bounds(&mut b);
        }
        b
    }

    pub fn parameter_bounds(&self) -> Bounds2 {
        let mut b = Bounds2::empty();
        for (_, p) in &self.primitives {
            p.parameter_bounds(&mut b);
        }
        b
    }

    /// Diagonal of the drawn bounds, or 1 for empty / zero-size sketches.
    pub fn scale(&self) -> f64 {
        let b = self.drawn_bounds();
        if b.is_empty() {
            return 1.0;
        }
        let d = b.diagonal();
        if d > 0.0 {
            d
        } else {
            1.0
        }
    }

    /// Same primitives, no constraints.
    pub fn without_constraints(&self) -> SketchGraph {
        SketchGraph { constraints: Vec::new(), ..self.clone() }
    }

    pub(crate) fn primitives_mut(&mut self) -> impl Iterator<Item = &mut Primitive> {
        self.primitives.iter_mut().map(|(_, p)| p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn first_id_is_zero() {
        let mut s = SketchGraph::new();
        assert_eq!(s.add_primitive(Primitive::line(0.0, 0.0, 1.0, 0.0)).unwrap(), PrimitiveId(0));
    }

    #[test]
    fn ids_are_never_reused() {
        let mut s = SketchGraph::new();
        s.add_primitive(Primitive::line(0.0, 0.0, 1.0, 0.0)).unwrap();
        let one = s.add_primitive(Primitive::point(1.0, 1.0)).unwrap();
        assert_eq!(s.del_geometries(&[one]), 1);
        assert_eq!(s.add_primitive(Primitive::circle(0.0, 0.0, 1.0)).unwrap(), PrimitiveId(2));
    }

    #[test]
    fn invalid_primitives_rejected() {
        let mut s = SketchGraph::new();
        assert!(matches!(s.add_primitive(Primitive::circle(0.0, 0.0, -1.0)), Err(SketchError::InvalidPrimitive(_))));
        assert!(matches!(s.add_primitive(Primitive::line(f64::NAN, 0.0, 1.0, 0.0)), Err(SketchError::InvalidPrimitive(_))));
        assert!(matches!(s.add_primitive(Primitive::arc(0.0, 0.0, 1.0, 1.0, 1.0 + 2.0 * PI, false)), Err(SketchError::InvalidPrimitive(_))));
        assert!(s.is_empty());
    }

    #[test]
    fn constraint_admission() {
        let mut s = SketchGraph::new();
        s.add_primitive(Primitive::line(0.0, 0.0, 1.0, 0.0)).unwrap();
        s.add_primitive(Primitive::circle(0.0, 2.0, 1.0)).unwrap();
        assert_eq!(s.add_constraint(Constraint::unary(ConstraintKind::Horizontal, 0)).unwrap(), 0);
        assert_eq!(
            s.add_constraint(Constraint::new(ConstraintKind::Tangent, Ref::entire(0), Ref::entire(1))).unwrap(),
            1
        );
        assert!(matches!(
            s.add_constraint(Constraint::unary(ConstraintKind::Vertical, 1)),
            Err(SketchError::IncompatibleKind(_))
        ));
        assert!(matches!(
            s.add_constraint(Constraint::new(ConstraintKind::Tangent, Ref::entire(1), Ref::entire(0))),
            Err(SketchError::DuplicateConstraint)
        ));
        assert!(matches!(
            s.add_constraint(Constraint::unary(ConstraintKind::Horizontal, 7)),
            Err(SketchError::DanglingReference(PrimitiveId(7)))
        ));
        assert!(matches!(
            s.add_constraint(Constraint::new(ConstraintKind::Equal, Ref::entire(0), Ref::entire(1))),
            Err(SketchError::IncompatibleKind(_))
        ));
    }

    #[test]
    fn delete_cascades_to_constraints() {
        let mut s = SketchGraph::new();
        s.add_primitive(Primitive::line(0.0, 0.0, 1.0, 0.0)).unwrap();
        s.add_primitive(Primitive::line(1.0, 0.0, 1.0, 1.0)).unwrap();
        s.add_constraint(Constraint::new(
            ConstraintKind::Coincident,
            Ref::new(0, SubRef::End),
            Ref::new(1, SubRef::Start),
        ))
        .unwrap();
        assert_eq!(s.del_geometries(&[PrimitiveId(0)]), 1);
        assert!(s.constraints().is_empty());
        assert_eq!(s.del_geometries(&[PrimitiveId(9)]), 0);
        s.validate().unwrap();
    }

    #[test]
    fn delete_everything() {
        let mut s = SketchGraph::new();
        s.add_primitive(Primitive::line(0.0, 0.0, 1.0, 0.0)).unwrap();
        s.add_primitive(Primitive::point(3.0, 3.0)).unwrap();
        assert_eq!(s.del_geometries(&[PrimitiveId(0), PrimitiveId(1)]), 2);
        assert!(s.is_empty());
    }

    #[test]
    fn subref_points() {
        let mut s = SketchGraph::new();
        s.add_primitive(Primitive::line(0.0, 0.0, 2.0, 0.0)).unwrap();
        s.add_primitive(Primitive::arc(0.0, 0.0, 1.0, 0.0, PI, false)).unwrap();
        s.add_primitive(Primitive::circle(5.0, 5.0, 1.0)).unwrap();
        assert_eq!(s.subref_point(Ref::new(0, SubRef::End)).unwrap(), Vec2::new(2.0, 0.0));
        let mid = s.subref_point(Ref::new(1, SubRef::Mid)).unwrap();
        assert!(mid.distance(Vec2::new(0.0, 1.0)) < 1e-12);
        assert!(matches!(
            s.subref_point(Ref::new(2, SubRef::Start)),
            Err(SketchError::IncompatibleSubRef { .. })
        ));
        assert_eq!(s.subref_point(Ref::new(2, SubRef::Mid)).unwrap(), Vec2::new(5.0, 5.0));
        assert!(matches!(s.subref_point(Ref::entire(0)), Err(SketchError::EntireHasNoPoint)));
    }

    #[test]
    fn clockwise_arc_midpoint() {
        let a = Arc { center: Vec2::ZERO, radius: 1.0, start_angle: 0.0, end_angle: PI, clockwise: true };
        assert!(a.mid().distance(Vec2::new(0.0, -1.0)) < 1e-12);
        assert!((a.span() - PI).abs() < 1e-12);
    }

    #[test]
    fn arc_through_points_recovers_orientation() {
        let a = Arc { center: Vec2::new(1.0, 2.0), radius: 3.0, start_angle: 0.3, end_angle: 2.0, clockwise: false };
        let b = Arc::through_points(a.start(), a.mid(), a.end()).unwrap();
        assert!(!b.clockwise);
        assert!(b.center.distance(a.center) < 1e-9);
        let c = Arc { clockwise: true, ..a };
        let d = Arc::through_points(c.start(), c.mid(), c.end()).unwrap();
        assert!(d.clockwise);
        assert!((d.span() - c.span()).abs() < 1e-9);
    }

    #[test]
    fn subref_codes_round_trip() {
        for s in SubRef::ALL {
            assert_eq!(SubRef::from_code(s.code()), Some(s));
        }
        assert_eq!(SubRef::from_code(0), None);
        assert_eq!(SubRef::from_code(5), None);
    }
}
