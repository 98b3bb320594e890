//! Parametric sketch kernel: sketch graphs, parameterizations, a constraint
//! solver, serializers, raster/vector renderers, sketch-extrude solids and
//! evaluation metrics.

pub mod eval;
pub mod geom;
pub mod par;
pub mod params;
pub mod quantize;
pub mod render;
pub mod serialize;
pub mod sketch;
pub mod solid;
pub mod solver;

pub use geom::{Bounds2, Vec2, Vec3};
pub use sketch::{
    Arc, Constraint, ConstraintKind, Primitive, PrimitiveId, PrimitiveKind, Ref, SketchError, SketchGraph, SubRef,
};
