//! 6-bit uniform parameter quantization.
//!
//! Coordinates are normalized by the padded square bounding box of the
//! sketch's parameters (5% margin, centered) and binned into 64 bins per axis.
//! Radii share the coordinate scale; arc angles are binned over `[0, 2π)`.
//! Arcs are tokenized in counter-clockwise center form
//! `(x_c, y_c, r, theta_s, theta_e)` so that every token is independent,
//! which keeps re-quantization of dequantized sketches stable.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::sketch::{Arc, Constraint, Primitive, PrimitiveId, PrimitiveKind, SketchError, SketchGraph};

pub const BINS: u32 = 64;
pub const MARGIN: f64 = 0.05;

/// Affine map from sketch coordinates to the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub origin: Vec2,
    pub side: f64,
}

impl Normalization {
    pub fn of(sketch: &SketchGraph) -> Result<Self, SketchError> {
        if sketch.is_empty() {
            return Err(SketchError::EmptySketch);
        }
        let b = sketch.parameter_bounds();
        if b.is_empty() || !b.min.is_finite() || !b.max.is_finite() {
            return Err(SketchError::EmptySketch);
        }
        let (origin, side) = b.padded_square(MARGIN);
        Ok(Self { origin, side })
    }

    pub fn to_unit(&self, p: Vec2) -> Vec2 {
        (p - self.origin) * (1.0 / self.side)
    }

    pub fn from_unit(&self, u: Vec2) -> Vec2 {
        self.origin + u * self.side
    }

    /// Width of one bin in sketch units.
    pub fn bin_width(&self) -> f64 {
        self.side / f64::from(BINS)
    }
}

/// What a token slot measures; angle slots wrap around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenScale {
    Position,
    Length,
    Angle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedPrimitive {
    pub id: PrimitiveId,
    pub kind: PrimitiveKind,
    pub tokens: Vec<u8>,
    /// Arc stored counter-clockwise but originally drawn clockwise.
    #[serde(default)]
    pub reversed: bool,
}

impl QuantizedPrimitive {
    pub fn scales(kind: PrimitiveKind) -> &'static [TokenScale] {
        use TokenScale::*;
        match kind {
            PrimitiveKind::Line => &[Position, Position, Position, Position],
            PrimitiveKind::Circle => &[Position, Position, Length],
            PrimitiveKind::Arc => &[Position, Position, Length, Angle, Angle],
            PrimitiveKind::Point => &[Position, Position],
        }
    }

    /// Per-slot token distance to `other` (same kind assumed); angle slots
    /// use the shorter way around the circle.
    pub fn token_distances<'a>(&'a self, other: &'a QuantizedPrimitive) -> impl Iterator<Item = u32> + 'a {
        Self::scales(self.kind)
            .iter()
            .zip(self.tokens.iter().zip(&other.tokens))
            .map(|(scale, (&a, &b))| token_distance(*scale, a, b))
    }
}

pub fn token_distance(scale: TokenScale, a: u8, b: u8) -> u32 {
    let d = u32::from(a.abs_diff(b));
    match scale {
        TokenScale::Angle => d.min(BINS - d),
        _ => d,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedSketch {
    pub bins_per_axis: u32,
    pub normalization: Normalization,
    pub primitives: Vec<QuantizedPrimitive>,
    pub constraints: Vec<Constraint>,
}

impl QuantizedSketch {
    pub fn get(&self, id: PrimitiveId) -> Option<&QuantizedPrimitive> {
        self.primitives.iter().find(|q| q.id == id)
    }

    pub fn token_count(&self) -> usize {
        self.primitives.iter().map(|q| q.tokens.len()).sum()
    }
}

fn bin(u: f64) -> u8 {
    let k = (u * f64::from(BINS)).floor();
    // u8 range is guaranteed by the clamp
    k.clamp(0.0, f64::from(BINS - 1)) as u8
}

fn unbin(k: u8) -> f64 {
    (f64::from(k) + 0.5) / f64::from(BINS)
}

/// Quantizes using the sketch's own normalization.
pub fn quantize(sketch: &SketchGraph) -> Result<QuantizedSketch, SketchError> {
    let norm = Normalization::of(sketch)?;
    Ok(quantize_with(sketch, norm))
}

/// Quantizes using a given normalization (e.g. another sketch's).
/// Values outside the normalized range clamp to the edge bins.
pub fn quantize_with(sketch: &SketchGraph, norm: Normalization) -> QuantizedSketch {
    let pos = |p: Vec2| {
        let u = norm.to_unit(p);
        [bin(u.x), bin(u.y)]
    };
    let len = |r: f64| bin(r / norm.side);
    let ang = |t: f64| bin(t / TAU);
    let primitives = sketch
        .primitives()
        .iter()
        .map(|(id, p)| {
            let (tokens, reversed) = match *p {
                Primitive::Line { start, end } => ([pos(start), pos(end)].concat(), false),
                Primitive::Circle { center, radius } => ([&pos(center)[..], &[len(radius)]].concat(), false),
                Primitive::Arc(a) => {
                    let c = a.to_ccw();
                    (
                        [&pos(c.center)[..], &[len(c.radius), ang(c.start_angle), ang(c.end_angle)]].concat(),
                        a.clockwise,
                    )
                }
                Primitive::Point { pos: q } => (pos(q).to_vec(), false),
            };
            QuantizedPrimitive { id: *id, kind: p.kind(), tokens, reversed }
        })
        .collect();
    QuantizedSketch {
        bins_per_axis: BINS,
        normalization: norm,
        primitives,
        constraints: sketch.constraints().to_vec(),
    }
}

/// Maps bin centers back through the stored normalization.
pub fn dequantize(q: &QuantizedSketch) -> Result<SketchGraph, SketchError> {
    let norm = q.normalization;
    let pos = |x: u8, y: u8| norm.from_unit(Vec2::new(unbin(x), unbin(y)));
    let mut sketch = SketchGraph::new();
    for qp in &q.primitives {
        let t = &qp.tokens;
        let expected = QuantizedPrimitive::scales(qp.kind).len();
        if t.len() != expected || t.iter().any(|&k| u32::from(k) >= BINS) {
            return Err(SketchError::MalformedRecord(format!("bad token vector for primitive {}", qp.id)));
        }
        let p = match qp.kind {
            PrimitiveKind::Line => Primitive::Line { start: pos(t[0], t[1]), end: pos(t[2], t[3]) },
            PrimitiveKind::Circle => Primitive::Circle { center: pos(t[0], t[1]), radius: unbin(t[2]) * norm.side },
            PrimitiveKind::Arc => {
                if t[3] == t[4] {
                    return Err(SketchError::DegeneratePrimitive(format!(
                        "arc {} quantizes to a zero span",
                        qp.id
                    )));
                }
                let ccw = Arc {
                    center: pos(t[0], t[1]),
                    radius: unbin(t[2]) * norm.side,
                    start_angle: unbin(t[3]) * TAU,
                    end_angle: unbin(t[4]) * TAU,
                    clockwise: false,
                };
                Primitive::Arc(if qp.reversed {
                    Arc { start_angle: ccw.end_angle, end_angle: ccw.start_angle, clockwise: true, ..ccw }
                } else {
                    ccw
                })
            }
            PrimitiveKind::Point => Primitive::Point { pos: pos(t[0], t[1]) },
        };
        sketch.insert_with_id(qp.id, p)?;
    }
    for c in &q.constraints {
        sketch.add_constraint(*c)?;
    }
    Ok(sketch)
}
