//! Alternative parameterizations of primitives.
//!
//! * point-based: line `(x_s, y_s, x_e, y_e)`, arc `(x_s, y_s, x_m, y_m, x_e, y_e)`
//! * implicit: line `(x_p, y_p, v_x, v_y, d_s, d_e)` anchored at the segment
//!   midpoint, arc `(x_c, y_c, r, v_x, v_y, b_wc, theta_s, theta_e)` with `v`
//!   pointing from the center to the start point and both angles measured
//!   counter-clockwise from `v`
//! * overparameterized: the union of both
//!
//! Circles and points are identical under every strategy.

use serde::{Deserialize, Serialize};

use crate::geom::{normalize_angle, Vec2};
use crate::sketch::{Arc, Primitive, PrimitiveKind, SketchError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Implicit,
    PointBased,
    Overparameterized,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Implicit => "implicit",
            Strategy::PointBased => "point_based",
            Strategy::Overparameterized => "overparameterized",
        }
    }

    pub fn from_name(s: &str) -> Option<Strategy> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "implicit" => Some(Strategy::Implicit),
            "point_based" | "pointbased" | "point" => Some(Strategy::PointBased),
            "overparameterized" | "overparam" | "over" => Some(Strategy::Overparameterized),
            _ => None,
        }
    }

    /// Field names emitted for `kind`, in output order.
    pub fn fields(self, kind: PrimitiveKind) -> &'static [&'static str] {
        use PrimitiveKind as K;
        match (self, kind) {
            (_, K::Circle) => &["x_c", "y_c", "r"],
            (_, K::Point) => &["x_p", "y_p"],
            (Strategy::PointBased, K::Line) => &["x_s", "y_s", "x_e", "y_e"],
            (Strategy::PointBased, K::Arc) => &["x_s", "y_s", "x_m", "y_m", "x_e", "y_e"],
            (Strategy::Implicit, K::Line) => &["x_p", "y_p", "v_x", "v_y", "d_s", "d_e"],
            (Strategy::Implicit, K::Arc) => &["x_c", "y_c", "r", "v_x", "v_y", "b_wc", "theta_s", "theta_e"],
            (Strategy::Overparameterized, K::Line) => {
                &["x_s", "y_s", "x_e", "y_e", "x_p", "y_p", "v_x", "v_y", "d_s", "d_e"]
            }
            (Strategy::Overparameterized, K::Arc) => &[
                "x_c", "y_c", "r", "v_x", "v_y", "x_s", "y_s", "x_m", "y_m", "x_e", "y_e", "b_wc", "theta_s",
                "theta_e",
            ],
        }
    }
}

/// Implicit parameter record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ImplicitRecord {
    Line { x_p: f64, y_p: f64, v_x: f64, v_y: f64, d_s: f64, d_e: f64 },
    Arc { x_c: f64, y_c: f64, r: f64, v_x: f64, v_y: f64, b_wc: bool, theta_s: f64, theta_e: f64 },
    Circle { x_c: f64, y_c: f64, r: f64 },
    Point { x_p: f64, y_p: f64 },
}

pub fn to_implicit(p: &Primitive) -> Result<ImplicitRecord, SketchError> {
    Ok(match *p {
        Primitive::Line { start, end } => {
            let len = start.distance(end);
            let v = (end - start)
                .normalized()
                .filter(|_| len > 0.0)
                .ok_or_else(|| SketchError::DegeneratePrimitive("zero-length line has no direction".into()))?;
            let mid = start.lerp(end, 0.5);
            ImplicitRecord::Line { x_p: mid.x, y_p: mid.y, v_x: v.x, v_y: v.y, d_s: -len / 2.0, d_e: len / 2.0 }
        }
        Primitive::Arc(a) => {
            let v = Vec2::from_angle(a.start_angle);
            ImplicitRecord::Arc {
                x_c: a.center.x,
                y_c: a.center.y,
                r: a.radius,
                v_x: v.x,
                v_y: v.y,
                b_wc: a.clockwise,
                theta_s: 0.0,
                theta_e: normalize_angle(a.end_angle - a.start_angle),
            }
        }
        Primitive::Circle { center, radius } => ImplicitRecord::Circle { x_c: center.x, y_c: center.y, r: radius },
        Primitive::Point { pos } => ImplicitRecord::Point { x_p: pos.x, y_p: pos.y },
    })
}

pub fn from_implicit(rec: &ImplicitRecord) -> Result<Primitive, SketchError> {
    let unit = |vx: f64, vy: f64| {
        Vec2::new(vx, vy)
            .normalized()
            .ok_or_else(|| SketchError::MalformedRecord("direction vector must be nonzero".into()))
    };
    let p = match *rec {
        ImplicitRecord::Line { x_p, y_p, v_x, v_y, d_s, d_e } => {
            let v = unit(v_x, v_y)?;
            let base = Vec2::new(x_p, y_p);
            Primitive::Line { start: base + v * d_s, end: base + v * d_e }
        }
        ImplicitRecord::Arc { x_c, y_c, r, v_x, v_y, b_wc, theta_s, theta_e } => {
            let reference = unit(v_x, v_y)?.angle();
            Primitive::Arc(Arc {
                center: Vec2::new(x_c, y_c),
                radius: r,
                start_angle: normalize_angle(reference + theta_s),
                end_angle: normalize_angle(reference + theta_e),
                clockwise: b_wc,
            })
        }
        ImplicitRecord::Circle { x_c, y_c, r } => Primitive::circle(x_c, y_c, r),
        ImplicitRecord::Point { x_p, y_p } => Primitive::point(x_p, y_p),
    };
    p.validated().map_err(|e| SketchError::MalformedRecord(e.to_string()))
}

/// Point-based parameter record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PointRecord {
    Line { x_s: f64, y_s: f64, x_e: f64, y_e: f64 },
    Arc { x_s: f64, y_s: f64, x_m: f64, y_m: f64, x_e: f64, y_e: f64 },
    Circle { x_c: f64, y_c: f64, r: f64 },
    Point { x_p: f64, y_p: f64 },
}

pub fn to_point_based(p: &Primitive) -> PointRecord {
    match *p {
        Primitive::Line { start, end } => PointRecord::Line { x_s: start.x, y_s: start.y, x_e: end.x, y_e: end.y },
        Primitive::Arc(a) => {
            let (s, m, e) = (a.start(), a.mid(), a.end());
            PointRecord::Arc { x_s: s.x, y_s: s.y, x_m: m.x, y_m: m.y, x_e: e.x, y_e: e.y }
        }
        Primitive::Circle { center, radius } => PointRecord::Circle { x_c: center.x, y_c: center.y, r: radius },
        Primitive::Point { pos } => PointRecord::Point { x_p: pos.x, y_p: pos.y },
    }
}

pub fn from_point_based(rec: &PointRecord) -> Result<Primitive, SketchError> {
    let p = match *rec {
        PointRecord::Line { x_s, y_s, x_e, y_e } => Primitive::line(x_s, y_s, x_e, y_e),
        PointRecord::Arc { x_s, y_s, x_m, y_m, x_e, y_e } => Primitive::Arc(Arc::through_points(
            Vec2::new(x_s, y_s),
            Vec2::new(x_m, y_m),
            Vec2::new(x_e, y_e),
        )?),
        PointRecord::Circle { x_c, y_c, r } => Primitive::circle(x_c, y_c, r),
        PointRecord::Point { x_p, y_p } => Primitive::point(x_p, y_p),
    };
    p.validated()
}

/// Union of the implicit and point-based parameters. Read-only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum OverparamView {
    Line {
        x_s: f64,
        y_s: f64,
        x_e: f64,
        y_e: f64,
        x_p: f64,
        y_p: f64,
        v_x: f64,
        v_y: f64,
        d_s: f64,
        d_e: f64,
    },
    Arc {
        x_c: f64,
        y_c: f64,
        r: f64,
        v_x: f64,
        v_y: f64,
        x_s: f64,
        y_s: f64,
        x_m: f64,
        y_m: f64,
        x_e: f64,
        y_e: f64,
        b_wc: bool,
        theta_s: f64,
        theta_e: f64,
    },
    Circle { x_c: f64, y_c: f64, r: f64 },
    Point { x_p: f64, y_p: f64 },
}

pub fn overparameterize(p: &Primitive) -> Result<OverparamView, SketchError> {
    let implicit = to_implicit(p)?;
    Ok(match (to_point_based(p), implicit) {
        (
            PointRecord::Line { x_s, y_s, x_e, y_e },
            ImplicitRecord::Line { x_p, y_p, v_x, v_y, d_s, d_e },
        ) => OverparamView::Line { x_s, y_s, x_e, y_e, x_p, y_p, v_x, v_y, d_s, d_e },
        (
            PointRecord::Arc { x_s, y_s, x_m, y_m, x_e, y_e },
            ImplicitRecord::Arc { x_c, y_c, r, v_x, v_y, b_wc, theta_s, theta_e },
        ) => OverparamView::Arc { x_c, y_c, r, v_x, v_y, x_s, y_s, x_m, y_m, x_e, y_e, b_wc, theta_s, theta_e },
        (_, ImplicitRecord::Circle { x_c, y_c, r }) => OverparamView::Circle { x_c, y_c, r },
        (_, ImplicitRecord::Point { x_p, y_p }) => OverparamView::Point { x_p, y_p },
        _ => unreachable!("point-based and implicit records disagree on kind"),
    })
}

impl OverparamView {
    /// Canonical primitive, taken from the point-based fields for lines and
    /// the center/angle fields for arcs.
    pub fn to_primitive(&self) -> Result<Primitive, SketchError> {
        match *self {
            OverparamView::Line { x_s, y_s, x_e, y_e, .. } => {
                from_point_based(&PointRecord::Line { x_s, y_s, x_e, y_e })
            }
            OverparamView::Arc { x_c, y_c, r, v_x, v_y, b_wc, theta_s, theta_e, .. } => {
                from_implicit(&ImplicitRecord::Arc { x_c, y_c, r, v_x, v_y, b_wc, theta_s, theta_e })
            }
            OverparamView::Circle { x_c, y_c, r } => Ok(Primitive::circle(x_c, y_c, r)),
            OverparamView::Point { x_p, y_p } => Ok(Primitive::point(x_p, y_p)),
        }
    }

    pub fn to_point_based(&self) -> PointRecord {
        match *self {
            OverparamView::Line { x_s, y_s, x_e, y_e, .. } => PointRecord::Line { x_s, y_s, x_e, y_e },
            OverparamView::Arc { x_s, y_s, x_m, y_m, x_e, y_e, .. } => {
                PointRecord::Arc { x_s, y_s, x_m, y_m, x_e, y_e }
            }
            OverparamView::Circle { x_c, y_c, r } => PointRecord::Circle { x_c, y_c, r },
            OverparamView::Point { x_p, y_p } => PointRecord::Point { x_p, y_p },
        }
    }
}

/// Named numeric fields of `p` under `strategy`, in [`Strategy::fields`]
/// order. Boolean flags are encoded as 0/1.
pub fn encode_fields(p: &Primitive, strategy: Strategy) -> Result<Vec<(&'static str, f64)>, SketchError> {
    let names = strategy.fields(p.kind());
    let value = |name: &str| -> f64 {
        // looked up from whichever records carry the field
        lookup_field(p, name).expect("field list and records agree")
    };
    if strategy != Strategy::PointBased {
        // surfaces the degenerate-line error
        to_implicit(p)?;
    }
    Ok(names.iter().map(|&n| (n, value(n))).collect())
}

fn lookup_field(p: &Primitive, name: &str) -> Option<f64> {
    let point = to_point_based(p);
    let implicit = to_implicit(p).ok();
    let from_point = match point {
        PointRecord::Line { x_s, y_s, x_e, y_e } => match name {
            "x_s" => Some(x_s),
            "y_s" => Some(y_s),
            "x_e" => Some(x_e),
            "y_e" => Some(y_e),
            _ => None,
        },
        PointRecord::Arc { x_s, y_s, x_m, y_m, x_e, y_e } => match name {
            "x_s" => Some(x_s),
            "y_s" => Some(y_s),
            "x_m" => Some(x_m),
            "y_m" => Some(y_m),
            "x_e" => Some(x_e),
            "y_e" => Some(y_e),
            _ => None,
        },
        PointRecord::Circle { x_c, y_c, r } => match name {
            "x_c" => Some(x_c),
            "y_c" => Some(y_c),
            "r" => Some(r),
            _ => None,
        },
        PointRecord::Point { x_p, y_p } => match name {
            "x_p" => Some(x_p),
            "y_p" => Some(y_p),
            _ => None,
        },
    };
    from_point.or_else(|| match implicit? {
        ImplicitRecord::Line { x_p, y_p, v_x, v_y, d_s, d_e } => match name {
            "x_p" => Some(x_p),
            "y_p" => Some(y_p),
            "v_x" => Some(v_x),
            "v_y" => Some(v_y),
            "d_s" => Some(d_s),
            "d_e" => Some(d_e),
            _ => None,
        },
        ImplicitRecord::Arc { x_c, y_c, r, v_x, v_y, b_wc, theta_s, theta_e } => match name {
            "x_c" => Some(x_c),
            "y_c" => Some(y_c),
            "r" => Some(r),
            "v_x" => Some(v_x),
            "v_y" => Some(v_y),
            "b_wc" => Some(if b_wc { 1.0 } else { 0.0 }),
            "theta_s" => Some(theta_s),
            "theta_e" => Some(theta_e),
            _ => None,
        },
        _ => None,
    })
}

/// Rebuilds a primitive from named fields written under `strategy`.
pub fn decode_fields(
    kind: PrimitiveKind,
    strategy: Strategy,
    get: impl Fn(&str) -> Option<f64>,
) -> Result<Primitive, SketchError> {
    let need = |name: &str| get(name).ok_or_else(|| SketchError::MalformedRecord(format!("missing field `{name}`")));
    match (kind, strategy) {
        (PrimitiveKind::Circle, _) => Primitive::circle(need("x_c")?, need("y_c")?, need("r")?).validated(),
        (PrimitiveKind::Point, _) => Primitive::point(need("x_p")?, need("y_p")?).validated(),
        (PrimitiveKind::Line, Strategy::Implicit) => from_implicit(&ImplicitRecord::Line {
            x_p: need("x_p")?,
            y_p: need("y_p")?,
            v_x: need("v_x")?,
            v_y: need("v_y")?,
            d_s: need("d_s")?,
            d_e: need("d_e")?,
        }),
        (PrimitiveKind::Line, _) => {
            Primitive::line(need("x_s")?, need("y_s")?, need("x_e")?, need("y_e")?).validated()
        }
        (PrimitiveKind::Arc, Strategy::PointBased) => from_point_based(&PointRecord::Arc {
            x_s: need("x_s")?,
            y_s: need("y_s")?,
            x_m: need("x_m")?,
            y_m: need("y_m")?,
            x_e: need("x_e")?,
            y_e: need("y_e")?,
        }),
        (PrimitiveKind::Arc, _) => from_implicit(&ImplicitRecord::Arc {
            x_c: need("x_c")?,
            y_c: need("y_c")?,
            r: need("r")?,
            v_x: need("v_x")?,
            v_y: need("v_y")?,
            b_wc: need("b_wc")? != 0.0,
            theta_s: need("theta_s")?,
            theta_e: need("theta_e")?,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn line_to_implicit_uses_midpoint() {
        let rec = to_implicit(&Primitive::line(0.0, 0.0, 2.0, 0.0)).unwrap();
        assert_eq!(rec, ImplicitRecord::Line { x_p: 1.0, y_p: 0.0, v_x: 1.0, v_y: 0.0, d_s: -1.0, d_e: 1.0 });
    }

    #[test]
    fn implicit_to_line() {
        let p = from_implicit(&ImplicitRecord::Line { x_p: 1.0, y_p: 0.0, v_x: 1.0, v_y: 0.0, d_s: -1.0, d_e: 1.0 })
            .unwrap();
        assert_eq!(p, Primitive::line(0.0, 0.0, 2.0, 0.0));
    }

    #[test]
    fn circle_is_unchanged() {
        assert_eq!(
            to_implicit(&Primitive::circle(3.0, 4.0, 2.0)).unwrap(),
            ImplicitRecord::Circle { x_c: 3.0, y_c: 4.0, r: 2.0 }
        );
    }

    #[test]
    fn degenerate_and_malformed() {
        assert!(matches!(
            to_implicit(&Primitive::line(5.0, 5.0, 5.0, 5.0)),
            Err(SketchError::DegeneratePrimitive(_))
        ));
        assert!(matches!(
            from_implicit(&ImplicitRecord::Line { x_p: 0.0, y_p: 0.0, v_x: 0.0, v_y: 0.0, d_s: -1.0, d_e: 1.0 }),
            Err(SketchError::MalformedRecord(_))
        ));
    }

    #[test]
    fn overparam_line_view() {
        match overparameterize(&Primitive::line(0.0, 0.0, 2.0, 0.0)).unwrap() {
            OverparamView::Line { x_s, x_e, x_p, v_x, d_s, d_e, .. } => {
                assert_eq!((x_s, x_e, x_p, v_x, d_s, d_e), (0.0, 2.0, 1.0, 1.0, -1.0, 1.0));
            }
            v => panic!("unexpected view {v:?}"),
        }
    }

    #[test]
    fn overparam_arc_view() {
        match overparameterize(&Primitive::arc(0.0, 0.0, 1.0, 0.0, PI, false)).unwrap() {
            OverparamView::Arc { x_s, y_s, x_m, y_m, x_e, y_e, .. } => {
                let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
                assert!(close(x_s, 1.0) && close(y_s, 0.0));
                assert!(close(x_m, 0.0) && close(y_m, 1.0));
                assert!(close(x_e, -1.0) && close(y_e, 0.0));
            }
            v => panic!("unexpected view {v:?}"),
        }
    }

    #[test]
    fn overparam_point_view() {
        assert_eq!(
            overparameterize(&Primitive::point(2.0, 3.0)).unwrap(),
            OverparamView::Point { x_p: 2.0, y_p: 3.0 }
        );
    }

    #[test]
    fn fields_round_trip_every_strategy() {
        let prims = [
            Primitive::line(0.5, -1.0, 3.0, 2.0),
            Primitive::arc(1.0, 1.0, 2.0, 5.5, 1.0, true),
            Primitive::circle(1.0, 2.0, 0.5),
            Primitive::point(-4.0, 4.0),
        ];
        for strategy in [Strategy::Implicit, Strategy::PointBased, Strategy::Overparameterized] {
            for p in &prims {
                let fields = encode_fields(p, strategy).unwrap();
                let back = decode_fields(p.kind(), strategy, |n| {
                    fields.iter().find(|(k, _)| *k == n).map(|(_, v)| *v)
                })
                .unwrap();
                let (a, b) = (to_point_based(p), to_point_based(&back));
                assert!(format!("{a:?}").len() > 0);
                let av = serde_json::to_value(a).unwrap();
                let bv = serde_json::to_value(b).unwrap();
                for (k, x) in av.as_object().unwrap() {
                    if let Some(x) = x.as_f64() {
                        let y = bv[k].as_f64().unwrap();
                        assert!((x - y).abs() < 1e-9, "{strategy:?} {k}: {x} vs {y}");
                    }
                }
            }
        }
    }
}
