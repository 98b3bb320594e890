//! Snapshot tests for the text outputs. Run with `UPDATE_GOLDEN=1` to
//! rewrite the files under `tests/golden/`.

use std::path::PathBuf;

use cadkit_core::render::render_sketch_svg;
use cadkit_core::serialize::{serialize, Format, SerializationConfig};
use cadkit_core::{Constraint, ConstraintKind, Primitive, Ref, SketchGraph, SubRef};

/// A slot: two horizontal lines joined by half-circle arcs, plus a hole.
fn slot() -> SketchGraph {
    use std::f64::consts::FRAC_PI_2;
    let mut s = SketchGraph::new();
    let top = s.add_primitive(Primitive::line(0.0, 1.0, 4.0, 1.0)).unwrap().0;
    let right = s.add_primitive(Primitive::arc(4.0, 0.0, 1.0, FRAC_PI_2, 3.0 * FRAC_PI_2, true)).unwrap().0;
    let bottom = s.add_primitive(Primitive::line(4.0, -1.0, 0.0, -1.0)).unwrap().0;
    let left = s.add_primitive(Primitive::arc(0.0, 0.0, 1.0, 3.0 * FRAC_PI_2, FRAC_PI_2, true)).unwrap().0;
    s.add_primitive(Primitive::circle(2.0, 0.0, 0.5)).unwrap().0;
    let joins = [(top, right), (right, bottom), (bottom, left), (left, top)];
    for (a, b) in joins {
        s.add_constraint(Constraint::new(ConstraintKind::Coincident, Ref::new(a, SubRef::End), Ref::new(b, SubRef::Start)))
            .unwrap();
        s.add_constraint(Constraint::new(ConstraintKind::Tangent, Ref::entire(a), Ref::entire(b))).unwrap();
    }
    s.add_constraint(Constraint::unary(ConstraintKind::Horizontal, top)).unwrap();
    s.add_constraint(Constraint::new(ConstraintKind::Parallel, Ref::entire(top), Ref::entire(bottom))).unwrap();
    s.add_constraint(Constraint::new(ConstraintKind::Equal, Ref::entire(right), Ref::entire(left))).unwrap();
    s
}

fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}; run with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(actual, expected, "{name} differs from the stored snapshot");
}

#[test]
fn markdown_tables() {
    let cfg = SerializationConfig { format: Format::Markdown, ..SerializationConfig::default() };
    check("slot.md", &serialize(&slot(), &cfg).unwrap());
}

#[test]
fn json_document() {
    check("slot.sketch.json", &serialize(&slot(), &SerializationConfig::default()).unwrap());
}

#[test]
fn svg_with_constraint_marks() {
    check("slot.svg", &render_sketch_svg(&slot(), true));
}

#[test]
fn svg_plain() {
    check("slot_plain.svg", &render_sketch_svg(&slot(), false));
}
