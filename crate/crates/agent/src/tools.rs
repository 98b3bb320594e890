//! The standard tool set: sketch editing, solving, recognition renders,
//! the constraint checker, extrusion, cross-sections and the hand-drawn
//! image parameterizer.

use cadkit_core::params::Strategy;
use cadkit_core::render::{display_image, encode_png, render_sketch, render_solid_views};
use cadkit_core::serialize::{format_number, serialize, Format, SerializationConfig};
use cadkit_core::solid::{
    cross_section_mesh, cross_section_solid, extrude, section_image, BooleanOp, ExtrusionOp, SectionPlane,
    SectionPolygon, SolidError,
};
use cadkit_core::solver::{check_constraint, solve};
use cadkit_core::{Arc, Constraint, ConstraintKind, Primitive, PrimitiveId, Ref, SketchGraph, SubRef, Vec3};
use serde_json::{json, Value};

use crate::registry::{Args, CallEnv, NewArtifact, Param, Registry, ToolError, ToolOutput, ToolSpec};
use crate::state::{AttachmentData, Workspace};

/// Largest section, in vertices, whose coordinates are listed in the text
/// feedback. Bigger sections are summarized.
const SECTION_LISTING_LIMIT: usize = 64;

fn num(v: f64) -> Value {
    let text = format_number(v, 6);
    serde_json::from_str(&text).unwrap_or(Value::Null)
}

fn sketch_error(e: impl std::fmt::Display) -> ToolError {
    ToolError::new("SketchError", e.to_string())
}

fn spec(name: &str, params: Vec<Param>, returns: &str, docstring: &str) -> ToolSpec {
    ToolSpec { name: name.into(), params, returns: returns.into(), docstring: docstring.trim().into() }
}

fn constraint_from_args(args: &Args) -> Result<Constraint, ToolError> {
    let name = args.str("kind")?;
    let kind = ConstraintKind::from_name(name)
        .ok_or_else(|| ToolError::bad_argument(format!("unknown constraint kind `{name}`")))?;
    let a = args.reference("a")?;
    match args.reference_opt("b")? {
        Some(b) => Ok(Constraint::new(kind, a, b)),
        None if kind.is_unary() => Ok(Constraint::new(kind, a, a)),
        None => Err(ToolError::new("MissingArgument", format!("{name} needs a second reference `b`"))),
    }
}

fn add_geometry(ws: &mut Workspace, args: &Args, _: &CallEnv) -> Result<ToolOutput, ToolError> {
    let kind = args.str("kind")?;
    let p = match kind {
        "line" => {
            let (s, e) = (args.point("start")?, args.point("end")?);
            Primitive::line(s.x, s.y, e.x, e.y)
        }
        "circle" => {
            let c = args.point("center")?;
            Primitive::circle(c.x, c.y, args.f64("radius")?)
        }
        "arc" if args.has("mid") => {
            let arc = Arc::through_points(args.point("start")?, args.point("mid")?, args.point("end")?)
                .map_err(sketch_error)?;
            Primitive::Arc(arc)
        }
        "arc" => {
            let c = args.point("center")?;
            Primitive::arc(
                c.x,
                c.y,
                args.f64("radius")?,
                args.f64("start_angle")?.rem_euclid(std::f64::consts::TAU),
                args.f64("end_angle")?.rem_euclid(std::f64::consts::TAU),
                args.bool_or("clockwise", false)?,
            )
        }
        "point" => {
            let p = args.point("point")?;
            Primitive::point(p.x, p.y)
        }
        other => return Err(ToolError::bad_argument(format!("unknown geometry kind `{other}`"))),
    };
    let id = ws.sketch.add_primitive(p).map_err(sketch_error)?;
    Ok(ToolOutput::new(json!(id.0), format!("added {kind} {id}")))
}

fn add_constraint(ws: &mut Workspace, args: &Args, _: &CallEnv) -> Result<ToolOutput, ToolError> {
    let c = constraint_from_args(args)?;
    let index = ws.sketch.add_constraint(c).map_err(sketch_error)?;
    Ok(ToolOutput::new(json!(index), format!("constraint {index}: {c}")))
}

fn del_geometries(ws: &mut Workspace, args: &Args, _: &CallEnv) -> Result<ToolOutput, ToolError> {
    let ids: Vec<PrimitiveId> = args.ids("ids")?.into_iter().map(PrimitiveId).collect();
    let before = ws.sketch.constraints().len();
    let removed = ws.sketch.del_geometries(&ids);
    let dropped = before - ws.sketch.constraints().len();
    Ok(ToolOutput::new(
        json!(removed),
        format!("removed {removed} geometries and {dropped} constraints"),
    ))
}

fn recompute(ws: &mut Workspace, _: &Args, _: &CallEnv) -> Result<ToolOutput, ToolError> {
    if ws.sketch.is_empty() {
        return Ok(ToolOutput::new(json!({"converged": true}), "sketch is empty; nothing to solve"));
    }
    let r = solve(&ws.sketch).map_err(sketch_error)?;
    if !r.converged {
        return Err(ToolError::new(
            "SolveFailed",
            format!(
                "constraints could not be satisfied (residual {} after {} iterations); the sketch is unchanged",
                format_number(r.residual_norm, 9),
                r.iterations
            ),
        ));
    }
    if !r.degenerate.is_empty() {
        let ids: Vec<String> = r.degenerate.iter().map(ToString::to_string).collect();
        return Err(ToolError::new(
            "Degenerate",
            format!("solving collapses primitive(s) {}; the sketch is unchanged", ids.join(", ")),
        ));
    }
    ws.sketch = r.solved;
    let value = json!({
        "converged": true,
        "residual": num(r.residual_norm),
        "max_displacement": num(r.max_displacement),
        "iterations": r.iterations,
    });
    Ok(ToolOutput::new(
        value,
        format!("solved; max displacement {}", format_number(r.max_displacement, 6)),
    ))
}

fn sketch_recognizer(ws: &mut Workspace, args: &Args, env: &CallEnv) -> Result<ToolOutput, ToolError> {
    let cfg = SerializationConfig { format: Format::Json, strategy: Strategy::Overparameterized, float_precision: 6 };
    let text = serialize(&ws.sketch, &cfg).map_err(sketch_error)?;
    let value = serde_json::from_str(&text).unwrap_or(Value::Null);
    let mut out = ToolOutput::new(value, text);
    if ws.sketch.is_empty() {
        out.text.push_str("\n(sketch is empty; no image)");
        return Ok(out);
    }
    let size = args.u32_or("size", 512)?;
    let render = render_sketch(&ws.sketch, size, size, args.bool_or("marks", true)?)
        .map_err(|e| ToolError::new("RenderError", e.to_string()))?;
    let png = encode_png(&display_image(&render)).map_err(|e| ToolError::new("RenderError", e.to_string()))?;
    out.artifacts.push(NewArtifact::png("", png));
    out.text.push_str(&format!("\n[image {}]", env.artifact_name("sketch_recognizer", "")));
    Ok(out)
}

fn solid_recognizer(ws: &mut Workspace, args: &Args, env: &CallEnv) -> Result<ToolOutput, ToolError> {
    if ws.solid.is_empty() {
        return Ok(ToolOutput::new(json!({"steps": []}), "solid is empty"));
    }
    let steps: Vec<Value> = ws
        .solid
        .steps()
        .iter()
        .map(|s| {
            let o = &s.op;
            json!({
                "op": o.beta,
                "primitives": s.sketch.len(),
                "theta": num(o.theta), "phi": num(o.phi), "gamma": num(o.gamma),
                "origin": [num(o.tau_x), num(o.tau_y), num(o.tau_z)],
                "scale": num(o.sigma),
                "d_minus": num(o.d_minus), "d_plus": num(o.d_plus),
            })
        })
        .collect();
    let corners = ws.solid.corners();
    let fold = |f: fn(f64, f64) -> f64, init: f64| {
        corners.iter().fold(Vec3::new(init, init, init), |a, c| Vec3::new(f(a.x, c.x), f(a.y, c.y), f(a.z, c.z)))
    };
    let (lo, hi) = (fold(f64::min, f64::INFINITY), fold(f64::max, f64::NEG_INFINITY));
    let value = json!({
        "steps": steps,
        "bounds": {"min": [num(lo.x), num(lo.y), num(lo.z)], "max": [num(hi.x), num(hi.y), num(hi.z)]},
    });
    let mut out = ToolOutput::new(value.clone(), serde_json::to_string_pretty(&value).unwrap_or_default());
    let size = args.u32_or("size", 256)?;
    let views = render_solid_views(&ws.solid, size, size).map_err(|e| ToolError::new("RenderError", e.to_string()))?;
    for (view, img) in views {
        let png = img.to_png().map_err(|e| ToolError::new("RenderError", e.to_string()))?;
        out.text.push_str(&format!("\n[image {}]", env.artifact_name("solid_recognizer", view.name())));
        out.artifacts.push(NewArtifact::png(view.name(), png));
    }
    Ok(out)
}

fn constraint_checker(ws: &mut Workspace, args: &Args, _: &CallEnv) -> Result<ToolOutput, ToolError> {
    let c = constraint_from_args(args)?;
    let r = check_constraint(&ws.sketch, &c).map_err(sketch_error)?;
    let value = json!({
        "constraint": c.to_string(),
        "valid": r.valid,
        "causes_movement": r.causes_movement,
        "degenerate": r.degenerate,
        "residual_before": num(r.residual_before),
        "max_displacement": num(r.max_displacement),
    });
    Ok(ToolOutput::new(value.clone(), value.to_string()))
}

fn extrude_tool(ws: &mut Workspace, args: &Args, _: &CallEnv) -> Result<ToolOutput, ToolError> {
    let name = args.str_opt("op")?.unwrap_or("new");
    let beta = BooleanOp::from_name(name).ok_or_else(|| ToolError::bad_argument(format!("unknown operation `{name}`")))?;
    let origin = args.vec3_or("origin", Vec3::default())?;
    let op = ExtrusionOp {
        theta: args.f64_or("theta", 0.0)?,
        phi: args.f64_or("phi", 0.0)?,
        gamma: args.f64_or("gamma", 0.0)?,
        tau_x: origin.x,
        tau_y: origin.y,
        tau_z: origin.z,
        sigma: args.f64_or("scale", 1.0)?,
        d_minus: args.f64_or("d_minus", 0.0)?,
        d_plus: args.f64("d_plus")?,
        beta,
    };
    let n = ws.sketch.len();
    ws.solid = extrude(&ws.solid, ws.sketch.clone(), op).map_err(|e| ToolError::new("SolidError", e.to_string()))?;
    ws.sketch = SketchGraph::new();
    let steps = ws.solid.steps().len();
    Ok(ToolOutput::new(
        json!({"steps": steps}),
        format!("extruded {n} primitives as step {} ({name}); a new empty sketch is active", steps - 1),
    ))
}

fn cross_section(ws: &mut Workspace, args: &Args, env: &CallEnv) -> Result<ToolOutput, ToolError> {
    let origin = args.vec3_or("origin", Vec3::default())?;
    let normal = args.vec3_or("normal", Vec3::new(0.0, 0.0, 1.0))?;
    let plane = SectionPlane::new(origin, normal);
    let source = args.str_opt("source")?.unwrap_or("auto");
    let first_mesh = || {
        env.query.attachments.iter().find_map(|a| match &a.data {
            AttachmentData::Mesh(m) => Some(m),
            _ => None,
        })
    };
    let solid_err = |e: SolidError| ToolError::new("SolidError", e.to_string());
    let mut notes = String::new();
    let section: SectionPolygon = match source {
        "solid" => cross_section_solid(&ws.solid, &plane).map_err(solid_err)?,
        "auto" if !ws.solid.is_empty() => cross_section_solid(&ws.solid, &plane).map_err(solid_err)?,
        _ => {
            let mesh = if source == "auto" {
                first_mesh().ok_or_else(|| ToolError::new("NoSource", "no solid and no mesh attachment to section"))?
            } else {
                match env.query.attachment(source).map(|a| &a.data) {
                    Some(AttachmentData::Mesh(m)) => m,
                    _ => return Err(ToolError::new("NoSource", format!("no mesh attachment named `{source}`"))),
                }
            };
            match cross_section_mesh(mesh, &plane) {
                Ok(s) => s,
                Err(SolidError::UnclosableLoops { open_chains, partial }) => {
                    notes = format!("\n{open_chains} open chain(s) could not be closed; closed loops only");
                    partial
                }
                Err(e) => return Err(solid_err(e)),
            }
        }
    };
    let loops: Vec<Value> = section
        .loops
        .iter()
        .map(|lp| Value::Array(lp.iter().map(|p| json!([num(p.x), num(p.y)])).collect()))
        .collect();
    let total: usize = section.loops.iter().map(Vec::len).sum();
    let b = section.bounds();
    let mut summary = json!({
        "loops": section.loops.len(),
        "vertices": section.loops.iter().map(Vec::len).collect::<Vec<_>>(),
        "area": num(section.area()),
        "perimeter": num(section.perimeter()),
    });
    if !section.is_empty() {
        summary["bounds"] = json!({"min": [num(b.min.x), num(b.min.y)], "max": [num(b.max.x), num(b.max.y)]});
    }
    if total <= SECTION_LISTING_LIMIT {
        summary["points"] = Value::Array(loops.clone());
    }
    let mut text = summary.to_string() + &notes;
    let value = json!({"loops": loops, "area": num(section.area()), "perimeter": num(section.perimeter())});
    if args.bool_or("load", false)? {
        let added = load_loops(&mut ws.sketch, &section)?;
        text.push_str(&format!("\nloaded {added} lines into the sketch"));
    }
    let mut out = ToolOutput::new(value, text);
    if !section.is_empty() {
        let size = args.u32_or("size", 256)?;
        let png = section_image(&section, size, size).to_png().map_err(|e| ToolError::new("RenderError", e.to_string()))?;
        out.text.push_str(&format!("\n[image {}]", env.artifact_name("cross_section", "")));
        out.artifacts.push(NewArtifact::png("", png));
    }
    Ok(out)
}

/// Adds each loop edge as a line, chained by coincident constraints.
fn load_loops(sketch: &mut SketchGraph, section: &SectionPolygon) -> Result<usize, ToolError> {
    let mut added = 0;
    for lp in &section.loops {
        let mut ids = Vec::with_capacity(lp.len());
        for (i, a) in lp.iter().enumerate() {
            let b = lp[(i + 1) % lp.len()];
            ids.push(sketch.add_primitive(Primitive::line(a.x, a.y, b.x, b.y)).map_err(sketch_error)?.0);
        }
        for i in 0..ids.len() {
            let next = ids[(i + 1) % ids.len()];
            let c = Constraint::new(ConstraintKind::Coincident, Ref::new(ids[i], SubRef::End), Ref::new(next, SubRef::Start));
            sketch.add_constraint(c).map_err(sketch_error)?;
        }
        added += ids.len();
    }
    Ok(added)
}

fn handdrawn_parameterize(ws: &mut Workspace, args: &Args, env: &CallEnv) -> Result<ToolOutput, ToolError> {
    let wanted = args.str_opt("image")?;
    let found = env.query.attachments.iter().find(|a| {
        matches!(a.data, AttachmentData::Image { .. }) && wanted.map_or(true, |w| a.name == w)
    });
    let Some(att) = found else {
        let what = wanted.map_or_else(|| "no image attachment".to_string(), |w| format!("no image attachment named `{w}`"));
        return Err(ToolError::new("NoImage", what));
    };
    let AttachmentData::Image { parameterization, .. } = &att.data else { unreachable!() };
    let sketch = parameterization
        .as_ref()
        .ok_or_else(|| ToolError::new("NoParameterization", format!("no parameterization is available for {}", att.name)))?;
    let cfg = SerializationConfig { float_precision: 6, ..SerializationConfig::default() };
    let mut text = serialize(sketch, &cfg).map_err(sketch_error)?;
    let value = json!({"image": att.name, "primitives": sketch.len(), "constraints": sketch.constraints().len()});
    if args.bool_or("load", false)? {
        ws.sketch = sketch.clone();
        text.push_str("\nloaded as the active sketch");
    }
    Ok(ToolOutput::new(value, text))
}

const REF_HELP: &str = "References name a primitive id and a sub-reference: `3` (whole primitive), \"3.start\", \
\"3.end\", \"3.mid\" (arc midpoint or circle/arc center), or [3, \"end\"].";

/// Registry with the ten standard tools.
pub fn standard_registry() -> Registry {
    let mut r = Registry::new();
    let ok = "standard tool names are unique";
    r.register(
        spec(
            "addGeometry",
            vec![
                Param::required("kind", "\"line\" | \"circle\" | \"arc\" | \"point\""),
                Param::optional("start", "point", "None"),
                Param::optional("end", "point", "None"),
                Param::optional("mid", "point", "None"),
                Param::optional("center", "point", "None"),
                Param::optional("radius", "number", "None"),
                Param::optional("start_angle", "radians", "None"),
                Param::optional("end_angle", "radians", "None"),
                Param::optional("clockwise", "bool", "false"),
                Param::optional("point", "point", "None"),
            ],
            "id",
            r#"
Adds a primitive to the active sketch and returns its id. Points are [x, y].
- line: start, end
- circle: center, radius
- arc: center, radius, start_angle, end_angle (radians, counter-clockwise
  unless clockwise=true), or three points start, mid, end
- point: point
Geometry is not solved; call recompute() after adding constraints.
Example: $l = addGeometry(kind="line", start=[0, 0], end=[10, 0])
"#,
        ),
        add_geometry,
    )
    .expect(ok);
    r.register(
        spec(
            "addConstraint",
            vec![Param::required("kind", "constraint kind"), Param::required("a", "ref"), Param::optional("b", "ref", "None")],
            "index",
            &format!(
                r#"
Adds a constraint to the active sketch and returns its index. Kinds:
coincident, parallel, perpendicular, tangent, equal (two references) and
horizontal, vertical (one line). {REF_HELP}
Coincident takes point sub-references; the others take whole primitives.
The geometry moves only on recompute().
Example: addConstraint(kind="coincident", a="0.end", b="1.start")
"#
            ),
        ),
        add_constraint,
    )
    .expect(ok);
    r.register(
        spec(
            "delGeometries",
            vec![Param::required("ids", "list[id]")],
            "count",
            "Deletes primitives from the active sketch together with every constraint that\nreferences them. Unknown ids are ignored. Returns the number removed.\nExample: delGeometries(ids=[2, 5])",
        ),
        del_geometries,
    )
    .expect(ok);
    r.register(
        spec(
            "recompute",
            vec![],
            "solve report",
            "Solves the active sketch so every constraint holds, moving geometry as little\nas possible. Fails, leaving the sketch unchanged, when the constraints\ncannot be satisfied or would collapse a primitive.",
        ),
        recompute,
    )
    .expect(ok);
    r.register(
        spec(
            "sketch_recognizer",
            vec![Param::optional("marks", "bool", "true"), Param::optional("size", "pixels", "512")],
            "sketch json",
            "Describes the active sketch: a JSON listing of every primitive with all of\nits parameters (endpoints, midpoints, centers, radii, angles, directions)\nand every constraint, plus a rendered image with each primitive's id\nprinted next to it.",
        ),
        sketch_recognizer,
    )
    .expect(ok);
    r.register(
        spec(
            "solid_recognizer",
            vec![Param::optional("size", "pixels", "256")],
            "solid summary",
            "Describes the solid: its extrusion steps (operation, plane, distances) and\nbounding box, plus wireframe images from the front, right, top and an\nisometric view.",
        ),
        solid_recognizer,
    )
    .expect(ok);
    r.register(
        spec(
            "constraint_checker",
            vec![Param::required("kind", "constraint kind"), Param::required("a", "ref"), Param::optional("b", "ref", "None")],
            "report",
            &format!(
                "Tests a constraint without adding it. Reports `valid` (the sketch can be\nsolved with it), `causes_movement` (solving would move geometry noticeably)\nand `degenerate` (solving would collapse a primitive). Use it before\naddConstraint to keep only constraints that preserve the drawing.\n{REF_HELP}\nExample: constraint_checker(kind=\"parallel\", a=0, b=2)"
            ),
        ),
        constraint_checker,
    )
    .expect(ok);
    r.register(
        spec(
            "extrude",
            vec![
                Param::required("d_plus", "number"),
                Param::optional("d_minus", "number", "0"),
                Param::optional("op", "\"new\" | \"join\" | \"cut\" | \"intersect\"", "\"new\""),
                Param::optional("theta", "radians", "0"),
                Param::optional("phi", "radians", "0"),
                Param::optional("gamma", "radians", "0"),
                Param::optional("origin", "[x, y, z]", "[0, 0, 0]"),
                Param::optional("scale", "number", "1"),
            ],
            "step count",
            "Extrudes the active sketch's closed profile along its plane normal from\n-d_minus to d_plus and combines it with the solid: new (first body), join\n(union), cut (subtract) or intersect. The sketch plane is rotated by Euler\nangles (phi about z, theta about y, gamma about z), scaled by `scale` and\nmoved to `origin`. Afterwards a new empty sketch is active.\nExample: extrude(d_plus=5, op=\"cut\")",
        ),
        extrude_tool,
    )
    .expect(ok);
    r.register(
        spec(
            "cross_section",
            vec![
                Param::optional("origin", "[x, y, z]", "[0, 0, 0]"),
                Param::optional("normal", "[x, y, z]", "[0, 0, 1]"),
                Param::optional("source", "\"solid\" | attachment name", "auto"),
                Param::optional("load", "bool", "false"),
                Param::optional("size", "pixels", "256"),
            ],
            "section",
            "Cuts the solid, or an attached 3D mesh, with a plane and returns the\nsection's closed loops in plane coordinates (outer loops counter-clockwise,\nholes clockwise) with area and perimeter, plus an image of the section.\nload=true adds the loops to the active sketch as chained lines.",
        ),
        cross_section,
    )
    .expect(ok);
    r.register(
        spec(
            "handdrawn_parameterize",
            vec![Param::optional("image", "attachment name", "first image"), Param::optional("load", "bool", "false")],
            "summary",
            "Converts an attached hand-drawn sketch image into primitives and\nconstraints, returned as sketch JSON. load=true replaces the active sketch\nwith the result; check its constraints before relying on them.",
        ),
        handdrawn_parameterize,
    )
    .expect(ok);
    r
}
