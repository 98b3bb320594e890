//! Command handlers. Each one reads its inputs, calls the library and
//! formats the result.

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cadkit_agent::{run_session, standard_registry, Attachment, Query, SessionStatus};
use cadkit_core::eval::{
    chamfer, load_autoconstrain_dir, load_param_dir, parse_qa_jsonl, run_autoconstrain_eval, run_param_eval, score_qa,
    EvalReport,
};
use cadkit_core::render::{display_image, encode_png, render_sketch, render_sketch_svg, render_solid_views, RasterImage};
use cadkit_core::serialize::{parse_document, serialize, serialize_with_loops, SerializationConfig};
use cadkit_core::solid::{cross_section_mesh, cross_section_solid, parse_obj, parse_stl, section_image, SectionPolygon, SolidError, SolidModel};
use cadkit_core::solver::{check_constraint_with, solve_with};
use cadkit_core::{Constraint, SketchGraph};
use serde_json::json;

use crate::args::{AgentCommand, DirPair, EvalCommand, SectionArgs};
use crate::config::Config;

pub struct Ctx {
    pub json: bool,
    pub config: Config,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub fn load_sketch(path: &Path) -> Result<SketchGraph> {
    let doc = parse_document(&read_text(path)?).with_context(|| format!("invalid sketch {}", path.display()))?;
    Ok(doc.sketch)
}

fn load_solid(path: &Path) -> Result<SolidModel> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("invalid solid {}", path.display()))
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("values serialize"));
}

pub fn solve(ctx: &Ctx, input: &Path, output: &Path) -> Result<ExitCode> {
    let sketch = load_sketch(input)?;
    let res = solve_with(&sketch, &ctx.config.solver)?;
    write(output, serialize(&res.solved, &SerializationConfig::exact())?)?;
    if !res.degenerate.is_empty() {
        let ids: Vec<String> = res.degenerate.iter().map(|id| id.0.to_string()).collect();
        warn(format!("degenerate primitive(s): {}", ids.join(", ")));
    }
    if ctx.json {
        print_json(&json!({
            "converged": res.converged,
            "residual_norm": res.residual_norm,
            "iterations": res.iterations,
            "max_displacement": res.max_displacement,
            "degenerate": res.degenerate,
        }));
    } else {
        println!(
            "{} after {} iteration(s), residual {:e}, max displacement {:e}",
            if res.converged { "converged" } else { "not converged" },
            res.iterations,
            res.residual_norm,
            res.max_displacement
        );
    }
    if !res.converged {
        eprintln!("error: solver did not converge");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn check(ctx: &Ctx, input: &Path, constraint: &Constraint) -> Result<ExitCode> {
    let sketch = load_sketch(input)?;
    let r = check_constraint_with(&sketch, constraint, &ctx.config.solver)?;
    if ctx.json {
        print_json(&r);
    } else {
        println!("valid: {}", r.valid);
        println!("causes_movement: {}", r.causes_movement);
        println!("degenerate: {}", r.degenerate);
        println!("residual_before: {:e}", r.residual_before);
        println!("residual_after: {:e}", r.residual_after);
        println!("max_displacement: {:e}", r.max_displacement);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn serialize_cmd(input: &Path, cfg: SerializationConfig, output: Option<&Path>) -> Result<ExitCode> {
    let doc = parse_document(&read_text(input)?).with_context(|| format!("invalid sketch {}", input.display()))?;
    let text = serialize_with_loops(&doc.sketch, &doc.loops, &cfg)?;
    match output {
        Some(path) => write(path, text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

pub fn render(ctx: &Ctx, input: &Path, output: &Path, marks: bool, size: Option<u32>) -> Result<ExitCode> {
    let sketch = load_sketch(input)?;
    if has_extension(output, "svg") {
        write(output, render_sketch_svg(&sketch, marks))?;
    } else if has_extension(output, "png") {
        let size = size.unwrap_or(ctx.config.render.size);
        let r = render_sketch(&sketch, size, size, marks)?;
        write(output, encode_png(&display_image(&r))?)?;
    } else {
        bail!("output must end in .png or .svg");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn render_solid(ctx: &Ctx, input: &Path, dir: &Path, size: Option<u32>) -> Result<ExitCode> {
    let model = load_solid(input)?;
    let size = size.unwrap_or(ctx.config.render.solid_size);
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for (view, img) in render_solid_views(&model, size, size)? {
        let path = dir.join(format!("{}.png", view.name()));
        write(&path, img.to_png()?)?;
        if !ctx.json {
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn section(ctx: &Ctx, a: &SectionArgs) -> Result<ExitCode> {
    let result = if let Some(path) = &a.mesh {
        let mesh = if has_extension(path, "stl") {
            parse_stl(&fs::read(path).with_context(|| format!("cannot read {}", path.display()))?)?
        } else {
            parse_obj(&read_text(path)?)?
        };
        cross_section_mesh(&mesh, &a.plane)
    } else {
        let path = a.solid.as_deref().expect("clap requires one source");
        cross_section_solid(&load_solid(path)?, &a.plane)
    };
    let section: SectionPolygon = match result {
        Ok(s) => s,
        Err(SolidError::UnclosableLoops { open_chains, partial }) => {
            warn(format!("{open_chains} open chain(s) could not be closed; writing closed loops only"));
            partial
        }
        Err(e) => return Err(e.into()),
    };
    write(&a.output, serialize_with_loops(&SketchGraph::new(), &section.loops, &SerializationConfig::exact())?)?;
    if let Some(path) = &a.image {
        let size = ctx.config.render.size;
        write(path, section_image(&section, size, size).to_png()?)?;
    }
    if ctx.json {
        print_json(&json!({"loops": section.loops.len(), "area": section.area(), "perimeter": section.perimeter()}));
    } else {
        println!("{} loop(s), area {}, perimeter {}", section.loops.len(), section.area(), section.perimeter());
    }
    Ok(ExitCode::SUCCESS)
}

fn report(ctx: &Ctx, report: EvalReport, output: Option<&Path>) -> Result<ExitCode> {
    if let Some(path) = output {
        write(path, report.to_json())?;
    }
    if ctx.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(ExitCode::SUCCESS)
}

fn dataset_error(dirs: &DirPair) -> impl FnOnce(std::io::Error) -> anyhow::Error + '_ {
    move |e| anyhow::anyhow!("cannot read {} / {}: {e}", dirs.gt.display(), dirs.pred.display())
}

pub fn eval(ctx: &Ctx, cmd: &EvalCommand) -> Result<ExitCode> {
    match cmd {
        EvalCommand::Autoconstrain(dirs) => {
            let data = load_autoconstrain_dir(&dirs.gt, &dirs.pred).map_err(dataset_error(dirs))?;
            let r = run_autoconstrain_eval(&data.items, &ctx.config.eval).with_failures(data.failures);
            report(ctx, r, dirs.output.as_deref())
        }
        EvalCommand::Param(dirs) => {
            let data = load_param_dir(&dirs.gt, &dirs.pred).map_err(dataset_error(dirs))?;
            let r = run_param_eval(&data.items, &ctx.config.eval).with_failures(data.failures);
            report(ctx, r, dirs.output.as_deref())
        }
        EvalCommand::Qa { file } => {
            let r = score_qa(&parse_qa_jsonl(&read_text(file)?)?)?;
            if ctx.json {
                println!("{}", serde_json::to_string(&r)?);
            } else {
                println!("accuracy {:.4} ({}/{})", r.accuracy, r.correct, r.total);
                if !r.unanswered.is_empty() {
                    println!("unanswered: {:?}", r.unanswered);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        EvalCommand::Chamfer { a, b } => {
            let load = |p: &Path| -> Result<RasterImage> {
                let bytes = fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
                RasterImage::from_image_bytes(&bytes).with_context(|| format!("cannot decode {}", p.display()))
            };
            let d = chamfer(&load(a)?, &load(b)?)?;
            if ctx.json {
                println!("{}", json!({ "chamfer": d }));
            } else {
                println!("{d:?}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

pub fn agent(ctx: &Ctx, cmd: &AgentCommand) -> Result<ExitCode> {
    let AgentCommand::Run { planner, query, attach, output, budget, artifacts } = cmd;
    let mut planner = cadkit_service::make_planner(planner)?;
    let mut q = Query::new(query.clone());
    for path in attach {
        q = q.with(Attachment::from_path(path)?);
    }
    let state = run_session(planner.as_mut(), &standard_registry(), &q, *budget);
    match output {
        Some(path) => write(path, state.transcript_jsonl())?,
        None if !ctx.json => print!("{}", state.transcript_jsonl()),
        None => {}
    }
    if let Some(dir) = artifacts {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (name, bytes) in &state.artifacts {
            write(&dir.join(name), bytes)?;
        }
        write(&dir.join("document.sketch.json"), state.document.sketch_json())?;
    }
    for flag in &state.flags {
        warn(flag);
    }
    if ctx.json {
        print_json(&json!({"status": state.status, "steps": state.transcript.len(), "flags": state.flags}));
    } else {
        eprintln!("{:?} after {} step(s)", state.status, state.transcript.len());
    }
    Ok(if state.status == SessionStatus::Failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

pub fn serve(host: std::net::IpAddr, port: u16, data_dir: &Path, budget: Option<usize>) -> Result<ExitCode> {
    let mut config = cadkit_service::ServiceConfig::new(data_dir);
    if let Some(b) = budget {
        config.step_budget = b;
    }
    let rt = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    rt.block_on(cadkit_service::serve((host, port).into(), config))
        .with_context(|| format!("service on {host}:{port} stopped"))?;
    Ok(ExitCode::SUCCESS)
}
