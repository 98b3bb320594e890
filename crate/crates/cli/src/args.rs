//! Command-line grammar.

use std::path::PathBuf;

use cadkit_core::params::Strategy;
use cadkit_core::serialize::Format;
use cadkit_core::solid::SectionPlane;
use cadkit_core::{Constraint, Vec3};
use clap::{Args, Parser, Subcommand};

use crate::spec::parse_constraint_spec;

#[derive(Debug, Parser)]
#[command(name = "cadkit", version, about = "Parametric sketch kernel, evaluation suite and CAD agent")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Config file with defaults; `./cadkit.toml` is used when present.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a sketch's constraints and write the result.
    Solve {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check whether one constraint can be added to a sketch.
    Check {
        input: PathBuf,
        /// For example `coincident(0.end,1.start)` or `horizontal(2)`.
        #[arg(long, value_name = "SPEC", value_parser = parse_constraint_spec)]
        constraint: Constraint,
    },
    /// Write a sketch in another format or parameterization.
    Serialize {
        input: PathBuf,
        /// json, csv, markdown or html.
        #[arg(long, default_value = "json", value_parser = parse_format)]
        format: Format,
        /// implicit, point_based or overparameterized.
        #[arg(long, default_value = "point_based", value_parser = parse_strategy)]
        strategy: Strategy,
        /// Decimal places; 17 writes exact values.
        #[arg(long, default_value_t = 6)]
        precision: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Render a sketch to PNG or SVG, chosen by the output extension.
    Render {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Overlay primitive id markers.
        #[arg(long)]
        marks: bool,
        /// Image side in pixels.
        #[arg(long)]
        size: Option<u32>,
    },
    /// Render front, right, top and isometric views of a solid.
    RenderSolid {
        input: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        output: PathBuf,
        #[arg(long)]
        size: Option<u32>,
    },
    /// Cut a mesh or solid with a plane.
    Section(SectionArgs),
    /// Benchmark metrics over datasets and images.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Tool-using agent sessions.
    #[command(subcommand)]
    Agent(AgentCommand),
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, value_name = "DIR")]
        data_dir: PathBuf,
        /// Steps allowed per run.
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct SectionArgs {
    /// OBJ or STL mesh.
    #[arg(long, required_unless_present = "solid", conflicts_with = "solid")]
    pub mesh: Option<PathBuf>,
    /// Solid model JSON.
    #[arg(long)]
    pub solid: Option<PathBuf>,
    /// Origin and normal as `ox,oy,oz,nx,ny,nz`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_plane)]
    pub plane: SectionPlane,
    /// Loops as JSON.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also rasterize the loops to this PNG.
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Score predicted constraint lists against ground-truth sketches.
    Autoconstrain(DirPair),
    /// Score predicted parameterizations against ground-truth sketches.
    Param(DirPair),
    /// Score multiple-choice answers from a JSONL file.
    Qa { file: PathBuf },
    /// Chamfer distance between two binary images.
    Chamfer { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Args)]
pub struct DirPair {
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,
    /// Also write the JSON report here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AgentCommand {
    /// Run one agent session to completion.
    Run {
        /// `scripted:FIXTURE` or `llm`.
        #[arg(long)]
        planner: String,
        #[arg(long)]
        query: String,
        #[arg(long = "attach", value_name = "FILE")]
        attach: Vec<PathBuf>,
        /// Transcript JSONL; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = cadkit_agent::DEFAULT_BUDGET)]
        budget: usize,
        /// Write produced images and files here.
        #[arg(long, value_name = "DIR")]
        artifacts: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<Format, String> {
    Format::from_name(s).ok_or_else(|| format!("unknown format `{s}`"))
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_name(s).ok_or_else(|| format!("unknown strategy `{s}`"))
}

fn parse_plane(s: &str) -> Result<SectionPlane, String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    if v.len() != 6 || v.iter().any(|x| !x.is_finite()) {
        return Err("expected six finite numbers ox,oy,oz,nx,ny,nz".into());
    }
    let plane = SectionPlane::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
    plane.basis().map_err(|e| e.to_string())?;
    Ok(plane)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn grammar_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn planes() {
        let p = parse_plane("0,0,0.5,0,0,1").unwrap();
        assert_eq!(p, SectionPlane::new(Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.0, 0.0, 1.0)));
        assert!(parse_plane("0,0,0,0,0,0").is_err());
        assert!(parse_plane("1,2,3").is_err());
        assert!(parse_plane("0,0,0,0,0,nan").is_err());
    }
}
