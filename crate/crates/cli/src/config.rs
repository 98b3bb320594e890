//! Defaults read from `cadkit.toml`.

use std::path::Path;

use anyhow::Context;
use cadkit_core::eval::EvalConfig;
use cadkit_core::render::DEFAULT_SIZE;
use cadkit_core::solver::SolverConfig;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct RenderDefaults {
    /// Side of sketch renderings in pixels.
    pub size: u32,
    /// Side of each solid view in pixels.
    pub solid_size: u32,
}

impl Default for RenderDefaults {
    fn default() -> Self {
        Self { size: DEFAULT_SIZE, solid_size: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default)]
pub struct Config {
    pub solver: SolverConfig,
    pub eval: EvalConfig,
    pub render: RenderDefaults,
}

impl Config {
    /// Reads `path`, or `./cadkit.toml` when it exists, else defaults. The
    /// `[solver]` table also applies to evaluation runs.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let default = Path::new("cadkit.toml");
        let path = match path {
            Some(p) => p,
            None if default.is_file() => default,
            None => return Ok(Config::default()),
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        cfg.eval.solver = cfg.solver;
        Ok(cfg)
    }
}
