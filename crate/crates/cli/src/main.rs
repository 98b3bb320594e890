//! `cadkit` command-line interface.

mod args;
mod commands;
mod config;
mod spec;

use std::ffi::OsString;
use std::io::IsTerminal;
use std::process::ExitCode;

use cadkit_core::serialize::SerializationConfig;
use clap::error::ErrorKind;
use clap::{ColorChoice, CommandFactory, FromArgMatches};

use args::{Cli, Command};
use commands::Ctx;

fn color_choice() -> ColorChoice {
    if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) || !std::io::stderr().is_terminal() {
        ColorChoice::Never
    } else {
        ColorChoice::Auto
    }
}

/// Help for the deepest subcommand named in `argv`.
fn subcommand_help(argv: &[OsString]) -> String {
    let mut cmd = Cli::command().color(color_choice());
    cmd.build();
    for arg in argv.iter().skip(1).filter_map(|a| a.to_str()) {
        if let Some(sub) = cmd.find_subcommand(arg) {
            cmd = sub.clone();
        }
    }
    cmd.render_help().to_string()
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let ctx = Ctx { json: cli.json, config: config::Config::load(cli.config.as_deref())? };
    match &cli.command {
        Command::Solve { input, output } => commands::solve(&ctx, input, output),
        Command::Check { input, constraint } => commands::check(&ctx, input, constraint),
        Command::Serialize { input, format, strategy, precision, output } => {
            let cfg = SerializationConfig { format: *format, strategy: *strategy, float_precision: *precision };
            commands::serialize_cmd(input, cfg, output.as_deref())
        }
        Command::Render { input, output, marks, size } => commands::render(&ctx, input, output, *marks, *size),
        Command::RenderSolid { input, output, size } => commands::render_solid(&ctx, input, output, *size),
        Command::Section(a) => commands::section(&ctx, a),
        Command::Eval(cmd) => commands::eval(&ctx, cmd),
        Command::Agent(cmd) => commands::agent(&ctx, cmd),
        Command::Serve { port, host, data_dir, budget } => commands::serve(*host, *port, data_dir, *budget),
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let matches = match Cli::command().color(color_choice()).try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", subcommand_help(&argv));
            return ExitCode::from(2);
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from the same grammar");
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
