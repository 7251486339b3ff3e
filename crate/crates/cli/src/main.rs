//! `seeker` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

mod args;
mod commands;
mod config;
mod synth;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

/// Failure classes that map onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

pub type CmdResult = Result<(), Failure>;

/// Marks an error as caused by bad input.
pub fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

/// Marks an error as a runtime failure.
pub fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn cli_command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

fn parse(raw: Vec<OsString>) -> Result<Cli, ExitCode> {
    let cmd = cli_command();
    let raw = config::expand(raw, &cmd).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })?;
    let matches = cmd.try_get_matches_from(raw).and_then(|m| Cli::from_arg_matches(&m));
    matches.map_err(|e| {
        let _ = e.print();
        ExitCode::from(if e.use_stderr() { 1 } else { 0 })
    })
}

fn run(cli: Cli) -> CmdResult {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(invalid(anyhow::anyhow!("--jobs must be at least 1")));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(runtime)?;
    let jobs = pool.current_num_threads();
    match cli.command {
        Command::Preprocess(a) => pool.install(|| commands::preprocess(&a)),
        Command::Label(a) => pool.install(|| commands::label(&a, jobs)),
        Command::Dataset(a) => commands::dataset(&a),
        Command::Eval(a) => pool.install(|| commands::eval(&a)),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Confusion(a) => commands::confusion(&a),
        Command::Synth(a) => pool.install(|| synth::run(&a)),
        Command::Serve(a) => commands::serve(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Validation(e) | Failure::Runtime(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
