// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cli;
mod commands;
mod config;
mod error;
mod manifest;
mod output;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use cli::{Cli, Command};
use commands::Session;
use error::{CliError, CliResult};
use manifest::{resolved_args, Manifest, MANIFEST_NAME};
use output::to_json;

/// Parses `argv`, runs the command and writes its manifest.
fn run(argv: Vec<OsString>) -> CliResult<()> {
    let argv = config::expand(argv)?;
    let root = Cli::command();
    let matches = root.clone().try_get_matches_from(argv)?;
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.jobs {
            b = b.num_threads(n.into());
        }
        b.build().map_err(|e| CliError::Usage(e.to_string()))?
    };
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub = root.find_subcommand(name).expect("parsed subcommand exists");
    pool.install(|| execute(&cli.command, resolved_args(sub, sub_matches), &root))
}

fn execute(command: &Command, args: std::collections::BTreeMap<String, Vec<String>>, root: &clap::Command) -> CliResult<()> {
    if let Command::Replay(a) = command {
        return replay(a, root);
    }
    let seed = args.get("seed").and_then(|v| v.first()).and_then(|s| s.parse().ok());
    let mut manifest = Manifest::new(command.name(), args, seed);
    let mut s = match command {
        Command::Fit(a) => with_session(&a.out.out, |s| commands::fit_cmd(s, a))?,
        Command::Simulate(a) => with_session(&a.out.out, |s| commands::simulate_cmd(s, a))?,
        Command::SteadyState(a) => with_session(&a.out.out, |s| commands::steady_state_cmd(s, a))?,
        Command::Validate(a) => with_session(&a.out.out, |s| commands::validate_cmd(s, a))?,
        Command::Influence(a) => with_session(&a.out.out, |s| commands::influence_cmd(s, a))?,
        Command::Stats(a) => with_session(&a.out.out, |s| commands::stats_cmd(s, a))?,
        Command::Pipeline(a) => with_session(&a.out.out, |s| commands::pipeline_cmd(s, a))?,
        Command::Generate(a) => with_session(&a.out.out, |s| commands::generate_cmd(s, a))?,
        Command::Align(a) => with_session(&a.out.out, |s| commands::align_cmd(s, a))?,
        Command::Replay(_) => unreachable!(),
    };
    manifest.inputs = std::mem::take(&mut s.inputs);
    manifest.artifacts = s.out.written().clone();
    let bytes = to_json(&manifest)?;
    std::fs::write(s.out.root().join(MANIFEST_NAME), bytes)?;
    Ok(())
}

fn with_session(out: &std::path::Path, f: impl FnOnce(&mut Session) -> CliResult<()>) -> CliResult<Session> {
    let mut s = Session::new(out)?;
    f(&mut s)?;
    Ok(s)
}

fn replay(a: &cli::ReplayArgs, root: &clap::Command) -> CliResult<()> {
    let recorded = Manifest::load(&a.manifest)?;
    recorded.check_inputs()?;
    let argv = recorded.argv(root, &a.out.out)?;
    let matches = root
        .clone()
        .try_get_matches_from(argv)
        .map_err(|e| CliError::Usage(format!("manifest arguments rejected: {e}")))?;
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub = root.find_subcommand(name).expect("parsed subcommand exists");
    execute(&cli.command, resolved_args(sub, sub_matches), root)?;

    let fresh = Manifest::load(&a.out.out.join(MANIFEST_NAME))?;
    let mut diffs = Vec::new();
    for (name, hash) in &recorded.artifacts {
        match fresh.artifacts.get(name) {
            Some(h) if h == hash => {}
            Some(_) => diffs.push(format!("{name} differs")),
            None => diffs.push(format!("{name} missing")),
        }
    }
    diffs.extend(
        fresh
            .artifacts
            .keys()
            .filter(|k| !recorded.artifacts.contains_key(*k))
            .map(|k| format!("{k} not in manifest")),
    );
    if !diffs.is_empty() {
        return Err(CliError::ReplayMismatch(diffs.join(", ")));
    }
    eprintln!("replay: {} artifacts identical", recorded.artifacts.len());
    Ok(())
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            ExitCode::from(if e.use_stderr() { 1 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
