//! Flat `key = value` config files.
//!
//! Grammar: one `key = value` per line; blank lines and lines starting with
//! `#` are ignored; keys are subcommand long options without the leading
//! dashes; boolean flags take `true` or `false`. Entries are spliced in
//! right after the subcommand name, so flags given on the command line
//! override them.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::cli::Cli;
use crate::error::{CliError, CliResult};

pub fn parse_entries(text: &str, path: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config {
            path: path.to_string(),
            reason: format!("line {}: expected `key = value`", n + 1),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::Config {
                path: path.to_string(),
                reason: format!("line {}: empty key", n + 1),
            });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config`, and the index of the subcommand name.
fn scan(args: &[OsString]) -> (Option<OsString>, Option<usize>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(OsString::from(v));
        } else if a == "--config" {
            config = args.get(i + 1).cloned();
            i += 1;
        } else if a == "--jobs" {
            i += 1;
        } else if !a.starts_with('-') && sub.is_none() {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

/// Returns `args` with the config file's entries spliced in.
pub fn expand(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let (Some(path), Some(at)) = scan(&args) else {
        return Ok(args);
    };
    let label = path.to_string_lossy().into_owned();
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| CliError::Config {
        path: label.clone(),
        reason: e.to_string(),
    })?;
    let name = args[at].to_string_lossy().into_owned();
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(&name)
        .ok_or_else(|| CliError::Usage(format!("unknown subcommand `{name}`")))?;
    let mut injected = Vec::new();
    for (key, value) in parse_entries(&text, &label)? {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && !a.is_global_set())
            .ok_or_else(|| CliError::Config {
                path: label.clone(),
                reason: format!("unknown key `{key}` for `{name}`"),
            })?;
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value.as_str() {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => {
                    return Err(CliError::Config {
                        path: label.clone(),
                        reason: format!("flag `{key}` takes true or false, got `{value}`"),
                    })
                }
            }
        }
    }
    let mut out = args;
    out.splice(at + 1..at + 1, injected);
    Ok(out)
}
