//! Run manifests: what was run, on which inputs, producing which bytes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use clap::{ArgMatches, Command};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::sha256_hex;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Options that only steer where or how fast a run happens.
const UNRECORDED: [&str; 4] = ["out", "jobs", "config", "help"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved subcommand options, defaults included, by long name.
    pub args: BTreeMap<String, Vec<String>>,
    pub seed: Option<u64>,
    /// Input path to sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file name to sha256.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, args: BTreeMap<String, Vec<String>>, seed: Option<u64>) -> Self {
        Manifest {
            tool: "carp".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            seed,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Command line reproducing the run, writing into `out`.
    pub fn argv(&self, root: &Command, out: &Path) -> CliResult<Vec<OsString>> {
        let sub = root
            .find_subcommand(&self.command)
            .ok_or_else(|| CliError::Usage(format!("manifest names unknown command `{}`", self.command)))?;
        let mut argv = vec![OsString::from(root.get_name()), OsString::from(&self.command)];
        for (long, values) in &self.args {
            let arg = sub
                .get_arguments()
                .find(|a| a.get_long() == Some(long.as_str()))
                .ok_or_else(|| CliError::Usage(format!("manifest option `{long}` unknown to `{}`", self.command)))?;
            if arg.get_action().takes_values() {
                argv.extend(values.iter().map(|v| OsString::from(format!("--{long}={v}"))));
            } else if values.iter().any(|v| v == "true") {
                argv.push(OsString::from(format!("--{long}")));
            }
        }
        argv.push(OsString::from("--out"));
        argv.push(out.as_os_str().to_owned());
        Ok(argv)
    }

    /// Fails if any recorded input no longer hashes to its recorded value.
    pub fn check_inputs(&self) -> CliResult<()> {
        for (path, hash) in &self.inputs {
            let bytes = std::fs::read(path)?;
            if &sha256_hex(&bytes) != hash {
                return Err(CliError::InputChanged { path: path.clone() });
            }
        }
        Ok(())
    }
}

/// Raw option values of a parsed subcommand, keyed by long name.
pub fn resolved_args(sub: &Command, matches: &ArgMatches) -> BTreeMap<String, Vec<String>> {
    let mut out = BTreeMap::new();
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if UNRECORDED.contains(&long) || arg.is_global_set() {
            continue;
        }
        let id = arg.get_id().as_str();
        if let Ok(Some(raw)) = matches.try_get_raw(id) {
            let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            out.insert(long.to_string(), values);
        }
    }
    out
}
