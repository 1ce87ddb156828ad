use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser};
use serde::Serialize;

use crate::args::{Cli, Command};

/// A problem with the command line or the config file: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

fn toml_to_arg(key: &str, value: &toml::Value) -> Result<Option<String>, UsageError> {
    let scalar = |v: &toml::Value| -> Result<String, UsageError> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            other => Err(UsageError(format!(
                "config key `{key}`: unsupported value {other}"
            ))),
        }
    };
    match value {
        toml::Value::Boolean(true) => Ok(Some(format!("--{key}"))),
        toml::Value::Boolean(false) => Ok(None),
        toml::Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
            Ok(Some(format!("--{key}={}", parts.join(","))))
        }
        v => Ok(Some(format!("--{key}={}", scalar(v)?))),
    }
}

/// Flags from the config file, to be placed before the command-line flags so
/// that the latter win.
fn config_args(path: &Path, subcommand: &str) -> Result<Vec<OsString>, UsageError> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| UsageError(format!("config file {} is not valid TOML: {e}", path.display())))?;
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(subcommand).expect("subcommand exists");
    let valid: Vec<&str> = sub.get_arguments().filter_map(|a| a.get_long()).collect();
    let mut out = Vec::new();
    for (key, value) in &table {
        let key = key.replace('_', "-");
        if key == "config" {
            continue;
        }
        if !valid.contains(&key.as_str()) {
            return Err(UsageError(format!(
                "unknown key `{key}` in config file {} for `{subcommand}`; valid keys: {}",
                path.display(),
                valid.iter().filter(|k| **k != "config").copied().collect::<Vec<_>>().join(", ")
            )));
        }
        if let Some(arg) = toml_to_arg(&key, value)? {
            out.push(arg.into());
        }
    }
    Ok(out)
}

pub enum Parsed {
    Run(Command),
    /// Help, version or a clap error, already formatted.
    Clap(clap::Error),
    Usage(UsageError),
}

/// The `--config` path, if any, found by scanning the flags after the
/// subcommand. A full parse cannot come first: required flags may live in
/// the file.
fn find_config(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(2);
    while let Some(a) = it.next() {
        let a = a.to_str()?;
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Parses `argv`, merging in the config file named by `--config`.
pub fn parse(argv: Vec<OsString>) -> Parsed {
    let sub = argv.get(1).and_then(|s| s.to_str()).map(str::to_owned);
    let known = sub
        .as_deref()
        .is_some_and(|s| Cli::command().find_subcommand(s).is_some());
    let path = if known { find_config(&argv) } else { None };
    let Some(path) = path else {
        return match Cli::try_parse_from(&argv) {
            Ok(cli) => Parsed::Run(cli.command),
            Err(e) => Parsed::Clap(e),
        };
    };
    let injected = match config_args(&path, sub.as_deref().unwrap_or_default()) {
        Ok(a) => a,
        Err(e) => return Parsed::Usage(e),
    };
    // Only help and version precede the subcommand, so it sits at index 1.
    let mut merged = argv[..2].to_vec();
    merged.extend(injected);
    merged.extend(argv[2..].iter().cloned());
    match Cli::try_parse_from(&merged) {
        Ok(cli) => Parsed::Run(cli.command),
        Err(e) => Parsed::Clap(e),
    }
}

#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub program: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub failures: &'a [String],
}

/// The resolved flags as a flat config file that reproduces the run.
pub fn resolved_toml(resolved: &serde_json::Value) -> String {
    let mut table = toml::Table::new();
    if let Some(map) = resolved.as_object() {
        for (k, v) in map {
            let t = match v {
                serde_json::Value::Bool(b) => toml::Value::Boolean(*b),
                serde_json::Value::Number(n) => match (n.as_i64(), n.as_f64()) {
                    (Some(i), _) => toml::Value::Integer(i),
                    // Seeds above i64::MAX travel as strings.
                    (None, _) if n.is_u64() => toml::Value::String(n.to_string()),
                    (None, Some(f)) => toml::Value::Float(f),
                    _ => continue,
                },
                serde_json::Value::String(s) => toml::Value::String(s.clone()),
                _ => continue,
            };
            table.insert(k.clone(), t);
        }
    }
    toml::to_string(&table).expect("flat table serializes")
}

pub struct Outputs {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Path for a new output file, remembered for the run record.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}
