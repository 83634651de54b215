//! `key = value` configuration files. Each entry becomes `--key value` placed
//! before the user's own flags, so flags given on the command line win.

use std::collections::HashSet;
use std::path::Path;

use midlayer::{Error, Result};

/// Parses the file into flag arguments, keeping only keys in `known`.
pub fn config_args(path: &Path, known: &HashSet<String>) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parameter(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text, known)
}

pub fn parse(text: &str, known: &HashSet<String>) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("config line {}: expected 'key = value'", i + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Parameter(format!("config line {}: empty key", i + 1)));
        }
        if key == "config" || !known.contains(&key) {
            continue;
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value.to_string());
            }
        }
    }
    Ok(out)
}
