//! Config files and the reproducibility header.
//!
//! A config file is TOML with one key per flag (`n_seeds = 200`,
//! `mode = "stt"`, `times = [0.1, 0.5]`). Its entries are appended to the
//! command line as flags, and since later occurrences of a flag win, the
//! file overrides flags given by hand.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use toml::Value;

fn scalar(key: &str, v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        other => bail!("config key `{key}`: unsupported value {other}"),
    })
}

fn render(key: &str, v: &Value) -> Result<String> {
    match v {
        Value::Array(items) => Ok(items.iter().map(|x| scalar(key, x)).collect::<Result<Vec<_>>>()?.join(",")),
        v => scalar(key, v),
    }
}

/// Flags equivalent to the entries of the config file at `path`.
pub fn config_flags(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut flags = Vec::new();
    for (key, value) in &table {
        if key == "config" {
            bail!("config files cannot name another config file");
        }
        flags.push(format!("--{}={}", key.replace('_', "-"), render(key, value)?).into());
    }
    Ok(flags)
}

/// `# key=value` lines for every field of `args`, sorted by key.
pub fn header<T: Serialize>(command: &str, args: &T) -> Result<String> {
    let value = Value::try_from(args).context("serialising the effective configuration")?;
    let table = value.as_table().context("configuration is not a table")?;
    let mut out = format!("# vbt {command} {}\n", env!("CARGO_PKG_VERSION"));
    for (key, value) in table {
        out.push_str(&format!("# {key}={}\n", render(key, value)?));
    }
    Ok(out)
}
