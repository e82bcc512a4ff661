//! Option resolution and run manifests.
//!
//! Every subcommand has one options struct whose fields are all optional.
//! The effective options are built from built-in defaults, overlaid by a
//! `--config` JSON file, overlaid by command-line flags. The result is echoed
//! into `manifest.json` next to the outputs, and a manifest can itself be
//! passed back as `--config` to repeat a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use densemap::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "DENSEMAP_SEED";
pub const MANIFEST_FILE: &str = "manifest.json";

pub trait Command: Serialize + DeserializeOwned + Clone {
    const NAME: &'static str;

    fn defaults() -> Self;

    /// Whether the options carry a `seed` that falls back to `DENSEMAP_SEED`.
    fn seeded() -> bool {
        false
    }

    /// Files and directories whose contents determine the outputs.
    fn inputs(&self) -> Vec<PathBuf>;

    fn out(&self) -> Option<&Path>;

    fn seed(&self) -> Option<u64> {
        None
    }

    fn run(&self, jobs: usize) -> Result<()>;
}

pub fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub fn io_error(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
    Error::Io {
        path: path.into(),
        source,
    }
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| invalid(format!("missing required option --{flag}")))
}

/// Copies non-null entries of `top` over `base`, recursing into objects.
fn overlay(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, t) => {
            if !t.is_null() {
                *b = t.clone();
            }
        }
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Options stored in a config file; a run manifest contributes its
/// `config` field.
pub fn config_file_options(path: &Path) -> Result<Value> {
    let value = read_json(path)?;
    match value {
        Value::Object(mut map) if map.contains_key("command") && map.contains_key("config") => {
            Ok(map.remove("config").unwrap_or(Value::Object(Map::new())))
        }
        Value::Object(_) => Ok(value),
        _ => Err(invalid(format!("{} is not a JSON object", path.display()))),
    }
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Effective options: defaults, then the config file, then flags.
pub fn resolve<C: Command>(flags: &C, config: Option<&Path>) -> Result<C> {
    let mut merged = serde_json::to_value(C::defaults())?;
    if let Some(path) = config {
        overlay(&mut merged, &config_file_options(path)?);
    }
    overlay(&mut merged, &serde_json::to_value(flags)?);
    if C::seeded() {
        let obj = merged
            .as_object_mut()
            .expect("options serialize to an object");
        if obj.get("seed").is_none_or(Value::is_null) {
            let seed = seed_from_env()?.unwrap_or(0);
            obj.insert("seed".into(), Value::from(seed));
        }
    }
    serde_json::from_value(merged).map_err(|e| invalid(format!("bad options: {e}")))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// SHA-256 of every input file; directories contribute each regular file
/// directly inside them.
pub fn input_hashes(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for path in paths {
        if path.is_dir() {
            let entries = fs::read_dir(path).map_err(|e| io_error(path, e))?;
            let mut files = Vec::new();
            for entry in entries {
                let p = entry.map_err(|e| io_error(path, e))?.path();
                if p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                    files.push(p);
                }
            }
            files.sort();
            for f in files {
                out.insert(f.display().to_string(), hash_file(&f)?);
            }
        } else {
            out.insert(path.display().to_string(), hash_file(path)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

/// Runs a fully resolved command and writes its manifest.
pub fn execute<C: Command>(opts: &C, jobs: usize) -> Result<()> {
    let out = required(&opts.out().map(Path::to_path_buf), "out")?.clone();
    let inputs = input_hashes(&opts.inputs())?;
    create_dir(&out)?;
    opts.run(jobs)?;
    let manifest = Manifest {
        command: C::NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: opts.seed(),
        config: serde_json::to_value(opts)?,
        inputs,
    };
    write_json(&manifest, &out.join(MANIFEST_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overlay_skips_nulls_and_merges_objects() {
        let mut base = json!({"a": 1, "b": {"x": 1, "y": 2}, "c": "keep"});
        overlay(&mut base, &json!({"a": 5, "b": {"y": 3}, "c": null}));
        assert_eq!(base, json!({"a": 5, "b": {"x": 1, "y": 3}, "c": "keep"}));
    }
}
