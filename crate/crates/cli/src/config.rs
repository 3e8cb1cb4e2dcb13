//! Run configuration: a TOML document layered over a named preset.
//!
//! Layers, later ones winning: the navigation study defaults, the preset
//! named by `algorithm`, the document's own keys, then `key=value`
//! overrides. Tables merge key by key; arrays and scalars are replaced.
//! Schema violations are reported with the dotted path of the offending
//! field.

use std::path::Path;

use awopt_core::agent::{make_algorithm, Overrides, Variant};
use awopt_core::experiment::study::{arm_config, Arm, StudySettings};
use awopt_core::experiment::ExperimentConfig;
use awopt_core::{Error, Result};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const DEFAULT_ALGORITHM: &str = "aw_opt";

#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub variant: Variant,
    pub config: ExperimentConfig,
}

/// Reads a TOML file into a JSON tree.
pub fn load_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let doc: Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(doc)
}

/// Applies the layers and validates the result. `algorithm` wins over the
/// document's own `algorithm` key.
pub fn resolve(mut doc: Value, algorithm: Option<&str>, overrides: &[String]) -> Result<ResolvedConfig> {
    let table = doc
        .as_object_mut()
        .ok_or_else(|| Error::Config("the configuration must be a table".into()))?;
    let from_doc = match table.remove("algorithm") {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(other) => return Err(Error::Config(format!("algorithm: expected a preset name, got {other}"))),
    };
    let name = algorithm.map(str::to_owned).or(from_doc).unwrap_or_else(|| DEFAULT_ALGORITHM.into());
    let variant = Variant::from_name(&name)?;

    let mut base = to_value(&arm_config(Arm::AwOpt, &StudySettings::default())?)?;
    base["agent"] = to_value(&make_algorithm(variant, &Overrides::default())?)?;
    merge(&mut base, doc);
    for raw in overrides {
        apply_override(&mut base, raw)?;
    }
    let config: ExperimentConfig = serde_path_to_error::deserialize(base).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{path}: {}", e.into_inner()))
    })?;
    config.validate()?;
    Ok(ResolvedConfig { variant, config })
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Keys that select the variant of a tagged table.
const TAGS: [&str; 3] = ["name", "source", "kind"];

/// Recursively merges `top` into `base`. A table whose variant tag differs
/// from the base's replaces it instead of merging into it.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t))
            if TAGS.iter().any(|k| matches!((b.get(*k), t.get(*k)), (Some(x), Some(y)) if x != y)) =>
        {
            *b = t;
        }
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `dotted.path=value` pair. Paths whose first segment is not a
/// top-level key are taken relative to `agent`. Values are read as TOML
/// (`false`, `0.5`, `[64, 64]`, `{ kind = "actor_only" }`) and fall back to
/// a bare string.
pub fn apply_override(doc: &mut Value, raw: &str) -> Result<()> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override '{raw}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Usage(format!("override '{raw}' has an empty key")));
    }
    let mut segments: Vec<&str> = key.split('.').collect();
    let top_level = doc.as_object().is_some_and(|m| m.contains_key(segments[0]));
    if !top_level {
        segments.insert(0, "agent");
    }
    let value = parse_value(value.trim());
    let mut slot = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        slot = match slot {
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::Usage(format!("override {key}: '{seg}' is not an array index")))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Usage(format!("override {key}: index {idx} out of range")))?
            }
            Value::Object(map) => {
                if last {
                    map.insert((*seg).to_owned(), value);
                    return Ok(());
                }
                map.entry((*seg).to_owned()).or_insert_with(|| Value::Object(Map::new()))
            }
            _ => return Err(Error::Usage(format!("override {key}: '{seg}' is not inside a table"))),
        };
        if last {
            *slot = value;
            return Ok(());
        }
    }
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Map<String, Value>>(&format!("v = {raw}")) {
        Ok(mut m) => m.remove("v").unwrap_or(Value::Null),
        Err(_) => Value::String(raw.to_owned()),
    }
}

/// JSON with object keys sorted at every level and no whitespace.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// SHA-256 of the canonical JSON form, hex encoded.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(canonical_json(&to_value(config)?).as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
