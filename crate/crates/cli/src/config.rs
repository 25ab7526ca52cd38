use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Bad flags or config; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

fn as_object(value: Value, what: &str) -> anyhow::Result<Map<String, Value>> {
    match value {
        Value::Object(map) => Ok(map),
        _ => usage(format!("{what} must be a JSON object")),
    }
}

/// Reads a config file. A run manifest is accepted too; its snapshot is used
/// when the command matches.
pub fn load_config(command: &str, path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
    let mut map = as_object(value, "config")?;
    if let Some(snapshot) = map.remove("config_snapshot") {
        match map.get("command").and_then(Value::as_str) {
            Some(c) if c == command => {}
            other => return usage(format!("manifest was written by {other:?}, not {command:?}")),
        }
        return as_object(snapshot, "config_snapshot");
    }
    Ok(map)
}

/// `P::default()` overlaid by the config file, then by every flag that was given.
pub fn resolve<P, F>(command: &str, config: Option<&Path>, flags: &F) -> anyhow::Result<P>
where
    P: Serialize + DeserializeOwned + Default,
    F: Serialize,
{
    let mut merged = as_object(serde_json::to_value(P::default())?, "defaults")?;
    if let Some(path) = config {
        merged.extend(load_config(command, path)?);
    }
    let flags = as_object(serde_json::to_value(flags)?, "flags")?;
    merged.extend(flags.into_iter().filter(|(_, v)| !v.is_null()));
    serde_json::from_value(Value::Object(merged)).map_err(|e| UsageError(format!("invalid {command} parameters: {e}")).into())
}

/// Parses a snake_case enum name through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use std::io::Write;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct P {
        seed: Option<u64>,
        g: f64,
        steps: usize,
    }

    impl Default for P {
        fn default() -> Self {
            Self { seed: None, g: 1.0, steps: 10 }
        }
    }

    #[derive(Serialize)]
    struct Flags {
        seed: Option<u64>,
        g: Option<f64>,
    }

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn flags_override_config_override_defaults() {
        let cfg = file(r#"{"g": 2.0, "steps": 5, "seed": 3}"#);
        let p: P = resolve("x", Some(cfg.path()), &Flags { seed: None, g: Some(4.0) }).unwrap();
        assert_eq!(p, P { seed: Some(3), g: 4.0, steps: 5 });
        let p: P = resolve("x", None, &Flags { seed: None, g: None }).unwrap();
        assert_eq!(p, P::default());
    }

    #[test]
    fn manifest_snapshot_is_accepted() {
        let cfg = file(r#"{"command": "x", "config_snapshot": {"g": 0.5, "steps": 7, "seed": 9}, "wall_time": 1.0}"#);
        let p: P = resolve("x", Some(cfg.path()), &Flags { seed: None, g: None }).unwrap();
        assert_eq!(p, P { seed: Some(9), g: 0.5, steps: 7 });
        assert!(resolve::<P, _>("y", Some(cfg.path()), &Flags { seed: None, g: None }).is_err());
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let cfg = file(r#"{"gg": 2.0}"#);
        let err = resolve::<P, _>("x", Some(cfg.path()), &Flags { seed: None, g: None }).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
