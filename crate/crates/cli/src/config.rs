//! Flat TOML configuration with command-line overrides.
//!
//! Every key is read through [`Params`], which records what was consumed;
//! [`Params::finish`] rejects whatever is left over, so typos fail before
//! any computation starts.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use toml::Value;

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    values: BTreeMap<String, Value>,
    used: RefCell<BTreeSet<String>>,
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

/// Parses the right-hand side of `KEY=VALUE` as a TOML value, falling back
/// to a bare string (`kind=pde-fk`).
fn parse_value(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

impl Params {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(format!("config parse error: {}", e.message())))?;
        let mut values = BTreeMap::new();
        for (k, v) in table {
            if matches!(v, Value::Table(_)) {
                return config_err(format!("key '{k}': nested tables are not supported; use flat keys"));
            }
            values.insert(k, v);
        }
        Ok(Params { values, used: RefCell::default() })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Applies `KEY=VALUE`; dashes in keys become underscores.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), CliError> {
        let Some((k, v)) = kv.split_once('=') else {
            return config_err(format!("override '{kv}' is not of the form KEY=VALUE"));
        };
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return config_err(format!("override '{kv}' has an empty key"));
        }
        self.values.insert(key, parse_value(v.trim()));
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// All keys and values, for the manifest.
    pub fn echo(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null)))
            .collect();
        serde_json::Value::Object(map)
    }

    fn take(&self, key: &str) -> Option<&Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Float(v)) => Ok(*v),
            Some(Value::Integer(v)) => Ok(*v as f64),
            Some(other) => config_err(format!("key '{key}' must be a number, got {other}")),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if *v >= 0 => Ok(*v as usize),
            Some(other) => config_err(format!("key '{key}' must be a nonnegative integer, got {other}")),
        }
    }

    pub fn u64_opt(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(Value::String(s)) => s.parse().map(Some).map_err(|_| CliError::Config(format!("key '{key}' must be a u64, got {s}"))),
            Some(other) => config_err(format!("key '{key}' must be a nonnegative integer, got {other}")),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(other) => config_err(format!("key '{key}' must be true or false, got {other}")),
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> Result<String, CliError> {
        match self.take(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => config_err(format!("key '{key}' must be a string, got {other}")),
        }
    }

    pub fn str_req(&self, key: &str) -> Result<String, CliError> {
        if !self.values.contains_key(key) {
            return config_err(format!("missing required key '{key}'"));
        }
        self.str_or(key, "")
    }

    /// A number or an array of numbers.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let num = |v: &Value| match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        };
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| num(v).ok_or_else(|| CliError::Config(format!("key '{key}' must hold numbers, got {v}"))))
                .collect(),
            Some(v) => num(v).map(|x| vec![x]).ok_or_else(|| CliError::Config(format!("key '{key}' must be a number list, got {v}"))),
        }
    }

    /// Fails on any key that no reader asked for.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.values.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            config_err(format!("unknown keys: {}", unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_reads_and_unknown_keys() {
        let mut p = Params::from_toml_str("samples = 100\nradii = [1, 1.5]\nterminal = \"identity\"\n").unwrap();
        p.apply_override("x0=0.5").unwrap();
        p.apply_override("max-levels=3").unwrap();
        assert_eq!(p.usize_or("samples", 1).unwrap(), 100);
        assert_eq!(p.f64_list_or("radii", &[]).unwrap(), vec![1.0, 1.5]);
        assert_eq!(p.f64_list_or("x0", &[]).unwrap(), vec![0.5]);
        assert_eq!(p.str_or("terminal", "one").unwrap(), "identity");
        assert!(p.finish().is_err());
        assert_eq!(p.usize_or("max_levels", 0).unwrap(), 3);
        p.finish().unwrap();
    }

    #[test]
    fn rejects_bad_types_and_nesting() {
        let p = Params::from_toml_str("samples = \"many\"").unwrap();
        assert!(matches!(p.usize_or("samples", 1), Err(CliError::Config(_))));
        assert!(Params::from_toml_str("[section]\na = 1").is_err());
        let mut q = Params::default();
        assert!(q.apply_override("novalue").is_err());
        q.apply_override("kind=pde-fk").unwrap();
        assert_eq!(q.str_req("kind").unwrap(), "pde-fk");
    }
}
