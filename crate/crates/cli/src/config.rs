//! Flat `key=value` run configuration files. Lines starting with `#` and
//! blank lines are ignored; unknown keys are rejected so typos fail loudly.
//! Command-line flags always override file values.

use std::collections::HashMap;
use std::path::Path;

pub struct RunConfig {
    values: HashMap<String, String>,
}

impl RunConfig {
    pub fn empty() -> Self {
        Self {
            values: HashMap::new(),
        }
    }

    pub fn load(path: &Path, known_keys: &[&str]) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {} is not key=value", lineno + 1))?;
            let key = key.trim();
            if !known_keys.contains(&key) {
                return Err(format!(
                    "config line {}: unknown key {key:?}",
                    lineno + 1
                ));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// Flag value if present, else config value, else none.
    pub fn merge<'a>(&'a self, flag: Option<&'a str>, key: &str) -> Option<&'a str> {
        flag.or_else(|| self.get(key))
    }
}
