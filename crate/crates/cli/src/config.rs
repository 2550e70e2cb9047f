//! Flat key-value configuration files: one `key = value` per line, `#`
//! comments. Flags override file values; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

pub const KNOWN_KEYS: &[&str] = &[
    "dim",
    "epochs",
    "negative_samples",
    "initial_lr",
    "final_lr",
    "min_count",
    "seed",
    "infer_epochs",
    "session_seed",
    "et",
    "classifier",
    "max_events",
    "max_seconds",
    "workers",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, String> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("config line {}: expected key = value", i + 1));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("config line {}: unknown key {key:?}", i + 1));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(format!("config line {}: duplicate key {key:?}", i + 1));
            }
        }
        Ok(Config { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// Flag value if present, else the config value parsed as `T`, else the
    /// default.
    pub fn resolve<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, String> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| format!("config key {key:?}: cannot parse {raw:?}")),
            None => Ok(default),
        }
    }

    pub fn resolve_opt<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, String> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| format!("config key {key:?}: cannot parse {raw:?}")),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_comments() {
        let cfg = Config::parse("# comment\ndim = 50\net = content,tags\n\n").unwrap();
        assert_eq!(cfg.get("dim"), Some("50"));
        assert_eq!(cfg.get("et"), Some("content,tags"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("bogus = 1").is_err());
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        assert!(Config::parse("dim = 1\ndim = 2").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cfg = Config::parse("dim = 50").unwrap();
        assert_eq!(cfg.resolve(Some(10usize), "dim", 100).unwrap(), 10);
        assert_eq!(cfg.resolve(None::<usize>, "dim", 100).unwrap(), 50);
        assert_eq!(cfg.resolve(None::<usize>, "epochs", 100).unwrap(), 100);
    }
}
