use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::Failure;

/// Lines of `key=value`; blank lines and `#` comments ignored. Keys use the
/// flag spelling without dashes, e.g. `grid-n=8191`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        ConfigFile::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ConfigFile, Failure> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Failure::usage(format!("config line {}: expected key=value", k + 1)));
            };
            let key = key.trim().replace('_', "-");
            entries.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { entries })
    }

    /// Rejects keys the subcommand does not take.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), Failure> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Failure::usage(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        self.entries
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| Failure::usage(format!("config {key}: cannot parse {v:?}"))))
            .transpose()
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}
