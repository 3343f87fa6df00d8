//! Optional key=value config file. Flags always win; a config file only
//! fills in values the command line left unset.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Parsed config file: one `key = value` per line, `#` starts a comment.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key=value, got {raw:?}", lineno + 1))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("config key {key}: {e}")),
        }
    }

    /// Flag value if given, else config value, else the default.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, String>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.parse(key)?.unwrap_or(default)),
        }
    }

    /// Same, for comma-separated list values.
    pub fn resolve_list<T: FromStr>(
        &self,
        flag: Option<Vec<T>>,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>, String>
    where
        T: Clone,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<T>()
                        .map_err(|e| format!("config key {key}: {e}"))
                })
                .collect(),
        }
    }
}

/// Seed set: either a count `N` (seeds 0..N-1) or an inclusive range `A..B`.
#[derive(Debug, Clone)]
pub struct SeedSpec(pub Vec<u64>);

impl FromStr for SeedSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = |s: &str| format!("seed spec {s:?}: expected a count N or a range A..B");
        if let Some((a, b)) = s.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad(s))?;
            let b: u64 = b.trim().parse().map_err(|_| bad(s))?;
            if b < a {
                return Err(bad(s));
            }
            Ok(SeedSpec((a..=b).collect()))
        } else {
            let n: u64 = s.trim().parse().map_err(|_| bad(s))?;
            if n == 0 {
                return Err("seed spec: need at least one seed".into());
            }
            Ok(SeedSpec((0..n).collect()))
        }
    }
}
