//! Plain `key = value` config files and list parsing. Flags always win over
//! file entries.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug, Default)]
pub struct FileConfig {
    entries: HashMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-").to_ascii_lowercase()
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value, got '{raw}'", i + 1)))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(CliError::Config(format!("config line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("config line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Rejects keys the subcommand does not understand (typos would otherwise
    /// be silently ignored).
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        let mut unknown: Vec<&str> = self.entries.keys().map(String::as_str).filter(|k| !allowed.contains(k)).collect();
        unknown.sort_unstable();
        match unknown.first() {
            None => Ok(()),
            Some(k) => Err(CliError::Config(format!("unknown config key '{k}'"))),
        }
    }

    /// Flag value if given, else the file entry parsed as `T`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Config(format!("config key '{key}': {e}"))))
            .transpose()
    }

    pub fn pick_list<T>(&self, flag: Option<&str>, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        flag.or_else(|| self.raw(key)).map(|s| parse_list(s).map_err(|e| CliError::Config(format!("{key}: {e}")))).transpose()
    }

    pub fn pick_flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        match self.raw(key) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(CliError::Config(format!("config key '{key}': expected a boolean, got '{other}'"))),
            },
        }
    }
}

/// Comma-separated list; empty items are rejected.
pub fn parse_list<T>(s: &str) -> Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    if items.iter().any(|i| i.is_empty()) {
        return Err(format!("malformed list '{s}'"));
    }
    items.into_iter().map(|i| i.parse::<T>().map_err(|e| format!("'{i}': {e}"))).collect()
}

/// Seeds accept `a..b` (half-open) in addition to plain lists.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("seed range '{s}': {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("seed range '{s}': {e}"))?;
        if a >= b {
            return Err(format!("empty seed range '{s}'"));
        }
        return Ok((a..b).collect());
    }
    parse_list(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let c = FileConfig::parse("# sweep\nmethod = pqbvm\nt_final=2 # trailing\n\n--eps = 1e-2,1e-3\n").unwrap();
        assert_eq!(c.raw("method"), Some("pqbvm"));
        assert_eq!(c.raw("t-final"), Some("2"));
        assert_eq!(c.raw("eps"), Some("1e-2,1e-3"));
    }

    #[test]
    fn flags_win() {
        let c = FileConfig::parse("m = 32").unwrap();
        assert_eq!(c.pick(Some(64usize), "m").unwrap(), Some(64));
        assert_eq!(c.pick(None::<usize>, "m").unwrap(), Some(32));
        assert_eq!(c.pick(None::<usize>, "n").unwrap(), None);
    }

    #[test]
    fn rejects_garbage() {
        assert!(FileConfig::parse("novalue").is_err());
        assert!(FileConfig::parse("m=1\nm=2").is_err());
        assert!(FileConfig::parse("m = x").unwrap().pick(None::<usize>, "m").is_err());
        assert!(FileConfig::parse("bogus = 1").unwrap().check_keys(&["m"]).is_err());
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list::<f64>("1e-2, 1e-3").unwrap(), vec![1e-2, 1e-3]);
        assert!(parse_list::<f64>("1e-2,,1").is_err());
        assert_eq!(parse_seeds("2..5").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("7,1").unwrap(), vec![7, 1]);
        assert!(parse_seeds("5..5").is_err());
    }
}
