//! `key = value` config files layered under command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

/// Parsed config file; keys are long flag names without the dashes.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Blank lines and `#` comments are ignored; values may be quoted.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("config line {}: expected `key = value`", i + 1))
            })?;
            let key = k.trim().replace('_', "-");
            let v = v.trim();
            let v = v
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(v);
            if values.insert(key.clone(), v.to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "config line {}: duplicate key `{key}`",
                    i + 1
                )));
            }
        }
        Ok(Self { values })
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::Config(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `flag` if given, else the config value for `key`.
    pub fn layer<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("config key `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    /// Boolean switches: a set flag wins, otherwise `true`/`false` from file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        Ok(self.layer::<bool>(None, key)?.unwrap_or(false))
    }
}

/// Parses `lo,hi`.
pub fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((p(lo)?, p(hi)?))
}

/// Comma-separated list of `T`.
pub fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file() {
        let c = ConfigFile::parse("# comment\nepsilon_count = 64\nbins=\"20\"\n").unwrap();
        assert_eq!(c.layer::<usize>(Some(8), "epsilon-count").unwrap(), Some(8));
        assert_eq!(c.layer::<usize>(None, "epsilon-count").unwrap(), Some(64));
        assert_eq!(c.layer::<usize>(None, "bins").unwrap(), Some(20));
        assert_eq!(c.layer::<usize>(None, "absent").unwrap(), None);
        assert!(c.check_keys(&["epsilon-count"]).is_err());
        assert!(c.check_keys(&["epsilon-count", "bins"]).is_ok());
    }

    #[test]
    fn rejects_garbage() {
        assert!(ConfigFile::parse("no equals sign").is_err());
        assert!(ConfigFile::parse("a = 1\na = 2").is_err());
        let c = ConfigFile::parse("bins = many").unwrap();
        assert!(matches!(
            c.layer::<usize>(None, "bins"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_range("0,0").unwrap(), (0.0, 0.0));
        assert_eq!(parse_range("-0.5, 1").unwrap(), (-0.5, 1.0));
        assert!(parse_range("1").is_err());
        assert_eq!(parse_list::<u32>("1,2,,3").unwrap(), vec![1, 2, 3]);
    }
}
