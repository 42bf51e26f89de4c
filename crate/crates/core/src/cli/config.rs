//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

const KNOWN_KEYS: &[&str] = &[
    "M",
    "N",
    "scenario",
    "precoder",
    "detector",
    "alphabet",
    "snr",
    "frames",
    "target_errors",
    "seed",
    "format",
    "cp",
    "carrier",
    "delta_f",
    "ml_budget",
    "pair_budget",
    "rank_tol",
];

/// Parsed file; lookups fall back to nothing when no file was given.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("--config: cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--config: line {} is not key=value", no + 1)))?;
            let k = k.trim().replace('-', "_");
            let key = KNOWN_KEYS
                .iter()
                .find(|known| known.eq_ignore_ascii_case(&k))
                .ok_or_else(|| CliError::usage(format!("--config: unknown key '{k}' on line {}", no + 1)))?;
            values.insert((*key).to_string(), v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value, else file value, else `None`. Parse errors name the flag.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, flag_name: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::usage(format!("{flag_name} (from --config): {e}"))),
        }
    }

    pub fn pick_str(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.raw(key).map(str::to_string))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_unknown_keys() {
        let c = ConfigFile::parse("# comment\nM = 4\nn=2 # trailing\ntarget-errors = 10\n").unwrap();
        assert_eq!(c.raw("M"), Some("4"));
        assert_eq!(c.raw("N"), Some("2"));
        assert_eq!(c.raw("target_errors"), Some("10"));
        assert_eq!(c.pick::<usize>(Some(8), "M", "--M").unwrap(), Some(8));
        assert_eq!(c.pick::<usize>(None, "M", "--M").unwrap(), Some(4));
        assert_eq!(c.pick::<usize>(None, "seed", "--seed").unwrap(), None);
        assert!(ConfigFile::parse("bogus = 1").is_err());
        assert!(ConfigFile::parse("M 4").is_err());
        assert!(ConfigFile::parse("M = x").unwrap().pick::<usize>(None, "M", "--M").is_err());
    }
}
