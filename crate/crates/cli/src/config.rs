//! `key = value` configuration files. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const KEYS: &[&str] = &["curve", "delta", "listen", "connect", "state_dir", "seed"];

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("config line {}: expected key = value", i + 1)))?;
            let k = k.trim().replace('-', "_");
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::config(format!("config line {}: unknown key `{k}`", i + 1)));
            }
            values.insert(k, v.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Global settings after merging flags over the config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub curve: Option<String>,
    pub delta: u64,
    pub listen: Option<String>,
    pub connect: Option<String>,
    pub state_dir: PathBuf,
    pub seed: Option<u64>,
}

pub const DEFAULT_STATE_DIR: &str = "mecauth-state";

fn parse_u64(key: &str, v: &str) -> Result<u64, CliError> {
    v.parse().map_err(|_| CliError::config(format!("{key} must be a non-negative integer, got `{v}`")))
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub curve: Option<String>,
    pub delta: Option<u64>,
    pub listen: Option<String>,
    pub connect: Option<String>,
    pub state_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Settings {
    pub fn resolve(file: &FileConfig, flags: Overrides) -> Result<Self, CliError> {
        let delta = match (flags.delta, file.get("delta")) {
            (Some(d), _) => d,
            (None, Some(v)) => parse_u64("delta", v)?,
            (None, None) => mec_auth::handshake::DEFAULT_DELTA_SECS,
        };
        if delta == 0 {
            return Err(CliError::config("delta must be at least 1 second"));
        }
        let seed = match (flags.seed, file.get("seed")) {
            (Some(s), _) => Some(s),
            (None, Some(v)) => Some(parse_u64("seed", v)?),
            (None, None) => None,
        };
        Ok(Settings {
            curve: flags.curve.or_else(|| file.get("curve").map(str::to_string)),
            delta,
            listen: flags.listen.or_else(|| file.get("listen").map(str::to_string)),
            connect: flags.connect.or_else(|| file.get("connect").map(str::to_string)),
            state_dir: flags
                .state_dir
                .or_else(|| file.get("state_dir").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_STATE_DIR)),
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dashes() {
        let f = FileConfig::parse("# c\ncurve = toy17\nstate-dir=/tmp/x # trailing\n\n").unwrap();
        assert_eq!(f.get("curve"), Some("toy17"));
        assert_eq!(f.get("state_dir"), Some("/tmp/x"));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(FileConfig::parse("colour=red"), Err(CliError::Config(_))));
        assert!(matches!(FileConfig::parse("no equals"), Err(CliError::Config(_))));
    }

    #[test]
    fn flags_override_file() {
        let f = FileConfig::parse("delta=9\nseed=4\ncurve=secp256k1").unwrap();
        let s = Settings::resolve(&f, Overrides { delta: Some(3), ..Default::default() }).unwrap();
        assert_eq!(s.delta, 3);
        assert_eq!(s.seed, Some(4));
        assert_eq!(s.curve.as_deref(), Some("secp256k1"));
        assert_eq!(s.state_dir, PathBuf::from(DEFAULT_STATE_DIR));
    }

    #[test]
    fn zero_delta_rejected() {
        let f = FileConfig::parse("delta=0").unwrap();
        assert!(Settings::resolve(&f, Overrides::default()).is_err());
        let f = FileConfig::parse("delta=abc").unwrap();
        assert!(Settings::resolve(&f, Overrides::default()).is_err());
    }
}
