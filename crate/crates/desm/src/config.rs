//! Layered `key=value` settings: built-in defaults, then an optional config
//! file, then `DESM_*` environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::formats::{self, FormatError};

/// Prefix of environment variables that override settings.
pub const ENV_PREFIX: &str = "DESM_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: PathBuf, line: usize },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("missing required setting `{0}`")]
    Missing(String),
    #[error(transparent)]
    File(#[from] FormatError),
}

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Env => "env",
            Source::Flag => "flag",
        })
    }
}

/// Parses `key = value` lines. `#` starts a comment.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            path: path.into(),
            line: i + 1,
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                path: path.into(),
                line: i + 1,
            });
        }
        out.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(out)
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('_', "-")
}

/// Environment variable name for `key`, e.g. `lsa-k` -> `DESM_LSA_K`.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace(['-', '.'], "_"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, (String, Source)>,
}

impl Settings {
    /// Resolves every key named in `defaults`. Keys in the file that no
    /// default names are ignored with a warning.
    pub fn resolve(
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        flags: &[(&str, Option<String>)],
    ) -> Result<Settings, ConfigError> {
        let mut values: BTreeMap<String, (String, Source)> = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), (v.to_string(), Source::Default)))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
                path: path.into(),
                source,
            })?;
            for (k, v) in parse_config(&text, path)? {
                match values.get_mut(&k) {
                    Some(slot) => *slot = (v, Source::File),
                    None => log::warn!("{}: ignoring unknown key `{k}`", path.display()),
                }
            }
        }
        for (k, slot) in values.iter_mut() {
            if let Some(v) = env(&env_name(k)) {
                *slot = (v, Source::Env);
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(k.to_string(), (v.clone(), Source::Flag));
            }
        }
        Ok(Settings { values })
    }

    /// Reads overrides from the process environment.
    pub fn resolve_with_process_env(
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        flags: &[(&str, Option<String>)],
    ) -> Result<Settings, ConfigError> {
        Self::resolve(defaults, file, |k| std::env::var(k).ok(), flags)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn source(&self, key: &str) -> Option<Source> {
        self.values.get(key).map(|(_, s)| *s)
    }

    /// Typed value; an empty string counts as unset.
    pub fn get_opt<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None | Some("") => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::Invalid {
                key: key.to_string(),
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn get<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.get_opt(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.get(key)
    }

    pub fn path_opt(&self, key: &str) -> Result<Option<PathBuf>, ConfigError> {
        self.get_opt(key)
    }

    /// Comma-separated list.
    pub fn list<T>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let raw = self.raw(key).unwrap_or("");
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::Invalid {
                    key: key.to_string(),
                    value: raw.to_string(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    /// `key=value` lines in key order.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for (k, (v, _)) in &self.values {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    /// Writes [`Self::snapshot`] next to `artifact` as `<artifact>.config`.
    pub fn write_sidecar(&self, artifact: &Path) -> Result<PathBuf, FormatError> {
        let mut p = artifact.as_os_str().to_os_string();
        p.push(".config");
        let p = PathBuf::from(p);
        formats::write_text(&p, &self.snapshot())?;
        Ok(p)
    }
}
