//! Flat `key = value` configuration.
//!
//! Keys are namespaced by module (`trace_fit.fit_window_hz`). Lines whose
//! first non-blank character is `#` are comments. Later layers override
//! earlier ones through [`Config::overlay`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{origin}line {line}: {message}")]
    Parse {
        origin: Origin,
        line: usize,
        message: String,
    },
    #[error("{origin}line {line}: duplicate key `{key}` (first on line {first})")]
    Duplicate {
        origin: Origin,
        key: String,
        first: usize,
        line: usize,
    },
    #[error("{origin}`{key}`: {message}")]
    Value {
        origin: Origin,
        key: String,
        message: String,
    },
    #[error("{origin}unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
}

/// Where an entry came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Origin(pub Option<String>, pub Option<usize>);

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.0, self.1) {
            (Some(name), Some(line)) => write!(f, "{name}:{line}: "),
            (Some(name), None) => write!(f, "{name}: "),
            (None, Some(line)) => write!(f, "line {line}: "),
            (None, None) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    source: Option<String>,
    line: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

fn valid_key(key: &str) -> bool {
    let mut parts = key.split('.');
    let ok_part = |p: &str| {
        !p.is_empty()
            && p.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    };
    let first = parts.next().is_some_and(ok_part);
    let mut rest = 0;
    for p in parts {
        if !ok_part(p) {
            return false;
        }
        rest += 1;
    }
    first && rest >= 1
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_named(text, None)
    }

    /// Like [`Config::parse`], with `source` (usually a path) in errors.
    pub fn parse_named(text: &str, source: Option<&str>) -> Result<Self, ConfigError> {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let name = source.map(str::to_string);
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigError::Parse {
                origin: Origin(name.clone(), None),
                line,
                message,
            };
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(err(format!("malformed key `{key}`; expected `module.name`")));
            }
            if let Some(prev) = entries.get(key) {
                return Err(ConfigError::Duplicate {
                    origin: Origin(name.clone(), None),
                    key: key.to_string(),
                    first: prev.line.unwrap_or(0),
                    line,
                });
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.trim().to_string(),
                    source: name.clone(),
                    line: Some(line),
                },
            );
        }
        Ok(Config { entries })
    }

    /// Entries of `other` replace same-named entries here.
    pub fn overlay(&mut self, other: Config) {
        self.entries.extend(other.entries);
    }

    /// Sets a value that did not come from a file (e.g. a command-line flag).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.into(),
                source: Some("command line".into()),
                line: None,
            },
        );
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn origin(&self, key: &str) -> Origin {
        self.entries
            .get(key)
            .map(|e| Origin(e.source.clone(), e.line))
            .unwrap_or_default()
    }

    pub fn value_error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            origin: self.origin(key),
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Fails on the first key under `namespace.` not in `known`.
    pub fn reject_unknown(&self, namespace: &str, known: &[&str]) -> Result<(), ConfigError> {
        let prefix = format!("{namespace}.");
        for key in self.keys() {
            if let Some(name) = key.strip_prefix(&prefix) {
                if !known.contains(&name) {
                    return Err(ConfigError::UnknownKey {
                        origin: self.origin(key),
                        key: key.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| self.value_error(key, format!("`{v}`: {e}"))))
            .transpose()
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get_parsed::<f64>(key)? {
            Some(v) if !v.is_finite() => Err(self.value_error(key, "must be finite")),
            v => Ok(v),
        }
    }

    /// Comma-separated numbers; an empty value or `none` gives an empty list.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        if v.is_empty() || v.eq_ignore_ascii_case("none") {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|x| {
                let x = x.trim();
                x.parse::<f64>()
                    .ok()
                    .filter(|n| n.is_finite())
                    .ok_or_else(|| self.value_error(key, format!("`{x}` is not a finite number")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// A `lo:hi` pair list separated by commas, e.g. `0:2e6, 3.8e6:4e6`.
    pub fn get_bands(&self, key: &str) -> Result<Option<Vec<(f64, f64)>>, ConfigError> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        if v.is_empty() || v.eq_ignore_ascii_case("none") {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|band| {
                let bad = || self.value_error(key, format!("`{}` is not a `lo:hi` band", band.trim()));
                let (lo, hi) = band.split_once(':').ok_or_else(bad)?;
                let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
                let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(bad());
                }
                Ok((lo, hi))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}
