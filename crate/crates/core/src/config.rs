//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Every value remembers the line
//! it came from so that downstream validation can point at it. Overrides
//! given as `key=value` strings are applied after parsing, last write wins.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// 0 for values that came from overrides.
    line: usize,
}

/// Parsed key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, Entry>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigLine {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::ConfigLine {
                    line,
                    message: "empty key".into(),
                });
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(Self { entries })
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not of the form key=value")))?;
            self.set(key.trim(), value.trim());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` with `FromStr`, returning `None` when absent.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(entry) => entry.value.parse::<T>().map(Some).map_err(|e| {
                self.error_at(key, format!("invalid value `{}` for `{key}`: {e}", entry.value))
            }),
        }
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Builds an error that carries the source line of `key` when known.
    pub fn error_at(&self, key: &str, message: String) -> Error {
        match self.entries.get(key) {
            Some(Entry { line, .. }) if *line > 0 => Error::ConfigLine {
                line: *line,
                message,
            },
            _ => Error::Config(message),
        }
    }

    /// Rejects keys that are not in `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !known.contains(&key.as_str()) {
                return Err(self.error_at(key, format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let cfg = KvConfig::parse("# header\n\nT = 4 # frames\ntau=16\n").unwrap();
        assert_eq!(cfg.get_str("T"), Some("4"));
        assert_eq!(cfg.get::<u32>("tau").unwrap(), Some(16));
        assert_eq!(cfg.get::<u32>("omega").unwrap(), None);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KvConfig::parse("T = 4\nnonsense\n").unwrap_err();
        match err {
            Error::ConfigLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line_number() {
        let cfg = KvConfig::parse("\n\nT = four\n").unwrap();
        let err = cfg.get::<u32>("T").unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn overrides_last_write_wins() {
        let mut cfg = KvConfig::parse("T = 4\n").unwrap();
        cfg.apply_overrides(&["T=8", "T=16"]).unwrap();
        assert_eq!(cfg.get::<u32>("T").unwrap(), Some(16));
        assert!(cfg.apply_overrides(&["T"]).is_err());
    }
}
