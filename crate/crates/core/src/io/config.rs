//! Flat `key = value` configuration files with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! once; keys never read by the consumer are reported so typos surface as
//! validation errors.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
    used: RefCell<BTreeSet<String>>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.split('.').all(|part| {
            !part.is_empty() && part.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        })
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(Error::Parse { line, message: format!("expected `key = value`, got {trimmed:?}") });
            };
            let (key, value) = (key.trim(), value.trim());
            if !valid_key(key) {
                return Err(Error::Parse { line, message: format!("invalid key {key:?}") });
            }
            if let Some((_, first)) = entries.get(key) {
                return Err(Error::Parse { line, message: format!("key {key:?} already set on line {first}") });
            }
            entries.insert(key.to_string(), (value.to_string(), line));
        }
        Ok(KeyValues { entries, used: RefCell::new(BTreeSet::new()) })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let text: String = pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        Self::parse(&text)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Raw value, marking the key as used.
    pub fn raw(&self, key: &str) -> Option<&str> {
        let (v, _) = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let line = self.entries[key].1;
        v.parse()
            .map(Some)
            .map_err(|e| Error::Parse { line, message: format!("{key}: cannot parse {v:?}: {e}") })
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let line = self.entries[key].1;
        v.split(',')
            .map(|s| {
                let s = s.trim();
                s.parse().map_err(|e| Error::Parse { line, message: format!("{key}: cannot parse {s:?}: {e}") })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Keys present in the file that were never read.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.entries.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }

    /// Fails on the first unread key.
    pub fn finish(&self) -> Result<()> {
        match self.unused().first() {
            None => Ok(()),
            Some(k) => Err(Error::Parse { line: self.entries[k].1, message: format!("unknown key {k:?}") }),
        }
    }

    /// Sorted `key = value` lines; the basis of the configuration hash.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, (v, _))| format!("{k} = {v}\n")).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (v, _))| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_values_and_lists() {
        let kv = KeyValues::parse("# run\nmcmc.iterations = 100\n\n seed=7 \nexperiment.sample_sizes = 0, 30,60\n").unwrap();
        assert_eq!(kv.get::<u64>("mcmc.iterations").unwrap(), Some(100));
        assert_eq!(kv.get_or::<u64>("seed", 0).unwrap(), 7);
        assert_eq!(kv.list::<usize>("experiment.sample_sizes").unwrap(), Some(vec![0, 30, 60]));
        assert_eq!(kv.get::<f64>("missing").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn errors_name_the_line() {
        let err = KeyValues::parse("a = 1\nnot a pair\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = KeyValues::parse("a = 1\nb = 2\na = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(KeyValues::parse("Bad.Key = 1").is_err());
        assert!(KeyValues::parse("a..b = 1").is_err());
        let kv = KeyValues::parse("x = 1\ny = abc\n").unwrap();
        assert!(matches!(kv.get::<f64>("y").unwrap_err(), Error::Parse { line: 2, .. }));
        kv.get::<f64>("x").unwrap();
        assert!(kv.finish().is_ok());
        let kv = KeyValues::parse("x = 1\ntypo = 2\n").unwrap();
        kv.get::<f64>("x").unwrap();
        assert_eq!(kv.unused(), vec!["typo".to_string()]);
        assert!(matches!(kv.finish().unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn canonical_form_ignores_layout() {
        let a = KeyValues::parse("b = 2\n# c\na = 1\n").unwrap();
        let b = KeyValues::parse("a=1\n\nb =   2").unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.canonical(), "a = 1\nb = 2\n");
    }
}
