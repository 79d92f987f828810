//! Flat `key = value` config files with `#` comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, (String, usize)>,
    source: PathBuf,
}

impl ConfigMap {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, "expected `key = value`"))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(source, i + 1, "empty key"));
            }
            if entries.insert(k.to_string(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(Error::parse(source, i + 1, format!("duplicate key `{k}`")));
            }
        }
        Ok(Self {
            entries,
            source: source.to_path_buf(),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Fails on the first key not in `known`.
    pub fn ensure_known(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, (_, line))) => Err(Error::parse(&self.source, *line, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, _)) => v.parse::<T>().map(Some).map_err(|e| Error::Config {
                key: key.into(),
                message: format!("`{v}`: {e}"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Whitespace- or comma-separated numbers.
    pub fn get_floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Config {
                    key: key.into(),
                    message: format!("`{t}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Comma-separated labels; an empty value gives an empty list.
    pub fn get_list(&self, key: &str) -> Option<Vec<String>> {
        self.raw(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_comments_and_lists() {
        let c = ConfigMap::parse(
            "# header\nmax_iterations = 50\ntrim_ratio=0.2 # inline\nbiases = 1, 2 3\nnames = a, b,\n\n",
            Path::new("c.cfg"),
        )
        .unwrap();
        assert_eq!(c.get::<usize>("max_iterations").unwrap(), Some(50));
        assert_eq!(c.get::<f64>("trim_ratio").unwrap(), Some(0.2));
        assert_eq!(c.get_floats("biases").unwrap(), Some(vec![1.0, 2.0, 3.0]));
        assert_eq!(c.get_list("names"), Some(vec!["a".into(), "b".into()]));
        assert_eq!(c.get::<f64>("missing").unwrap(), None);
        assert!(c.ensure_known(&["max_iterations", "trim_ratio", "biases", "names"]).is_ok());
        assert!(c.ensure_known(&["max_iterations"]).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            ConfigMap::parse("a = 1\nnot a pair\n", Path::new("c")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(ConfigMap::parse("a = 1\na = 2\n", Path::new("c")).is_err());
        let c = ConfigMap::parse("n = abc\n", Path::new("c")).unwrap();
        assert!(matches!(c.get::<usize>("n"), Err(Error::Config { .. })));
    }
}
