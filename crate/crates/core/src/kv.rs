//! Flat `key = value` text files shared by dataset manifests and
//! reconstruction configs.
//!
//! `#` starts a comment. A line without `=` continues the value of the
//! previous key, joined with a comma; this lets long lists span lines.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct KvFile {
    pub path: PathBuf,
    pub entries: Vec<Entry>,
}

impl KvFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    let key = k.trim().to_string();
                    if key.is_empty() {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: i + 1,
                            reason: "empty key".into(),
                        });
                    }
                    if entries.iter().any(|e| e.key == key) {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: i + 1,
                            reason: format!("duplicate key `{key}`"),
                        });
                    }
                    entries.push(Entry {
                        key,
                        value: v.trim().to_string(),
                        line: i + 1,
                    });
                }
                None => match entries.last_mut() {
                    Some(prev) => {
                        if !prev.value.is_empty() && !prev.value.ends_with(',') {
                            prev.value.push(',');
                        }
                        prev.value.push_str(line);
                    }
                    None => {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: i + 1,
                            reason: "expected `key = value`".into(),
                        })
                    }
                },
            }
        }
        Ok(KvFile {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn error(&self, entry: &Entry, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: entry.line,
            reason: reason.into(),
        }
    }

    pub fn parse_value<T: std::str::FromStr>(&self, entry: &Entry) -> Result<T> {
        entry
            .value
            .parse()
            .map_err(|_| self.error(entry, format!("invalid value `{}` for `{}`", entry.value, entry.key)))
    }
}

/// Split a comma-separated list, dropping empty items.
pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
