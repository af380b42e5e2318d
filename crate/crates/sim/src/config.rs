//! Flat sectioned key-value configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment            (also after a value: `key = 1  # note`)
//! [section]            section names: letters, digits, `_`, `.`, `-`
//! key = value          keys as section names; values run to end of line
//! ```
//!
//! Keys before the first section header belong to the section `""`.
//! Lists are comma separated. Integer ranges are written `lo..hi` (inclusive).
//! A key may appear once per section.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }

    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed file: section -> key -> raw value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line_no, "unterminated section header"))?
                    .trim();
                if !valid_name(name) {
                    return Err(ConfigError::at(
                        line_no,
                        format!("bad section name `{name}`"),
                    ));
                }
                current = name.to_string();
                out.sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line_no, "expected `key = value`"))?;
            let key = key.trim();
            if !valid_name(key) {
                return Err(ConfigError::at(line_no, format!("bad key `{key}`")));
            }
            let section = out.sections.entry(current.clone()).or_default();
            if section.contains_key(key) {
                return Err(ConfigError::at(
                    line_no,
                    format!("duplicate key `{key}` in [{current}]"),
                ));
            }
            section.insert(
                key.to_string(),
                Entry {
                    value: value.trim().to_string(),
                    line: line_no,
                },
            );
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn sections(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn keys(&self, section: &str) -> impl Iterator<Item = &str> {
        self.sections
            .get(section)
            .into_iter()
            .flat_map(|s| s.keys().map(String::as_str))
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section)?.get(key)
    }

    /// Parses a scalar value, `None` if absent.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        e.value.parse().map(Some).map_err(|err| {
            ConfigError::at(e.line, format!("[{section}] {key} = `{}`: {err}", e.value))
        })
    }

    /// Parses a comma-separated list, `None` if absent.
    pub fn get_list<T: FromStr>(
        &self,
        section: &str,
        key: &str,
    ) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                item.parse().map_err(|err| {
                    ConfigError::at(e.line, format!("[{section}] {key}: `{item}`: {err}"))
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Parses `lo..hi` (inclusive) or a comma-separated list of integers.
    pub fn get_range(&self, section: &str, key: &str) -> Result<Option<Vec<u64>>, ConfigError> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        parse_range(&e.value)
            .map(Some)
            .map_err(|m| ConfigError::at(e.line, format!("[{section}] {key}: {m}")))
    }

    /// Fails on any key of `section` not listed in `known`.
    pub fn check_keys(&self, section: &str, known: &[&str]) -> Result<(), ConfigError> {
        if let Some(s) = self.sections.get(section) {
            for (k, e) in s {
                if !known.contains(&k.as_str()) {
                    return Err(ConfigError::at(
                        e.line,
                        format!(
                            "unknown key `{k}` in [{section}] (known: {})",
                            known.join(", ")
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `lo..hi` inclusive, or `a, b, c`.
pub fn parse_range(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|e| format!("`{lo}`: {e}"))?;
        let hi: u64 = hi.trim().parse().map_err(|e| format!("`{hi}`: {e}"))?;
        if hi < lo {
            return Err(format!("empty range {lo}..{hi}"));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
top = 1
# comment
[experiment]
methods = proposed, none   # trailing
seeds = 1..4
[planner.proposed]
scale = 12.5
";

    #[test]
    fn parses_sections_lists_and_ranges() {
        let c = ConfigFile::parse(SAMPLE).unwrap();
        assert_eq!(c.get::<u32>("", "top").unwrap(), Some(1));
        assert_eq!(
            c.get_list::<String>("experiment", "methods")
                .unwrap()
                .unwrap(),
            vec!["proposed".to_string(), "none".to_string()]
        );
        assert_eq!(
            c.get_range("experiment", "seeds").unwrap().unwrap(),
            vec![1, 2, 3, 4]
        );
        assert_eq!(
            c.get::<f64>("planner.proposed", "scale").unwrap(),
            Some(12.5)
        );
        assert_eq!(c.get::<f64>("planner", "scale").unwrap(), None);
    }

    #[test]
    fn reports_errors_with_lines() {
        let e = ConfigFile::parse("[a]\nx = 1\nx = 2\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = ConfigFile::parse("[a\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = ConfigFile::parse("just words\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let c = ConfigFile::parse("[a]\nx = pony\n").unwrap();
        assert!(c
            .get::<f64>("a", "x")
            .unwrap_err()
            .to_string()
            .contains("line 2"));
        assert!(c.check_keys("a", &["y"]).is_err());
        assert!(parse_range("5..2").is_err());
    }
}
