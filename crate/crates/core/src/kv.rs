//! Flat `section.key = value` text used by run configs and checkpoint manifests.

use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct KvError {
    /// 1-based line number; 0 for values that did not come from a file
    pub line: usize,
    pub message: String,
}

impl KvError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits text into entries, skipping blank lines and `#` comments.
pub fn parse(text: &str) -> Result<Vec<Entry>, KvError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| KvError::new(line, format!("expected `key = value`, got `{body}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(KvError::new(line, "empty key"));
        }
        out.push(Entry {
            line,
            key: k.to_string(),
            value: v.to_string(),
        });
    }
    Ok(out)
}

/// Parses a `section.key=value` override.
pub fn parse_override(s: &str) -> Result<Entry, KvError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| KvError::new(0, format!("override `{s}` is not `section.key=value`")))?;
    Ok(Entry {
        line: 0,
        key: k.trim().to_string(),
        value: v.trim().to_string(),
    })
}

pub fn value<T: FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: Display,
{
    v.parse::<T>()
        .map_err(|e| format!("{key}: cannot parse `{v}` ({e})"))
}

/// Comma-separated list.
pub fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String>
where
    T::Err: Display,
{
    v.split(',').map(|p| value(key, p.trim())).collect()
}

pub fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Float rendering that parses back to the same bits.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

/// A config section addressable as `section.key`.
pub trait Section {
    const NAME: &'static str;

    /// Sets one key (without the section prefix).
    fn set(&mut self, key: &str, value: &str) -> Result<(), String>;

    /// Every key with its current value, in a fixed order.
    fn entries(&self) -> Vec<(&'static str, String)>;

    fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{}.{k} = {v}\n", Self::NAME))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let e = parse("# head\n\ntrain.batch_size = 32  # batch\n a.b=c \n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].line, e[0].key.as_str(), e[0].value.as_str()), (3, "train.batch_size", "32"));
        assert_eq!((e[1].line, e[1].key.as_str(), e[1].value.as_str()), (4, "a.b", "c"));
    }

    #[test]
    fn missing_equals_reports_line() {
        let err = parse("a.b = 1\nnonsense\n").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn lists_and_floats() {
        assert_eq!(list::<usize>("k", "1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(list::<usize>("k", "1,x").is_err());
        for v in [0.1, 1e-6, 32.7, -0.3, 5e-3] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(join(&[16, 32]), "16,32");
    }

    #[test]
    fn override_syntax() {
        let e = parse_override("cqt.hop=16").unwrap();
        assert_eq!((e.key.as_str(), e.value.as_str()), ("cqt.hop", "16"));
        assert!(parse_override("cqt.hop").is_err());
    }
}
