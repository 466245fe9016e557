//! Peer labels: the `key = value` metadata peers advertise on pairing.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters allowed inside a label key or value.
///
/// Both the predicate grammar and labels share this token rule, which is
/// what makes every predicate printable and re-parseable.
pub fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '/' | '@' | '+' | '#')
}

pub(crate) fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_token_char)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("label key must be non-empty")]
    EmptyKey,
    #[error("label value must be non-empty")]
    EmptyValue,
    #[error("invalid character in label {0:?}")]
    InvalidChar(String),
}

/// One `key = value` pair. Keys and values are opaque, case-sensitive strings.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLabel")]
pub struct Label {
    key: String,
    value: String,
}

#[derive(Deserialize)]
struct RawLabel {
    key: String,
    value: String,
}

impl TryFrom<RawLabel> for Label {
    type Error = LabelError;

    fn try_from(raw: RawLabel) -> Result<Self, Self::Error> {
        Label::new(raw.key, raw.value)
    }
}

impl Label {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Result<Self, LabelError> {
        let key = key.into();
        let value = value.into();
        if key.is_empty() {
            return Err(LabelError::EmptyKey);
        }
        if value.is_empty() {
            return Err(LabelError::EmptyValue);
        }
        if !is_token(&key) {
            return Err(LabelError::InvalidChar(key));
        }
        if !is_token(&value) {
            return Err(LabelError::InvalidChar(value));
        }
        Ok(Self { key, value })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.key, self.value)
    }
}

pub type LabelSet = BTreeSet<Label>;

/// Builds a label set from `(key, value)` pairs, panicking on invalid input.
/// Intended for fixtures and tests.
pub fn labels<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> LabelSet {
    pairs
        .into_iter()
        .map(|(k, v)| Label::new(k, v).expect("valid label"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_reserved() {
        assert_eq!(Label::new("", "x"), Err(LabelError::EmptyKey));
        assert_eq!(Label::new("x", ""), Err(LabelError::EmptyValue));
        assert!(Label::new("a=b", "x").is_err());
        assert!(Label::new("a∈b", "x").is_err());
        assert!(Label::new("room type", "x").is_err());
        assert!(Label::new("roomtype", "kitchen").is_ok());
    }

    #[test]
    fn keys_are_case_sensitive() {
        assert_ne!(
            Label::new("Roomtype", "kitchen").unwrap(),
            Label::new("roomtype", "kitchen").unwrap()
        );
    }

    #[test]
    fn deserialization_validates() {
        let ok: Label = serde_json::from_str(r#"{"key":"level","value":"3"}"#).unwrap();
        assert_eq!(ok.value(), "3");
        assert!(serde_json::from_str::<Label>(r#"{"key":"","value":"3"}"#).is_err());
    }
}
