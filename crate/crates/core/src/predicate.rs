//! Group predicates over peer labels.
//!
//! A predicate is a conjunction of atoms, each either `key = value` or
//! `key ∈ [v1, v2, ...]`. The canonical text form sorts atoms by
//! `(key, operator, values)` and values inside a membership list, so two
//! predicates are equal exactly when their canonical strings are.
//!
//! ```text
//! predicate := atom ( "∧" atom )*
//! atom      := token "=" token
//!            | token "∈" "[" token ( "," token )* "]"
//! ```

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::label::{is_token_char, Label};

const AND: char = '∧';
const IN: char = '∈';

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    Eq { key: String, value: String },
    /// Values are kept sorted and duplicate-free.
    In { key: String, values: Vec<String> },
}

impl Atom {
    pub fn key(&self) -> &str {
        match self {
            Atom::Eq { key, .. } | Atom::In { key, .. } => key,
        }
    }

    fn op_rank(&self) -> u8 {
        match self {
            Atom::Eq { .. } => 0,
            Atom::In { .. } => 1,
        }
    }

    fn values(&self) -> &[String] {
        match self {
            Atom::Eq { value, .. } => std::slice::from_ref(value),
            Atom::In { values, .. } => values,
        }
    }

    pub fn holds(&self, labels: &BTreeSet<Label>) -> bool {
        match self {
            Atom::Eq { key, value } => has_label(labels, key, value),
            Atom::In { key, values } => values.iter().any(|v| has_label(labels, key, v)),
        }
    }
}

fn has_label(labels: &BTreeSet<Label>, key: &str, value: &str) -> bool {
    // Labels were validated on construction; an invalid pair cannot be present.
    Label::new(key, value).is_ok_and(|l| labels.contains(&l))
}

impl Ord for Atom {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key()
            .cmp(other.key())
            .then(self.op_rank().cmp(&other.op_rank()))
            .then_with(|| self.values().cmp(other.values()))
    }
}

impl PartialOrd for Atom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Eq { key, value } => write!(f, "{key} = {value}"),
            Atom::In { key, values } => write!(f, "{key} {IN} [{}]", values.join(", ")),
        }
    }
}

/// A conjunction of atoms in canonical (sorted, duplicate-free) order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    atoms: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("predicate syntax error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

impl Predicate {
    /// Builds a predicate from atoms, normalizing their order.
    ///
    /// Fails on an empty atom list, an empty or duplicated membership list,
    /// or keys/values that are not valid label tokens.
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Result<Self, ParseError> {
        let mut out = Vec::new();
        for atom in atoms {
            out.push(normalize_atom(atom)?);
        }
        if out.is_empty() {
            return Err(ParseError::new(0, "predicate needs at least one atom"));
        }
        out.sort();
        out.dedup();
        Ok(Self { atoms: out })
    }

    /// `key = value`
    pub fn eq(key: &str, value: &str) -> Result<Self, ParseError> {
        Self::new([Atom::Eq {
            key: key.to_owned(),
            value: value.to_owned(),
        }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// True iff every atom holds for `labels`.
    pub fn eval(&self, labels: &BTreeSet<Label>) -> bool {
        self.atoms.iter().all(|a| a.holds(labels))
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

fn normalize_atom(atom: Atom) -> Result<Atom, ParseError> {
    let check = |s: &str| {
        if s.is_empty() || !s.chars().all(is_token_char) {
            Err(ParseError::new(0, format!("invalid token {s:?}")))
        } else {
            Ok(())
        }
    };
    match atom {
        Atom::Eq { key, value } => {
            check(&key)?;
            check(&value)?;
            Ok(Atom::Eq { key, value })
        }
        Atom::In { key, mut values } => {
            check(&key)?;
            if values.is_empty() {
                return Err(ParseError::new(0, "empty membership list"));
            }
            for v in &values {
                check(v)?;
            }
            let n = values.len();
            values.sort();
            values.dedup();
            if values.len() != n {
                return Err(ParseError::new(0, "duplicate value in membership list"));
            }
            Ok(Atom::In { key, values })
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " {AND} ")?;
            }
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

impl FromStr for Predicate {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_predicate(s)
    }
}

impl Serialize for Predicate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_predicate(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses the textual predicate form.
pub fn parse_predicate(text: &str) -> Result<Predicate, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(ParseError::new(0, "empty predicate"));
    }
    let mut atoms = vec![p.atom()?];
    loop {
        p.skip_ws();
        match p.peek() {
            None => break,
            Some(AND) => {
                p.bump();
                atoms.push(p.atom()?);
            }
            Some(c) => {
                return Err(ParseError::new(p.pos, format!("expected '{AND}', found {c:?}")));
            }
        }
    }
    let mut seen = Vec::with_capacity(atoms.len());
    for (pos, atom) in atoms {
        seen.push(normalize_atom(atom).map_err(|e| ParseError::new(pos, e.message))?);
    }
    Predicate::new(seen)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn token(&mut self, what: &str) -> Result<String, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(is_token_char) {
            self.bump();
        }
        if start == self.pos {
            return Err(match self.peek() {
                None => ParseError::new(self.pos, format!("expected {what}, found end of input")),
                Some(c) => ParseError::new(self.pos, format!("expected {what}, found {c:?}")),
            });
        }
        Ok(self.src[start..self.pos].to_owned())
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(found) if found == c => {
                self.bump();
                Ok(())
            }
            Some(found) => Err(ParseError::new(
                self.pos,
                format!("expected {c:?}, found {found:?}"),
            )),
            None => Err(ParseError::new(
                self.pos,
                format!("expected {c:?}, found end of input"),
            )),
        }
    }

    fn atom(&mut self) -> Result<(usize, Atom), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let key = self.token("label key")?;
        self.skip_ws();
        let op_pos = self.pos;
        match self.peek() {
            Some('=') => {
                self.bump();
                let value = self.token("label value")?;
                Ok((start, Atom::Eq { key, value }))
            }
            Some(IN) => {
                self.bump();
                self.expect('[')?;
                self.skip_ws();
                if self.peek() == Some(']') {
                    return Err(ParseError::new(self.pos, "empty membership list"));
                }
                let mut values = vec![self.token("label value")?];
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => {
                            self.bump();
                            values.push(self.token("label value")?);
                        }
                        Some(']') => {
                            self.bump();
                            break;
                        }
                        Some(c) => {
                            return Err(ParseError::new(
                                self.pos,
                                format!("expected ',' or ']', found {c:?}"),
                            ))
                        }
                        None => {
                            return Err(ParseError::new(self.pos, "unterminated membership list"))
                        }
                    }
                }
                Ok((start, Atom::In { key, values }))
            }
            Some(c) => Err(ParseError::new(op_pos, format!("unknown operator {c:?}"))),
            None => Err(ParseError::new(op_pos, "expected operator, found end of input")),
        }
    }
}
