use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::predicate::Predicate;

/// Time window of readings a peer feeds into its preprocessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preselector {
    LastValue,
    LastHour,
    #[serde(rename = "last_6_hours")]
    Last6Hours,
    #[serde(rename = "last_24_hours")]
    Last24Hours,
}

impl Preselector {
    pub const ALL: [Preselector; 4] = [
        Preselector::LastValue,
        Preselector::LastHour,
        Preselector::Last6Hours,
        Preselector::Last24Hours,
    ];

    /// Window length in seconds; `None` for [`Preselector::LastValue`].
    pub fn window(self) -> Option<Timestamp> {
        match self {
            Preselector::LastValue => None,
            Preselector::LastHour => Some(3600),
            Preselector::Last6Hours => Some(6 * 3600),
            Preselector::Last24Hours => Some(24 * 3600),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preselector::LastValue => "last_value",
            Preselector::LastHour => "last_hour",
            Preselector::Last6Hours => "last_6_hours",
            Preselector::Last24Hours => "last_24_hours",
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Preselector::LastValue => "the last value",
            Preselector::LastHour => "the last hour",
            Preselector::Last6Hours => "the last 6 hours",
            Preselector::Last24Hours => "the last 24 hours",
        }
    }
}

/// Per-peer aggregation collapsing a window into one contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessor {
    Min,
    Max,
    Sum,
    #[serde(alias = "avg")]
    Average,
}

impl Preprocessor {
    pub const ALL: [Preprocessor; 4] = [
        Preprocessor::Min,
        Preprocessor::Max,
        Preprocessor::Sum,
        Preprocessor::Average,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preprocessor::Min => "min",
            Preprocessor::Max => "max",
            Preprocessor::Sum => "sum",
            Preprocessor::Average => "average",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} {value:?}")]
pub struct UnknownVariant {
    kind: &'static str,
    value: String,
}

impl FromStr for Preselector {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preselector::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownVariant {
                kind: "preselector",
                value: s.to_owned(),
            })
    }
}

impl FromStr for Preprocessor {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "avg" {
            return Ok(Preprocessor::Average);
        }
        Preprocessor::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownVariant {
                kind: "preprocessor",
                value: s.to_owned(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("invalid protocol identifier {0:?}")]
    Protocol(String),
    #[error("invalid input identifier {0:?}")]
    Input(String),
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// A five-field declarative computation description.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawQuery")]
pub struct Query {
    pub predicate: Predicate,
    pub preselector: Preselector,
    pub preprocessor: Preprocessor,
    pub protocol: String,
    pub input: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    predicate: Predicate,
    preselector: Preselector,
    preprocessor: Preprocessor,
    protocol: String,
    input: String,
}

impl TryFrom<RawQuery> for Query {
    type Error = QueryError;

    fn try_from(raw: RawQuery) -> Result<Self, Self::Error> {
        Query::new(
            raw.predicate,
            raw.preselector,
            raw.preprocessor,
            raw.protocol,
            raw.input,
        )
    }
}

impl Query {
    pub fn new(
        predicate: Predicate,
        preselector: Preselector,
        preprocessor: Preprocessor,
        protocol: impl Into<String>,
        input: impl Into<String>,
    ) -> Result<Self, QueryError> {
        let protocol = protocol.into();
        let input = input.into();
        if !is_identifier(&protocol) {
            return Err(QueryError::Protocol(protocol));
        }
        if !is_identifier(&input) {
            return Err(QueryError::Input(input));
        }
        Ok(Self {
            predicate,
            preselector,
            preprocessor,
            protocol,
            input,
        })
    }

    /// One-line identity of the query: `protocol|preprocessor|preselector|input|predicate`.
    ///
    /// Used for access rules, grant stores and prefix selection on the CLI.
    pub fn canonical_string(&self) -> String {
        self.to_string()
    }

    pub fn describe(&self) -> String {
        format!(
            "{} of the per-peer {} of {} over {} from peers where {}",
            self.protocol,
            self.preprocessor.as_str(),
            self.input,
            self.preselector.describe(),
            self.predicate
        )
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}|{}|{}",
            self.protocol,
            self.preprocessor.as_str(),
            self.preselector.as_str(),
            self.input,
            self.predicate
        )
    }
}

/// Exact inclusion check between a granted and a requested query.
pub fn query_matches(granted: &Query, requested: &Query) -> bool {
    granted.canonical_string() == requested.canonical_string()
}
