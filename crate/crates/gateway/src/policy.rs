//! The gateway access policy: a deny-by-default list of allow rules.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smcgate_core::{Certificate, Fingerprint, Query, Timestamp};

/// Context a rule may depend on.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub now: Timestamp,
    pub live_peers: usize,
}

/// `"*"` or a specific value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector<T> {
    Any,
    Only(T),
}

/// Seconds since midnight UTC, parsed from `HH:MM` or `HH:MM:SS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeOfDay(pub u32);

impl FromStr for TimeOfDay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(format!("time of day {s:?} must be HH:MM or HH:MM:SS"));
        }
        let nums: Result<Vec<u32>, _> = parts.iter().map(|p| p.parse::<u32>()).collect();
        let nums = nums.map_err(|_| format!("time of day {s:?} is not numeric"))?;
        let (h, m, sec) = (nums[0], nums[1], nums.get(2).copied().unwrap_or(0));
        if h > 24 || m > 59 || sec > 59 || (h == 24 && (m, sec) != (0, 0)) {
            return Err(format!("time of day {s:?} out of range"));
        }
        Ok(TimeOfDay(h * 3600 + m * 60 + sec))
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}:{:02}", self.0 / 3600, self.0 / 60 % 60, self.0 % 60)
    }
}

impl Serialize for TimeOfDay {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeOfDay {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open daily window `[from, to)`; wraps past midnight when `from > to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    pub from: TimeOfDay,
    pub to: TimeOfDay,
}

impl TimeWindow {
    pub fn contains(&self, now: Timestamp) -> bool {
        let t = (now % 86_400) as u32;
        let (a, b) = (self.from.0, self.to.0);
        if a <= b {
            a <= t && t < b
        } else {
            t >= a || t < b
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessRule {
    pub client: Selector<Fingerprint>,
    /// Canonical query strings.
    pub queries: Selector<BTreeSet<String>>,
    pub time_of_day: Option<TimeWindow>,
    pub min_live_peers: Option<usize>,
}

impl AccessRule {
    pub fn allow_all() -> Self {
        Self {
            client: Selector::Any,
            queries: Selector::Any,
            time_of_day: None,
            min_live_peers: None,
        }
    }

    pub fn permits(&self, query: &Query, cert: &Certificate, ctx: Context) -> bool {
        let client_ok = match &self.client {
            Selector::Any => true,
            Selector::Only(f) => *f == cert.fingerprint(),
        };
        let query_ok = match &self.queries {
            Selector::Any => true,
            Selector::Only(set) => set.contains(&query.canonical_string()),
        };
        client_ok
            && query_ok
            && self.time_of_day.is_none_or(|w| w.contains(ctx.now))
            && self.min_live_peers.is_none_or(|n| ctx.live_peers >= n)
    }
}

/// Configuration form of a rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    /// `"*"` or a client certificate fingerprint.
    pub client: String,
    /// `"*"` or a list of canonical query strings.
    pub queries: QueriesSpec,
    #[serde(default)]
    pub time_of_day: Option<TimeWindow>,
    #[serde(default)]
    pub min_live_peers: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueriesSpec {
    Any(String),
    List(Vec<String>),
}

impl TryFrom<RuleSpec> for AccessRule {
    type Error = String;

    fn try_from(r: RuleSpec) -> Result<Self, Self::Error> {
        let client = if r.client == "*" {
            Selector::Any
        } else {
            Selector::Only(r.client.parse().map_err(|e| format!("client {:?}: {e}", r.client))?)
        };
        let queries = match r.queries {
            QueriesSpec::Any(s) if s == "*" => Selector::Any,
            QueriesSpec::Any(s) => Selector::Only([s].into()),
            QueriesSpec::List(v) => Selector::Only(v.into_iter().collect()),
        };
        Ok(AccessRule {
            client,
            queries,
            time_of_day: r.time_of_day,
            min_live_peers: r.min_live_peers,
        })
    }
}

/// Φ: grants a query iff some rule permits it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessPolicy {
    pub rules: Vec<AccessRule>,
}

impl AccessPolicy {
    pub fn new(rules: Vec<AccessRule>) -> Self {
        Self { rules }
    }

    pub fn permits(&self, query: &Query, cert: &Certificate, ctx: Context) -> bool {
        self.rules.iter().any(|r| r.permits(query, cert, ctx))
    }
}
