//! Gateway configuration file.
//!
//! ```toml
//! listen = "127.0.0.1:7000"
//! certificate = "gateway.cert.json"
//! key = "gateway.key.json"
//! enumerate = true
//!
//! [trust]
//! client_anchors = ["ca.cert.json"]
//! peer_anchors = ["ca.cert.json"]
//!
//! [[queries]]
//! predicate = "roomtype = kitchen"
//! preselector = "last_hour"
//! preprocessor = "average"
//! protocol = "sum"
//! input = "power_consumption"
//!
//! [[templates]]
//! input = "power_consumption"
//! preselector = "last_value"
//! preprocessor = "sum"
//!
//! [[rules]]
//! client = "*"
//! queries = "*"
//! time_of_day = { from = "06:00", to = "22:00" }
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Without `authority_certificate`/`authority_key` the gateway key signs
//! grants and the gateway certificate is the only trusted authority.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use smcgate_core::checks::RequestTrust;
use smcgate_core::crypto::{load_certificate, load_identity};
use smcgate_core::{Certificate, CryptoError, Identity, Query, TrustStore};
use thiserror::Error;

use crate::policy::{AccessPolicy, AccessRule, RuleSpec};
use crate::service::{GatewaySettings, GatewayTrust, QueryTemplate};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustFiles {
    #[serde(default)]
    pub client_anchors: Vec<PathBuf>,
    /// Anchors for authority certificates; defaults to the authorities themselves.
    #[serde(default)]
    pub authority_anchors: Vec<PathBuf>,
    #[serde(default)]
    pub authorities: Vec<PathBuf>,
    #[serde(default)]
    pub peer_anchors: Vec<PathBuf>,
}

fn d_capacity() -> usize {
    100
}
fn d_workers() -> usize {
    8
}
fn d_peer_timeout() -> u64 {
    10
}
fn d_session_timeout() -> u64 {
    30
}
fn d_lifetime() -> u64 {
    3600
}
fn d_group() -> usize {
    3
}
fn d_liveness() -> u64 {
    60
}
fn d_probe() -> u64 {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: String,
    pub certificate: PathBuf,
    pub key: PathBuf,
    pub authority_certificate: Option<PathBuf>,
    pub authority_key: Option<PathBuf>,
    #[serde(default = "d_capacity")]
    pub queue_capacity: usize,
    #[serde(default = "d_workers")]
    pub workers: usize,
    #[serde(default = "d_peer_timeout")]
    pub peer_timeout_secs: u64,
    #[serde(default = "d_session_timeout")]
    pub session_timeout_secs: u64,
    #[serde(default = "d_lifetime")]
    pub grant_lifetime_secs: u64,
    #[serde(default = "d_group")]
    pub min_publishable_group: usize,
    #[serde(default = "d_liveness")]
    pub liveness_secs: u64,
    #[serde(default = "d_probe")]
    pub probe_interval_secs: u64,
    #[serde(default)]
    pub enumerate: bool,
    #[serde(default)]
    pub queries: Vec<Query>,
    #[serde(default)]
    pub templates: Vec<QueryTemplate>,
    #[serde(default)]
    pub rules: Vec<RuleSpec>,
    #[serde(default)]
    pub trust: TrustFiles,
    #[serde(skip)]
    base: PathBuf,
}

impl GatewayConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c: GatewayConfig = toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: base.to_owned(),
            source,
        })?;
        c.base = base.to_owned();
        if c.queue_capacity == 0 || c.workers == 0 {
            return Err(ConfigError::Invalid("queue_capacity and workers must be positive".into()));
        }
        if c.min_publishable_group == 0 {
            return Err(ConfigError::Invalid("min_publishable_group must be positive".into()));
        }
        if c.enumerate && c.templates.is_empty() {
            return Err(ConfigError::Invalid("enumerate needs at least one template".into()));
        }
        if c.authority_certificate.is_some() != c.authority_key.is_some() {
            return Err(ConfigError::Invalid(
                "authority_certificate and authority_key go together".into(),
            ));
        }
        c.policy()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_owned();
        Self::parse(&text, &base).map_err(|e| match e {
            ConfigError::Toml { source, .. } => ConfigError::Toml {
                path: path.to_owned(),
                source,
            },
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base.join(p)
        }
    }

    pub fn identity(&self) -> Result<Identity, ConfigError> {
        Ok(load_identity(&self.resolve(&self.certificate), &self.resolve(&self.key))?)
    }

    pub fn authority(&self) -> Result<Option<Identity>, ConfigError> {
        match (&self.authority_certificate, &self.authority_key) {
            (Some(c), Some(k)) => Ok(Some(load_identity(&self.resolve(c), &self.resolve(k))?)),
            _ => Ok(None),
        }
    }

    pub fn policy(&self) -> Result<AccessPolicy, ConfigError> {
        let rules: Result<Vec<AccessRule>, String> =
            self.rules.iter().cloned().map(AccessRule::try_from).collect();
        Ok(AccessPolicy::new(rules.map_err(ConfigError::Invalid)?))
    }

    fn certs(&self, paths: &[PathBuf]) -> Result<Vec<Certificate>, ConfigError> {
        paths
            .iter()
            .map(|p| load_certificate(&self.resolve(p)).map_err(ConfigError::from))
            .collect()
    }

    fn store(certs: Vec<Certificate>, what: &str) -> Result<TrustStore, ConfigError> {
        TrustStore::new(certs).map_err(|e| ConfigError::Invalid(format!("{what}: {e}")))
    }

    /// `signer` is the certificate that will sign grants.
    pub fn trust(&self, signer: &Certificate) -> Result<GatewayTrust, ConfigError> {
        let mut authorities = self.certs(&self.trust.authorities)?;
        if authorities.is_empty() {
            authorities.push(signer.clone());
        }
        let authority_anchors = if self.trust.authority_anchors.is_empty() {
            let mut anchors: Vec<Certificate> =
                authorities.iter().filter(|c| c.issuer_fpr.is_none()).cloned().collect();
            if anchors.len() != authorities.len() {
                return Err(ConfigError::Invalid(
                    "authority_anchors are required for authorities that are not self-signed".into(),
                ));
            }
            anchors.dedup();
            anchors
        } else {
            self.certs(&self.trust.authority_anchors)?
        };
        Ok(GatewayTrust {
            requests: RequestTrust {
                client_anchors: Self::store(self.certs(&self.trust.client_anchors)?, "client_anchors")?,
                authority_anchors: Self::store(authority_anchors, "authority_anchors")?,
                authorities,
            },
            peer_anchors: Self::store(self.certs(&self.trust.peer_anchors)?, "peer_anchors")?,
        })
    }

    pub fn settings(&self) -> GatewaySettings {
        GatewaySettings {
            queue_capacity: self.queue_capacity,
            workers: self.workers,
            peer_timeout: Duration::from_secs(self.peer_timeout_secs),
            session_timeout: Duration::from_secs(self.session_timeout_secs),
            grant_lifetime: self.grant_lifetime_secs,
            min_publishable_group: self.min_publishable_group,
            liveness: self.liveness_secs,
            queries: self.queries.clone(),
            enumerate: self.enumerate,
            templates: self.templates.clone(),
            ..GatewaySettings::default()
        }
    }
}
