//! Peer configuration file.
//!
//! ```toml
//! peer_id = "peer-01"
//! listen = "127.0.0.1:7101"
//! address = "http://127.0.0.1:7101"
//! gateway = "http://127.0.0.1:7000"
//! certificate = "peer-01.cert.json"
//! key = "peer-01.key.json"
//! data_dir = "data/peer-01"
//! inputs = ["power_consumption"]
//!
//! [labels]
//! type = "heater"
//! roomtype = "kitchen"
//!
//! [trust]
//! client_anchors = ["ca.cert.json"]
//! authority_anchors = ["ca.cert.json"]
//! authorities = ["gateway.cert.json"]
//! peer_anchors = ["ca.cert.json"]
//!
//! [policy]
//! min_group_size = 3
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use smcgate_core::checks::RequestTrust;
use smcgate_core::crypto::{load_certificate, load_identity};
use smcgate_core::{Certificate, CryptoError, Identity, Label, LabelSet, TrustStore};
use thiserror::Error;

use crate::daemon::{PeerSettings, PeerTrust};
use crate::policy::LocalPolicy;

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

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LabelValues {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustFiles {
    pub client_anchors: Vec<PathBuf>,
    pub authority_anchors: Vec<PathBuf>,
    pub authorities: Vec<PathBuf>,
    pub peer_anchors: Vec<PathBuf>,
    pub gateway_certificate: Option<PathBuf>,
}

fn default_protocols() -> BTreeSet<String> {
    [smcgate_core::smc::SUM.to_owned()].into()
}

fn default_backend() -> String {
    "additive".into()
}

fn default_session_timeout() -> u64 {
    10
}

fn default_retention_days() -> u64 {
    30
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerConfig {
    pub peer_id: String,
    pub listen: String,
    pub address: String,
    pub gateway: Option<String>,
    pub certificate: PathBuf,
    pub key: PathBuf,
    pub data_dir: PathBuf,
    pub inputs: BTreeSet<String>,
    #[serde(default = "default_protocols")]
    pub protocols: BTreeSet<String>,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_session_timeout")]
    pub session_timeout_secs: u64,
    #[serde(default = "default_retention_days")]
    pub retention_days: u64,
    pub labels: BTreeMap<String, LabelValues>,
    #[serde(default)]
    pub trust: TrustFiles,
    #[serde(default)]
    pub policy: LocalPolicy,
    #[serde(skip)]
    base: PathBuf,
}

impl PeerConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c: PeerConfig = toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: base.to_owned(),
            source,
        })?;
        c.base = base.to_owned();
        c.policy.validate().map_err(ConfigError::Invalid)?;
        if c.labels.is_empty() {
            return Err(ConfigError::Invalid("at least one label is required".into()));
        }
        if c.inputs.is_empty() {
            return Err(ConfigError::Invalid("at least one input is required".into()));
        }
        c.label_set()?;
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

    pub fn label_set(&self) -> Result<LabelSet, ConfigError> {
        let mut out = LabelSet::new();
        for (k, v) in &self.labels {
            let values = match v {
                LabelValues::One(s) => std::slice::from_ref(s),
                LabelValues::Many(vs) => vs.as_slice(),
            };
            for value in values {
                out.insert(
                    Label::new(k.clone(), value.clone())
                        .map_err(|e| ConfigError::Invalid(format!("label {k}: {e}")))?,
                );
            }
        }
        Ok(out)
    }

    pub fn identity(&self) -> Result<Identity, ConfigError> {
        Ok(load_identity(&self.resolve(&self.certificate), &self.resolve(&self.key))?)
    }

    fn certs(&self, paths: &[PathBuf]) -> Result<Vec<Certificate>, ConfigError> {
        paths
            .iter()
            .map(|p| load_certificate(&self.resolve(p)).map_err(ConfigError::from))
            .collect()
    }

    fn store(&self, paths: &[PathBuf], what: &str) -> Result<TrustStore, ConfigError> {
        TrustStore::new(self.certs(paths)?).map_err(|e| ConfigError::Invalid(format!("{what}: {e}")))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.data_dir)
    }

    /// Where the gateway certificate is stored once pinned.
    pub fn pinned_gateway_path(&self) -> PathBuf {
        self.data_dir().join("gateway.cert.json")
    }

    /// The configured gateway certificate, or the one pinned at pairing.
    pub fn gateway_certificate(&self) -> Result<Option<Certificate>, ConfigError> {
        if let Some(p) = &self.trust.gateway_certificate {
            return Ok(Some(load_certificate(&self.resolve(p))?));
        }
        let pinned = self.pinned_gateway_path();
        if pinned.exists() {
            return Ok(Some(load_certificate(&pinned)?));
        }
        Ok(None)
    }

    pub fn trust(&self) -> Result<PeerTrust, ConfigError> {
        Ok(PeerTrust {
            requests: RequestTrust {
                client_anchors: self.store(&self.trust.client_anchors, "client_anchors")?,
                authority_anchors: self.store(&self.trust.authority_anchors, "authority_anchors")?,
                authorities: self.certs(&self.trust.authorities)?,
            },
            peer_anchors: self.store(&self.trust.peer_anchors, "peer_anchors")?,
            gateway: match &self.trust.gateway_certificate {
                Some(p) => Some(load_certificate(&self.resolve(p))?),
                None => None,
            },
        })
    }

    pub fn settings(&self) -> Result<PeerSettings, ConfigError> {
        Ok(PeerSettings {
            peer_id: self.peer_id.clone(),
            address: self.address.clone(),
            labels: self.label_set()?,
            inputs: self.inputs.clone(),
            protocols: self.protocols.clone(),
            policy: self.policy.clone(),
            session_timeout: Duration::from_secs(self.session_timeout_secs),
            pending_ttl: 600,
        })
    }
}
