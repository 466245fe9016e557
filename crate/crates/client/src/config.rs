//! Client configuration file.
//!
//! ```toml
//! gateway = "http://127.0.0.1:7000"
//! certificate = "client.cert.json"
//! key = "client.key.json"
//! grants = "grants.json"
//!
//! [trust]
//! authority_anchors = ["ca.cert.json"]
//! authorities = ["gateway.cert.json"]
//! peer_anchors = ["ca.cert.json"]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use smcgate_core::crypto::{load_certificate, load_identity};
use smcgate_core::{Certificate, Identity, TrustStore};

use crate::{ClientError, ClientTrust};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustFiles {
    #[serde(default)]
    pub authority_anchors: Vec<PathBuf>,
    #[serde(default)]
    pub authorities: Vec<PathBuf>,
    #[serde(default)]
    pub peer_anchors: Vec<PathBuf>,
}

fn default_grants() -> PathBuf {
    "grants.json".into()
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub gateway: String,
    pub certificate: PathBuf,
    pub key: PathBuf,
    #[serde(default = "default_grants")]
    pub grants: PathBuf,
    /// Bounds every call, including waiting for a computation result.
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub trust: TrustFiles,
    #[serde(skip)]
    base: PathBuf,
}

impl ClientConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ClientError> {
        let mut c: ClientConfig =
            toml::from_str(text).map_err(|e| ClientError::Store(format!("config: {e}")))?;
        c.base = base.to_owned();
        if c.trust.authorities.is_empty() {
            return Err(ClientError::Store("config: trust.authorities must not be empty".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Store(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base.join(p)
        }
    }

    pub fn identity(&self) -> Result<Identity, ClientError> {
        load_identity(&self.resolve(&self.certificate), &self.resolve(&self.key))
            .map_err(|e| ClientError::Store(e.to_string()))
    }

    pub fn grants_path(&self) -> PathBuf {
        self.resolve(&self.grants)
    }

    fn certs(&self, paths: &[PathBuf]) -> Result<Vec<Certificate>, ClientError> {
        paths
            .iter()
            .map(|p| load_certificate(&self.resolve(p)).map_err(|e| ClientError::Store(e.to_string())))
            .collect()
    }

    pub fn trust(&self) -> Result<ClientTrust, ClientError> {
        let store = |v| TrustStore::new(v).map_err(ClientError::Store);
        let authorities = self.certs(&self.trust.authorities)?;
        let anchors = if self.trust.authority_anchors.is_empty() {
            authorities.iter().filter(|c| c.issuer_fpr.is_none()).cloned().collect()
        } else {
            self.certs(&self.trust.authority_anchors)?
        };
        Ok(ClientTrust {
            authority_anchors: store(anchors)?,
            authorities,
            peer_anchors: store(self.certs(&self.trust.peer_anchors)?)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let c = ClientConfig::parse(
            "gateway = \"http://gw\"\ncertificate = \"c.json\"\nkey = \"k.json\"\n[trust]\nauthorities = [\"gw.json\"]\n",
            Path::new("/home/c"),
        )
        .unwrap();
        assert_eq!(c.grants_path(), Path::new("/home/c/grants.json"));
        assert_eq!(c.timeout_secs, 120);
        assert!(ClientConfig::parse("gateway = \"x\"\ncertificate = \"c\"\nkey = \"k\"\n", Path::new(".")).is_err());
    }
}
