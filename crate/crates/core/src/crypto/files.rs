//! On-disk form of certificates (canonical JSON) and private keys.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Certificate, CryptoError, Identity};
use crate::canonical::to_canonical_bytes;
use crate::hexser;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    #[serde(with = "hexser::array")]
    secret_key: [u8; 32],
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CryptoError + '_ {
    move |source| CryptoError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_certificate(path: &Path, cert: &Certificate) -> Result<(), CryptoError> {
    let bytes = to_canonical_bytes(cert)?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn load_certificate(path: &Path) -> Result<Certificate, CryptoError> {
    let raw = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&raw).map_err(|source| CryptoError::Parse {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the certificate and, separately, the private key (mode 0600 on Unix).
pub fn save_identity(cert_path: &Path, key_path: &Path, id: &Identity) -> Result<(), CryptoError> {
    save_certificate(cert_path, id.certificate())?;
    let key = to_canonical_bytes(&KeyFile {
        secret_key: id.secret_bytes(),
    })?;
    write_private(key_path, &key).map_err(io_err(key_path))
}

#[cfg(unix)]
fn write_private(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .mode(0o600)
        .open(path)?;
    f.write_all(bytes)
}

#[cfg(not(unix))]
fn write_private(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    fs::write(path, bytes)
}

pub fn load_identity(cert_path: &Path, key_path: &Path) -> Result<Identity, CryptoError> {
    let cert = load_certificate(cert_path)?;
    let raw = fs::read(key_path).map_err(io_err(key_path))?;
    let key: KeyFile = serde_json::from_slice(&raw).map_err(|source| CryptoError::Parse {
        path: key_path.display().to_string(),
        source,
    })?;
    Identity::from_parts(cert, key.secret_key)
}
