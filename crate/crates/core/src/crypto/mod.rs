//! Identities, certificates and result encryption.
//!
//! Signatures are Ed25519 over canonical JSON. Certificates form chains of
//! depth at most two: a self-signed trust anchor signs entity certificates.
//! Results are sealed to a certificate holder with X25519 + HKDF-SHA256 +
//! ChaCha20-Poly1305, using the Montgomery form of the holder's signing key
//! so a certificate carries a single public key.

mod cert;
mod files;
mod seal;

pub use cert::{
    verify, CertError, Certificate, Fingerprint, Identity, Signature, TrustStore, Validity,
};
pub use files::{load_certificate, load_identity, save_certificate, save_identity};
pub use seal::{encrypt_for, Ciphertext};

use thiserror::Error;

use crate::canonical::CanonicalError;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("invalid validity window: not_before {not_before} must precede not_after {not_after}")]
    InvalidValidity { not_before: u64, not_after: u64 },
    #[error("invalid public key")]
    InvalidKey,
    #[error("authenticated decryption failed")]
    Decrypt,
    #[error("encryption failed")]
    Encrypt,
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}
