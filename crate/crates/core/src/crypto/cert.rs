use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::CryptoError;
use crate::canonical::{signing_input, to_canonical_bytes, CanonicalError};
use crate::clock::Timestamp;
use crate::hexser;

/// SHA-256 of a certificate's canonical serialization.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(#[serde(with = "hexser::array")] pub [u8; 32]);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &hex::encode(self.0)[..16])
    }
}

impl FromStr for Fingerprint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = hexser::decode_lower(s)?;
        v.try_into()
            .map(Fingerprint)
            .map_err(|_| "fingerprint must be 32 bytes".to_owned())
    }
}

/// Raw signature bytes. Malformed lengths are representable and simply
/// fail verification.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(#[serde(with = "hexser")] pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = hex::encode(&self.0);
        write!(f, "Signature({})", &h[..h.len().min(16)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub not_before: Timestamp,
    pub not_after: Timestamp,
}

impl Validity {
    pub fn new(not_before: Timestamp, not_after: Timestamp) -> Result<Self, CryptoError> {
        if not_before >= not_after {
            return Err(CryptoError::InvalidValidity {
                not_before,
                not_after,
            });
        }
        Ok(Self {
            not_before,
            not_after,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    #[serde(with = "hexser::array")]
    pub public_key: [u8; 32],
    pub subject: String,
    /// Usage purpose statement shown to peers; required for client certificates.
    pub purpose: String,
    /// `None` for a self-signed trust anchor.
    pub issuer_fpr: Option<Fingerprint>,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub sig: Signature,
}

impl Certificate {
    pub fn fingerprint(&self) -> Fingerprint {
        let bytes = to_canonical_bytes(self).expect("certificate is canonically encodable");
        Fingerprint(Sha256::digest(bytes).into())
    }

    pub fn signing_input(&self) -> Vec<u8> {
        signing_input(self, &["sig"]).expect("certificate is canonically encodable")
    }

    pub fn valid_at(&self, now: Timestamp) -> bool {
        self.not_before <= now && now <= self.not_after
    }

    pub fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_bytes(&self.public_key).ok()
    }
}

/// True iff `sig` is a valid signature by `cert`'s key over exactly `message`.
pub fn verify(sig: &Signature, cert: &Certificate, message: &[u8]) -> bool {
    let Some(key) = cert.verifying_key() else {
        return false;
    };
    let Ok(bytes) = <[u8; 64]>::try_from(sig.0.as_slice()) else {
        return false;
    };
    key.verify(message, &ed25519_dalek::Signature::from_bytes(&bytes))
        .is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertError {
    #[error("issuer is not a configured trust anchor")]
    UnknownIssuer,
    #[error("self-signed certificate is not a configured trust anchor")]
    NotAnAnchor,
    #[error("certificate signature does not verify")]
    BadSignature,
    #[error("certificate outside its validity window")]
    OutsideValidity,
    #[error("issuing anchor outside its validity window")]
    AnchorOutsideValidity,
}

/// A set of self-signed anchors. Entity certificates verify when signed
/// directly by one of them.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    anchors: Vec<(Fingerprint, Certificate)>,
}

impl TrustStore {
    /// Keeps only well-formed self-signed anchors; returns the rejected ones' subjects.
    pub fn new(anchors: impl IntoIterator<Item = Certificate>) -> Result<Self, String> {
        let mut out = Vec::new();
        for a in anchors {
            if a.issuer_fpr.is_some() || !verify(&a.sig, &a, &a.signing_input()) {
                return Err(format!("{:?} is not a valid self-signed anchor", a.subject));
            }
            out.push((a.fingerprint(), a));
        }
        Ok(Self { anchors: out })
    }

    pub fn anchors(&self) -> impl Iterator<Item = &Certificate> {
        self.anchors.iter().map(|(_, c)| c)
    }

    pub fn contains(&self, fpr: &Fingerprint) -> bool {
        self.anchors.iter().any(|(f, _)| f == fpr)
    }

    pub fn verify(&self, cert: &Certificate, now: Timestamp) -> Result<(), CertError> {
        match &cert.issuer_fpr {
            None => {
                if !self.contains(&cert.fingerprint()) {
                    return Err(CertError::NotAnAnchor);
                }
                if !cert.valid_at(now) {
                    return Err(CertError::OutsideValidity);
                }
                Ok(())
            }
            Some(issuer) => {
                let (_, anchor) = self
                    .anchors
                    .iter()
                    .find(|(f, _)| f == issuer)
                    .ok_or(CertError::UnknownIssuer)?;
                if !verify(&cert.sig, anchor, &cert.signing_input()) {
                    return Err(CertError::BadSignature);
                }
                if !anchor.valid_at(now) {
                    return Err(CertError::AnchorOutsideValidity);
                }
                if !cert.valid_at(now) {
                    return Err(CertError::OutsideValidity);
                }
                Ok(())
            }
        }
    }

    pub fn is_valid(&self, cert: &Certificate, now: Timestamp) -> bool {
        self.verify(cert, now).is_ok()
    }
}

/// A certificate together with its private signing key.
#[derive(Clone)]
pub struct Identity {
    cert: Certificate,
    key: SigningKey,
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Identity")
            .field("subject", &self.cert.subject)
            .field("fingerprint", &self.cert.fingerprint())
            .finish_non_exhaustive()
    }
}

impl Identity {
    /// Creates a self-signed trust anchor.
    pub fn self_signed(subject: &str, purpose: &str, validity: Validity) -> Self {
        Self::self_signed_with_rng(subject, purpose, validity, &mut OsRng)
    }

    pub fn self_signed_with_rng<R: RngCore + CryptoRng>(
        subject: &str,
        purpose: &str,
        validity: Validity,
        rng: &mut R,
    ) -> Self {
        let key = SigningKey::generate(rng);
        let mut cert = unsigned_cert(&key, subject, purpose, None, validity);
        cert.sig = Signature(key.sign(&cert.signing_input()).to_bytes().to_vec());
        Self { cert, key }
    }

    /// Issues a new entity identity signed by this (anchor) identity.
    pub fn issue(&self, subject: &str, purpose: &str, validity: Validity) -> Self {
        self.issue_with_rng(subject, purpose, validity, &mut OsRng)
    }

    pub fn issue_with_rng<R: RngCore + CryptoRng>(
        &self,
        subject: &str,
        purpose: &str,
        validity: Validity,
        rng: &mut R,
    ) -> Self {
        let key = SigningKey::generate(rng);
        let mut cert = unsigned_cert(
            &key,
            subject,
            purpose,
            Some(self.cert.fingerprint()),
            validity,
        );
        cert.sig = self.sign(&cert.signing_input());
        Self { cert, key }
    }

    /// Reassembles an identity from stored parts; fails if the key does not
    /// match the certificate.
    pub fn from_parts(cert: Certificate, secret_key: [u8; 32]) -> Result<Self, CryptoError> {
        let key = SigningKey::from_bytes(&secret_key);
        if key.verifying_key().to_bytes() != cert.public_key {
            return Err(CryptoError::InvalidKey);
        }
        Ok(Self { cert, key })
    }

    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.cert.fingerprint()
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.key.sign(message).to_bytes().to_vec())
    }

    /// Signs the canonical encoding of `value` minus its signature fields.
    pub fn sign_value<T: Serialize + ?Sized>(
        &self,
        value: &T,
        signature_fields: &[&str],
    ) -> Result<Signature, CanonicalError> {
        Ok(self.sign(&signing_input(value, signature_fields)?))
    }

    pub(super) fn signing_key(&self) -> &SigningKey {
        &self.key
    }
}

fn unsigned_cert(
    key: &SigningKey,
    subject: &str,
    purpose: &str,
    issuer_fpr: Option<Fingerprint>,
    validity: Validity,
) -> Certificate {
    Certificate {
        public_key: key.verifying_key().to_bytes(),
        subject: subject.to_owned(),
        purpose: purpose.to_owned(),
        issuer_fpr,
        not_before: validity.not_before,
        not_after: validity.not_after,
        sig: Signature(Vec::new()),
    }
}
