use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::VerifyingKey;
use hkdf::Hkdf;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use x25519_dalek::{PublicKey, StaticSecret};

use super::{Certificate, CryptoError, Identity};
use crate::hexser;

const INFO: &[u8] = b"smcgate result seal v1";

/// A payload sealed to one certificate holder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ciphertext {
    #[serde(with = "hexser::array")]
    pub ephemeral: [u8; 32],
    #[serde(with = "hexser::array")]
    pub nonce: [u8; 12],
    #[serde(with = "hexser")]
    pub data: Vec<u8>,
}

fn recipient_key(cert: &Certificate) -> Result<PublicKey, CryptoError> {
    let vk = VerifyingKey::from_bytes(&cert.public_key).map_err(|_| CryptoError::InvalidKey)?;
    Ok(PublicKey::from(vk.to_montgomery().to_bytes()))
}

fn derive_cipher(shared: &[u8], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> ChaCha20Poly1305 {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 32];
    hk.expand(INFO, &mut okm).expect("32 bytes is a valid HKDF length");
    ChaCha20Poly1305::new(Key::from_slice(&okm))
}

/// Encrypts `plaintext` so that only the holder of `cert`'s key can read it.
pub fn encrypt_for(cert: &Certificate, plaintext: &[u8]) -> Result<Ciphertext, CryptoError> {
    let recipient = recipient_key(cert)?;
    let eph = StaticSecret::random_from_rng(OsRng);
    let eph_pub = PublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&recipient);
    if !shared.was_contributory() {
        return Err(CryptoError::InvalidKey);
    }
    let cipher = derive_cipher(shared.as_bytes(), &eph_pub, recipient.as_bytes());
    let mut nonce = [0u8; 12];
    OsRng.fill_bytes(&mut nonce);
    let aad = [eph_pub.as_slice(), recipient.as_bytes()].concat();
    let data = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: &aad,
            },
        )
        .map_err(|_| CryptoError::Encrypt)?;
    Ok(Ciphertext {
        ephemeral: eph_pub,
        nonce,
        data,
    })
}

impl Identity {
    fn exchange_secret(&self) -> StaticSecret {
        StaticSecret::from(self.signing_key().to_scalar_bytes())
    }

    /// Opens a [`Ciphertext`] addressed to this identity.
    pub fn decrypt(&self, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
        let secret = self.exchange_secret();
        let me = PublicKey::from(&secret);
        let shared = secret.diffie_hellman(&PublicKey::from(ct.ephemeral));
        if !shared.was_contributory() {
            return Err(CryptoError::Decrypt);
        }
        let cipher = derive_cipher(shared.as_bytes(), &ct.ephemeral, me.as_bytes());
        let aad = [ct.ephemeral.as_slice(), me.as_bytes()].concat();
        cipher
            .decrypt(
                Nonce::from_slice(&ct.nonce),
                Payload {
                    msg: &ct.data,
                    aad: &aad,
                },
            )
            .map_err(|_| CryptoError::Decrypt)
    }
}
