//! Pairing with the gateway.

use std::time::Duration;

use smcgate_core::api::{ApiError, GatewayApi};
use smcgate_core::wire::RegistrationAck;
use smcgate_core::Failure;
use thiserror::Error;

use crate::daemon::PeerDaemon;

#[derive(Debug, Error)]
pub enum RegisterError {
    #[error("gateway rejected the registration: {0}")]
    Rejected(Failure),
    #[error("gateway unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: ApiError },
    #[error("gateway certificate: {0}")]
    Pin(String),
}

#[derive(Debug, Clone, Copy)]
pub struct Backoff {
    pub attempts: u32,
    pub initial: Duration,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            attempts: 8,
            initial: Duration::from_millis(250),
            max: Duration::from_secs(10),
        }
    }
}

/// Registers the peer's profile, retrying transport errors with
/// exponential backoff. Rejections and certificate mismatches are fatal.
/// Registering again with the same peer id updates the profile.
pub fn register(
    daemon: &PeerDaemon,
    gateway: &dyn GatewayApi,
    backoff: Backoff,
) -> Result<RegistrationAck, RegisterError> {
    let mut delay = backoff.initial;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match gateway.register(&daemon.registration()) {
            Ok(ack) => {
                daemon
                    .pin_gateway(ack.gateway_certificate.clone())
                    .map_err(RegisterError::Pin)?;
                return Ok(ack);
            }
            Err(ApiError::Rejected(f)) => return Err(RegisterError::Rejected(f)),
            Err(e) if attempt >= backoff.attempts.max(1) => {
                return Err(RegisterError::Unreachable {
                    attempts: attempt,
                    last: e,
                })
            }
            Err(e) => {
                tracing::warn!(attempt, error = %e, "registration failed, retrying");
                std::thread::sleep(delay);
                delay = (delay * 2).min(backoff.max);
            }
        }
    }
}
