//! The gateway API served in-process.
//!
//! Requests and replies are round-tripped through JSON, as over HTTP, so
//! callers exercise the same (de)serialization paths.

use std::sync::{mpsc, Arc};

use serde::de::DeserializeOwned;
use serde::Serialize;
use smcgate_core::api::{ApiError, GatewayApi};
use smcgate_core::wire::{ComputationEvent, GrantReply, Metadata, Registration, RegistrationAck, Stats};
use smcgate_core::{ComputationRequest, Failure, GrantRequest, Reason};

use crate::service::Gateway;

#[derive(Clone)]
pub struct LocalGateway {
    gw: Arc<Gateway>,
}

impl LocalGateway {
    pub fn new(gw: Arc<Gateway>) -> Self {
        Self { gw }
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gw
    }
}

fn reparse<T: Serialize, U: DeserializeOwned>(v: &T) -> Result<U, ApiError> {
    let bytes = serde_json::to_vec(v).expect("message serializes");
    serde_json::from_slice(&bytes).map_err(|e| ApiError::malformed(&bytes, &e))
}

fn gone() -> ApiError {
    ApiError::Transport("gateway dropped the request".into())
}

impl GatewayApi for LocalGateway {
    fn metadata(&self) -> Result<Metadata, ApiError> {
        reparse(&self.gw.handle_metadata())
    }

    fn request_grant(&self, req: &GrantRequest) -> Result<GrantReply, ApiError> {
        let req: GrantRequest = reparse(req)?;
        let (tx, rx) = mpsc::channel();
        if let Err(failure) = self.gw.submit_grant(req, move |reply| {
            let _ = tx.send(reply);
        }) {
            return Ok(GrantReply::Failed { failure });
        }
        reparse(&rx.recv().map_err(|_| gone())?)
    }

    fn compute(
        &self,
        req: &ComputationRequest,
        on_accept: &mut dyn FnMut(&str),
    ) -> Result<ComputationEvent, ApiError> {
        let req: ComputationRequest = reparse(req)?;
        let (tx, rx) = mpsc::channel();
        if let Err(failure) = self.gw.submit_computation(req, move |ev| {
            let _ = tx.send(ev);
        }) {
            return Ok(ComputationEvent::Failed {
                session_id: None,
                failure,
            });
        }
        loop {
            let ev: ComputationEvent = reparse(&rx.recv().map_err(|_| gone())?)?;
            match &ev {
                ComputationEvent::Accepted { session_id } => on_accept(session_id),
                _ => return Ok(ev),
            }
        }
    }

    fn poll(&self, session_id: &str) -> Result<ComputationEvent, ApiError> {
        match self.gw.poll(session_id) {
            Some(ev) => reparse(&ev),
            None => Err(ApiError::Rejected(Failure::new(Reason::UnknownSession))),
        }
    }

    fn stats(&self) -> Result<Stats, ApiError> {
        Ok(self.gw.stats())
    }

    fn register(&self, reg: &Registration) -> Result<RegistrationAck, ApiError> {
        let reg: Registration = reparse(reg)?;
        self.gw
            .handle_registration(&reg)
            .map_err(ApiError::Rejected)
            .and_then(|ack| reparse(&ack))
    }
}
