//! Blocking HTTP clients for the gateway and peer JSON APIs.
//!
//! Non-2xx responses whose body parses as a failure notice become
//! [`ApiError::Rejected`]; anything else becomes [`ApiError::Status`].
//! Malformed bodies report the byte offset of the first parse error.

use std::io::{BufRead, BufReader, Read};
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use smcgate_core::api::{ApiError, GatewayApi, PeerApi, PeerConnector};
use smcgate_core::wire::{
    ComputationEvent, Envelope, GrantReply, Health, Metadata, Payload, Registration,
    RegistrationAck, StartReply, Stats, VerifyReply,
};
use smcgate_core::{ComputationRequest, Failure, GrantRequest};

/// Responses larger than this are rejected.
pub const MAX_BODY: u64 = 16 << 20;

pub const NDJSON: &str = "application/x-ndjson";

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout(timeout)
        .max_idle_connections_per_host(64)
        .build()
}

fn trim(base: &str) -> String {
    base.trim_end_matches('/').to_owned()
}

fn read_body(resp: ureq::Response) -> Result<Vec<u8>, ApiError> {
    let mut buf = Vec::new();
    resp.into_reader()
        .take(MAX_BODY)
        .read_to_end(&mut buf)
        .map_err(|e| ApiError::Transport(e.to_string()))?;
    Ok(buf)
}

pub fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(body, &e))
}

fn transport(e: ureq::Error) -> Result<ureq::Response, ApiError> {
    match e {
        ureq::Error::Status(code, resp) => {
            let body = read_body(resp)?;
            match serde_json::from_slice::<Failure>(&body) {
                Ok(f) => Err(ApiError::Rejected(f)),
                Err(_) => Err(ApiError::Status {
                    code,
                    body: String::from_utf8_lossy(&body).into_owned(),
                }),
            }
        }
        ureq::Error::Transport(t) => {
            let msg = t.to_string();
            if msg.contains("timed out") {
                Err(ApiError::Timeout)
            } else {
                Err(ApiError::Transport(msg))
            }
        }
    }
}

fn get(agent: &ureq::Agent, url: &str) -> Result<ureq::Response, ApiError> {
    agent.get(url).call().or_else(transport)
}

fn post<T: Serialize + ?Sized>(agent: &ureq::Agent, url: &str, body: &T) -> Result<ureq::Response, ApiError> {
    let bytes = serde_json::to_vec(body).expect("request serializes");
    agent
        .post(url)
        .set("content-type", "application/json")
        .send_bytes(&bytes)
        .or_else(transport)
}

/// Client side of the gateway API.
#[derive(Clone)]
pub struct HttpGateway {
    base: String,
    agent: ureq::Agent,
}

impl HttpGateway {
    /// `timeout` bounds whole calls, including waiting for computation results.
    pub fn new(base: &str, timeout: Duration) -> Self {
        Self {
            base: trim(base),
            agent: agent(timeout),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }
}

/// Grant failures come back with a 4xx status and a `GrantReply` body.
fn grant_reply(r: Result<ureq::Response, ureq::Error>) -> Result<GrantReply, ApiError> {
    let resp = match r {
        Ok(resp) => resp,
        Err(ureq::Error::Status(code, resp)) => {
            let body = read_body(resp)?;
            return serde_json::from_slice::<GrantReply>(&body).map_err(|_| ApiError::Status {
                code,
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        Err(e) => return transport(e).map(|_| unreachable!("transport always errs")),
    };
    parse(&read_body(resp)?)
}

impl GatewayApi for HttpGateway {
    fn metadata(&self) -> Result<Metadata, ApiError> {
        parse(&read_body(get(&self.agent, &format!("{}/metadata", self.base))?)?)
    }

    fn request_grant(&self, req: &GrantRequest) -> Result<GrantReply, ApiError> {
        let bytes = serde_json::to_vec(req).expect("request serializes");
        grant_reply(
            self.agent
                .post(&format!("{}/grants", self.base))
                .set("content-type", "application/json")
                .send_bytes(&bytes),
        )
    }

    fn compute(
        &self,
        req: &ComputationRequest,
        on_accept: &mut dyn FnMut(&str),
    ) -> Result<ComputationEvent, ApiError> {
        let resp = match post(&self.agent, &format!("{}/computations", self.base), req) {
            Ok(r) => r,
            // Early failures (e.g. a dropped request) arrive as a single event.
            Err(ApiError::Status { body, .. }) => return parse(body.as_bytes()),
            Err(e) => return Err(e),
        };
        let mut reader = BufReader::new(resp.into_reader().take(MAX_BODY));
        let mut line = Vec::new();
        loop {
            line.clear();
            let n = reader
                .read_until(b'\n', &mut line)
                .map_err(|e| ApiError::Transport(e.to_string()))?;
            if n == 0 {
                return Err(ApiError::Transport("stream ended before a result".into()));
            }
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let event: ComputationEvent = parse(&line)?;
            match &event {
                ComputationEvent::Accepted { session_id } => on_accept(session_id),
                _ => return Ok(event),
            }
        }
    }

    fn poll(&self, session_id: &str) -> Result<ComputationEvent, ApiError> {
        parse(&read_body(get(
            &self.agent,
            &format!("{}/computations/{session_id}", self.base),
        )?)?)
    }

    fn stats(&self) -> Result<Stats, ApiError> {
        parse(&read_body(get(&self.agent, &format!("{}/stats", self.base))?)?)
    }

    fn register(&self, reg: &Registration) -> Result<RegistrationAck, ApiError> {
        parse(&read_body(post(
            &self.agent,
            &format!("{}/peers/register", self.base),
            reg,
        )?)?)
    }
}

/// Client side of one peer's API.
#[derive(Clone)]
pub struct HttpPeer {
    base: String,
    agent: ureq::Agent,
}

impl HttpPeer {
    pub fn new(base: &str, timeout: Duration) -> Self {
        Self {
            base: trim(base),
            agent: agent(timeout),
        }
    }

    fn with_agent(base: &str, agent: ureq::Agent) -> Self {
        Self {
            base: trim(base),
            agent,
        }
    }
}

impl PeerApi for HttpPeer {
    fn verify(&self, env: &Envelope) -> Result<VerifyReply, ApiError> {
        parse(&read_body(post(&self.agent, &format!("{}/sessions/verify", self.base), env)?)?)
    }

    fn start(&self, env: &Envelope) -> Result<StartReply, ApiError> {
        let url = format!("{}/sessions/{}/start", self.base, env.session_id);
        parse(&read_body(post(&self.agent, &url, env)?)?)
    }

    fn deliver(&self, env: &Envelope) -> Result<(), ApiError> {
        let leaf = match env.payload {
            Payload::Result(_) => "result",
            _ => "share",
        };
        let url = format!("{}/sessions/{}/{leaf}", self.base, env.session_id);
        post(&self.agent, &url, env).map(drop)
    }

    fn health(&self) -> Result<Health, ApiError> {
        parse(&read_body(get(&self.agent, &format!("{}/health", self.base))?)?)
    }
}

/// Resolves `http://host:port` peer addresses; connections are pooled.
#[derive(Clone)]
pub struct HttpConnector {
    agent: ureq::Agent,
}

impl HttpConnector {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
        }
    }
}

impl PeerConnector for HttpConnector {
    fn connect(&self, address: &str) -> Result<Arc<dyn PeerApi>, ApiError> {
        if !address.starts_with("http://") && !address.starts_with("https://") {
            return Err(ApiError::Transport(format!("unsupported peer address {address:?}")));
        }
        Ok(Arc::new(HttpPeer::with_agent(address, self.agent.clone())))
    }
}

pub mod server;
pub use server::{spawn, ServerHandle};
