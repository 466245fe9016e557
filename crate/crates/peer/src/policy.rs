//! The peer's local privacy policy and request re-verification.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use smcgate_core::checks::{check_computation_request, Rejected, RequestTrust};
use smcgate_core::{Check, ComputationRequest, Failure, Fingerprint, Reason, Timestamp};

const HOUR: u64 = 3600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalPolicy {
    /// When set, only these client certificate fingerprints may query.
    pub allowed_client_fprs: Option<BTreeSet<Fingerprint>>,
    /// When set, only clients declaring one of these purposes may query.
    pub allowed_purposes: Option<BTreeSet<String>>,
    pub min_group_size: usize,
    /// Seconds a computation request stays fresh.
    pub max_request_age: u64,
    pub max_requests_per_client_per_hour: u32,
}

impl Default for LocalPolicy {
    fn default() -> Self {
        Self {
            allowed_client_fprs: None,
            allowed_purposes: None,
            min_group_size: 3,
            max_request_age: 120,
            max_requests_per_client_per_hour: 600,
        }
    }
}

impl LocalPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_group_size == 0 {
            return Err("min_group_size must be at least 1".into());
        }
        if self.max_request_age == 0 {
            return Err("max_request_age must be positive".into());
        }
        if self.max_requests_per_client_per_hour == 0 {
            return Err("max_requests_per_client_per_hour must be positive".into());
        }
        Ok(())
    }
}

/// Sliding one-hour window of accepted requests per client.
#[derive(Debug, Default)]
pub struct RateLimiter {
    seen: Mutex<HashMap<Fingerprint, VecDeque<Timestamp>>>,
}

impl RateLimiter {
    /// Records a request at `now` unless the client already has `limit`
    /// requests inside the window.
    pub fn try_acquire(&self, client: Fingerprint, now: Timestamp, limit: u32) -> bool {
        let mut seen = self.seen.lock().expect("rate limiter lock");
        let q = seen.entry(client).or_default();
        while q.front().is_some_and(|&t| t + HOUR <= now) {
            q.pop_front();
        }
        if q.len() >= limit as usize {
            return false;
        }
        q.push_back(now);
        true
    }
}

fn local(reason: Reason) -> Rejected {
    Rejected {
        check: Check::LocalPolicy,
        failure: Failure::new(reason),
    }
}

/// Evaluates the local policy. The rate-limit slot is only consumed when
/// every other rule passes.
pub fn check_local_policy(
    policy: &LocalPolicy,
    limiter: &RateLimiter,
    r: &ComputationRequest,
    group_size: usize,
    now: Timestamp,
) -> Result<(), Rejected> {
    let client = r.certificate.fingerprint();
    if let Some(allowed) = &policy.allowed_client_fprs {
        if !allowed.contains(&client) {
            return Err(local(Reason::ClientNotAllowed));
        }
    }
    if let Some(allowed) = &policy.allowed_purposes {
        if !allowed.contains(&r.certificate.purpose) {
            return Err(local(Reason::PurposeNotAllowed));
        }
    }
    if group_size < policy.min_group_size {
        return Err(local(Reason::GroupTooSmall));
    }
    if now.abs_diff(r.timestamp) > policy.max_request_age {
        return Err(local(Reason::StaleRequest));
    }
    if !limiter.try_acquire(client, now, policy.max_requests_per_client_per_hour) {
        return Err(local(Reason::RateLimited));
    }
    Ok(())
}

/// Full peer-side decision on a forwarded request: the gateway's formal
/// checks, re-run locally, followed by the local policy.
pub fn verify_computation_request(
    r: &ComputationRequest,
    session_group: &[String],
    now: Timestamp,
    trust: &RequestTrust,
    policy: &LocalPolicy,
    limiter: &RateLimiter,
) -> Result<(), Rejected> {
    check_computation_request(r, trust, now)?;
    check_local_policy(policy, limiter, r, session_group.len(), now)
}
