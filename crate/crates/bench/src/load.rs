//! Open-loop load generation against a [`Testbed`].
//!
//! Requests are scheduled at fixed offsets `i / rate` from the start of a
//! run and handed to the gateway's admission queue without waiting for
//! earlier ones to finish. A request sent late because the generator fell
//! behind still has its latency measured from its scheduled time.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_queue::SegQueue;
use serde::{Deserialize, Serialize};
use smcgate_core::wire::{ComputationEvent, GrantReply};
use smcgate_core::{Grant, GrantRequest, SystemClock};
use thiserror::Error;

use crate::report::{DepthSample, RunReport};
use crate::testbed::{LaunchError, Testbed, TestbedConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Grant,
    Computation,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Grant => "grant",
            Protocol::Computation => "computation",
        }
    }

    /// Shortest run whose results are comparable across scenarios.
    pub fn min_duration(self) -> f64 {
        match self {
            Protocol::Grant => 30.0,
            Protocol::Computation => 60.0,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "grant" => Ok(Protocol::Grant),
            "computation" => Ok(Protocol::Computation),
            other => Err(format!("unknown protocol {other:?} (grant, computation)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadScenario {
    pub protocol: Protocol,
    pub peer_count: usize,
    /// Offered requests per second.
    pub rate: f64,
    pub duration_s: f64,
    pub queue_capacity: usize,
    pub workers: usize,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Launch(#[from] LaunchError),
    #[error("setup: {0}")]
    Setup(String),
}

impl LoadScenario {
    pub fn new(protocol: Protocol, peer_count: usize, rate: f64, duration_s: f64) -> Self {
        Self {
            protocol,
            peer_count,
            rate,
            duration_s,
            queue_capacity: 100,
            workers: 8,
        }
    }

    /// Checks the scenario, including the minimum run length.
    pub fn validate(&self) -> Result<(), RunError> {
        self.validate_shape()?;
        let min = self.protocol.min_duration();
        if self.duration_s < min {
            return Err(RunError::Invalid(format!(
                "{} runs last at least {min} s, got {} s",
                self.protocol, self.duration_s
            )));
        }
        Ok(())
    }

    fn validate_shape(&self) -> Result<(), RunError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(RunError::Invalid(format!("rate must be positive, got {}", self.rate)));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(RunError::Invalid("duration must be positive".into()));
        }
        if self.peer_count == 0 || self.queue_capacity == 0 || self.workers == 0 {
            return Err(RunError::Invalid("peers, capacity and workers must be positive".into()));
        }
        Ok(())
    }

    pub fn with_rate(&self, rate: f64) -> Self {
        Self { rate, ..self.clone() }
    }

    pub fn testbed_config(&self) -> TestbedConfig {
        TestbedConfig {
            peers: self.peer_count,
            queue_capacity: self.queue_capacity,
            workers: self.workers,
            ..TestbedConfig::default()
        }
    }

    /// Number of requests a run offers.
    pub fn offered(&self) -> u64 {
        (self.rate * self.duration_s).floor() as u64
    }
}

/// Launches a wall-clock testbed sized for `s`.
pub fn launch_for(s: &LoadScenario) -> Result<Testbed, RunError> {
    s.validate_shape()?;
    Ok(Testbed::launch(s.testbed_config(), Arc::new(SystemClock))?)
}

/// Launches a testbed and runs one validated scenario on it.
pub fn run_scenario(s: &LoadScenario) -> Result<RunReport, RunError> {
    s.validate()?;
    let bed = launch_for(s)?;
    run(&bed, s)
}

enum Outcome {
    Ok,
    Failed(String),
}

struct Completion {
    scheduled: Instant,
    done: Instant,
    outcome: Outcome,
}

/// Source of pre-built requests so signing stays off the hot path where it can.
enum Source {
    Grant(Vec<GrantRequest>),
    Computation(Grant),
}

impl Source {
    fn prepare(bed: &Testbed, protocol: Protocol) -> Result<Self, RunError> {
        Ok(match protocol {
            Protocol::Grant => Source::Grant((0..32).map(|_| bed.grant_request()).collect()),
            Protocol::Computation => {
                let grant = bed
                    .grant()
                    .map_err(|f| RunError::Setup(format!("no grant for the computation run: {f}")))?;
                Source::Computation(grant)
            }
        })
    }
}

/// Submits request `i`; returns false when the gateway dropped it.
fn submit(bed: &Testbed, source: &Source, i: u64, scheduled: Instant, sink: &Arc<SegQueue<Completion>>) -> bool {
    let sink = Arc::clone(sink);
    let admitted = match source {
        Source::Grant(pool) => {
            let req = pool[i as usize % pool.len()].clone();
            bed.gateway.submit_grant(req, move |reply| {
                let outcome = match reply {
                    GrantReply::Granted { .. } => Outcome::Ok,
                    GrantReply::Failed { failure } => Outcome::Failed(failure.reason.as_str().into()),
                };
                sink.push(Completion {
                    scheduled,
                    done: Instant::now(),
                    outcome,
                });
            })
        }
        Source::Computation(grant) => {
            let req = bed.computation_request(grant);
            bed.gateway.submit_computation(req, move |ev| {
                let outcome = match ev {
                    ComputationEvent::Accepted { .. } => return,
                    ComputationEvent::Result { .. } => Outcome::Ok,
                    ComputationEvent::Failed { failure, .. } => Outcome::Failed(failure.reason.as_str().into()),
                };
                sink.push(Completion {
                    scheduled,
                    done: Instant::now(),
                    outcome,
                });
            })
        }
    };
    admitted.is_ok()
}

fn sampler(bed: &Testbed, start: Instant, stop: Arc<AtomicBool>, every: Duration) -> std::thread::JoinHandle<Vec<DepthSample>> {
    let gw = Arc::clone(&bed.gateway);
    std::thread::spawn(move || {
        let mut out = Vec::new();
        while !stop.load(Ordering::SeqCst) {
            out.push(DepthSample {
                t: start.elapsed().as_secs_f64(),
                depth: gw.stats().queue_depth,
            });
            std::thread::sleep(every);
        }
        out
    })
}

/// Runs `s` on an already launched testbed without checking the minimum
/// run length. The testbed must have been launched for `s`.
pub fn run(bed: &Testbed, s: &LoadScenario) -> Result<RunReport, RunError> {
    s.validate_shape()?;
    let members = bed.member_ids().len();
    if members != s.peer_count {
        return Err(RunError::Invalid(format!(
            "testbed has {members} peers, scenario wants {}",
            s.peer_count
        )));
    }
    let capacity = bed.gateway.stats().capacity;
    if capacity != s.queue_capacity || bed.gateway.settings().workers != s.workers {
        return Err(RunError::Invalid("testbed queue does not match the scenario".into()));
    }
    let source = Source::prepare(bed, s.protocol)?;
    wait_idle(bed, Duration::from_secs(60));
    bed.gateway.reset_stats();

    let n = s.offered();
    let sink: Arc<SegQueue<Completion>> = Arc::new(SegQueue::new());
    let start = Instant::now() + Duration::from_millis(20);
    let stop = Arc::new(AtomicBool::new(false));
    let sample_every = Duration::from_secs_f64((s.duration_s / 600.0).clamp(0.01, 0.5));
    let samples = sampler(bed, start, Arc::clone(&stop), sample_every);

    let mut admitted = 0u64;
    let mut dropped = 0u64;
    let mut last_send = start;
    for i in 0..n {
        let due = start + Duration::from_secs_f64(i as f64 / s.rate);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        if submit(bed, &source, i, due, &sink) {
            admitted += 1;
        } else {
            dropped += 1;
        }
        last_send = Instant::now();
    }
    let depth_after_last_send = bed.gateway.stats().queue_depth;
    let end = start + Duration::from_secs_f64(s.duration_s);
    if let Some(rest) = end.checked_duration_since(Instant::now()) {
        std::thread::sleep(rest);
    }

    let settings = bed.gateway.settings();
    let drain = settings.peer_timeout + settings.session_timeout + Duration::from_secs(10);
    let deadline = Instant::now() + drain;
    while (sink.len() as u64) < admitted && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    stop.store(true, Ordering::SeqCst);
    let queue_samples = samples.join().unwrap_or_default();
    let stats = bed.gateway.stats();

    let mut succeeded = 0u64;
    let mut failures: BTreeMap<String, u64> = BTreeMap::new();
    let mut latencies_ms = Vec::new();
    let mut finished = 0u64;
    while let Some(c) = sink.pop() {
        finished += 1;
        match c.outcome {
            Outcome::Ok => {
                succeeded += 1;
                latencies_ms.push(c.done.saturating_duration_since(c.scheduled).as_secs_f64() * 1e3);
            }
            Outcome::Failed(reason) => *failures.entry(reason).or_default() += 1,
        }
    }
    if admitted > finished {
        failures.insert("UNFINISHED".into(), admitted - finished);
    }
    let failed = failures.values().sum();
    let span = last_send.saturating_duration_since(start).as_secs_f64();
    let mut report = RunReport {
        scenario: s.clone(),
        offered: n,
        succeeded,
        dropped,
        failed,
        failures,
        latencies_ms,
        q25_ms: None,
        median_ms: None,
        q75_ms: None,
        throughput: succeeded as f64 / s.duration_s,
        offered_rate: if span > 0.0 { n.saturating_sub(1) as f64 / span } else { 0.0 },
        max_queue_depth: stats.max_queue_depth,
        depth_after_last_send,
        queue_samples,
    };
    report.summarize();
    Ok(report)
}

/// Blocks until the gateway queue is empty or `limit` passes.
pub fn wait_idle(bed: &Testbed, limit: Duration) -> bool {
    let deadline = Instant::now() + limit;
    while bed.gateway.stats().queue_depth > 0 {
        if Instant::now() >= deadline {
            return false;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    true
}

/// Saturated service rate in requests per second, measured closed-loop
/// by keeping the queue half full until `samples` requests completed.
pub fn calibrate(bed: &Testbed, protocol: Protocol, samples: u64) -> Result<f64, RunError> {
    let source = Source::prepare(bed, protocol)?;
    wait_idle(bed, Duration::from_secs(60));
    let sink: Arc<SegQueue<Completion>> = Arc::new(SegQueue::new());
    let target = (bed.gateway.stats().capacity / 2).max(1) as u64;
    let begin = Instant::now();
    let mut sent = 0u64;
    while sent < samples {
        let in_flight = sent - sink.len() as u64;
        if in_flight < target {
            if submit(bed, &source, sent, Instant::now(), &sink) {
                sent += 1;
            }
        } else {
            std::thread::sleep(Duration::from_micros(200));
        }
    }
    while (sink.len() as u64) < sent {
        std::thread::sleep(Duration::from_millis(1));
    }
    let secs = begin.elapsed().as_secs_f64();
    let mut ok = 0u64;
    while let Some(c) = sink.pop() {
        ok += u64::from(matches!(c.outcome, Outcome::Ok));
    }
    if ok == 0 {
        return Err(RunError::Setup("calibration produced no successful request".into()));
    }
    Ok(ok as f64 / secs)
}

#[derive(Debug, Error)]
#[error("sweep stopped after {} runs: {error}", partial.len())]
pub struct SweepError {
    pub partial: Vec<RunReport>,
    pub error: RunError,
}

/// One run per rate, in the given order, with `cooldown` between runs.
/// `each` sees the reports collected so far after every run.
pub fn sweep(
    bed: &Testbed,
    base: &LoadScenario,
    rates: &[f64],
    cooldown: Duration,
    mut each: impl FnMut(&[RunReport]),
) -> Result<Vec<RunReport>, SweepError> {
    let mut out = Vec::new();
    for (i, &rate) in rates.iter().enumerate() {
        if i > 0 {
            std::thread::sleep(cooldown);
        }
        match run(bed, &base.with_rate(rate)) {
            Ok(r) => out.push(r),
            Err(error) => return Err(SweepError { partial: out, error }),
        }
        each(&out);
    }
    Ok(out)
}
