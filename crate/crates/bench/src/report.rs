//! Run reports and their JSON and CSV forms.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::load::LoadScenario;

/// Linear-interpolation quantile of sorted samples (the "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSample {
    /// Seconds since the first scheduled request.
    pub t: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: LoadScenario,
    pub offered: u64,
    pub succeeded: u64,
    pub dropped: u64,
    pub failed: u64,
    /// Failure counts by reason code, drops excluded.
    pub failures: BTreeMap<String, u64>,
    /// Latency of every successful request in milliseconds, in completion order.
    pub latencies_ms: Vec<f64>,
    pub q25_ms: Option<f64>,
    pub median_ms: Option<f64>,
    pub q75_ms: Option<f64>,
    /// Successful requests per second of scheduled run time.
    pub throughput: f64,
    /// Offered requests per second actually achieved by the generator.
    pub offered_rate: f64,
    pub max_queue_depth: usize,
    /// Queue depth read right after the last request was sent.
    pub depth_after_last_send: usize,
    pub queue_samples: Vec<DepthSample>,
}

impl RunReport {
    pub fn conserved(&self) -> bool {
        self.offered == self.succeeded + self.dropped + self.failed
    }

    pub(crate) fn summarize(&mut self) {
        let mut sorted = self.latencies_ms.clone();
        sorted.sort_by(f64::total_cmp);
        self.q25_ms = quantile(&sorted, 0.25);
        self.median_ms = quantile(&sorted, 0.5);
        self.q75_ms = quantile(&sorted, 0.75);
    }
}

pub const CSV_HEADER: &str = "protocol,peers,rate,duration_s,offered,succeeded,dropped,failed,\
q25_ms,median_ms,q75_ms,throughput,max_queue_depth,depth_after_last_send";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

pub fn csv_row(r: &RunReport) -> String {
    let s = &r.scenario;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{:.3},{},{}",
        s.protocol.as_str(),
        s.peer_count,
        s.rate,
        s.duration_s,
        r.offered,
        r.succeeded,
        r.dropped,
        r.failed,
        opt(r.q25_ms),
        opt(r.median_ms),
        opt(r.q75_ms),
        r.throughput,
        r.max_queue_depth,
        r.depth_after_last_send
    )
}

pub fn write_csv(path: &Path, reports: &[RunReport]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(f, "{}", csv_row(r))?;
    }
    f.flush()
}

pub fn write_json(path: &Path, reports: &[RunReport]) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(reports).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}
