//! Writes a set of run reports as `report.json`, `report.csv` and charts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::plot::{Chart, Point};
use crate::report::{write_csv, write_json, RunReport};

fn latency_point(x: f64, r: &RunReport) -> Option<Point> {
    match (r.median_ms, r.q25_ms, r.q75_ms) {
        (Some(m), Some(lo), Some(hi)) => Some(Point::with_band(x, m, lo, hi)),
        _ => None,
    }
}

/// Groups runs by protocol and peer count, keeping run order.
fn by_setup(reports: &[RunReport]) -> BTreeMap<String, Vec<&RunReport>> {
    let mut out: BTreeMap<String, Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        let key = format!("{}, {} peers", r.scenario.protocol, r.scenario.peer_count);
        out.entry(key).or_default().push(r);
    }
    out
}

/// Charts over offered load for a rate sweep.
pub fn load_charts(reports: &[RunReport]) -> Vec<(&'static str, Chart)> {
    let groups = by_setup(reports);
    let mut latency = Chart::new(
        "Latency vs offered load (median, quartiles)",
        "offered load [req/s]",
        "latency [ms]",
    );
    let mut throughput = Chart::new(
        "Successful throughput vs offered load",
        "offered load [req/s]",
        "throughput [req/s]",
    );
    let mut depth = Chart::new("Queue depth vs offered load", "offered load [req/s]", "queue depth");
    if let Some(cap) = reports.first().map(|r| r.scenario.queue_capacity) {
        depth = depth.reference(cap as f64, "capacity");
    }
    for (name, runs) in &groups {
        latency = latency.series(
            name,
            runs.iter().filter_map(|r| latency_point(r.scenario.rate, r)).collect(),
        );
        throughput = throughput.series(
            name,
            runs.iter().map(|r| Point::new(r.scenario.rate, r.throughput)).collect(),
        );
        depth = depth
            .series(
                &format!("{name} max"),
                runs.iter().map(|r| Point::new(r.scenario.rate, r.max_queue_depth as f64)).collect(),
            )
            .series(
                &format!("{name} after last send"),
                runs.iter()
                    .map(|r| Point::new(r.scenario.rate, r.depth_after_last_send as f64))
                    .collect(),
            );
    }
    let offered: Vec<Point> = reports.iter().map(|r| Point::new(r.scenario.rate, r.scenario.rate)).collect();
    throughput = throughput.series("offered", offered);
    vec![
        ("latency_vs_load.svg", latency),
        ("throughput_vs_load.svg", throughput),
        ("queue_depth_vs_load.svg", depth),
    ]
}

/// Latency over peer count at fixed load.
pub fn peer_chart(reports: &[RunReport]) -> Chart {
    let mut by_protocol: BTreeMap<String, Vec<Point>> = BTreeMap::new();
    for r in reports {
        if let Some(p) = latency_point(r.scenario.peer_count as f64, r) {
            by_protocol
                .entry(format!("{} @ {} req/s", r.scenario.protocol, r.scenario.rate))
                .or_default()
                .push(p);
        }
    }
    by_protocol.into_iter().fold(
        Chart::new("Latency vs peer count (median, quartiles)", "peers", "latency [ms]"),
        |c, (name, pts)| c.series(&name, pts),
    )
}

/// Writes reports and charts into `dir`; returns the written paths.
pub fn write_all(dir: &Path, reports: &[RunReport], charts: &[(&str, Chart)]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = vec![dir.join("report.json"), dir.join("report.csv")];
    write_json(&written[0], reports)?;
    write_csv(&written[1], reports)?;
    for (name, chart) in charts {
        let p = dir.join(name);
        std::fs::write(&p, chart.to_svg())?;
        written.push(p);
    }
    Ok(written)
}
