use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use smcgate_bench::output::{load_charts, peer_chart, write_all};
use smcgate_bench::{calibrate, launch_for, run, sweep, LoadScenario, Protocol, RunReport};

#[derive(Parser)]
#[command(name = "bench", about = "Open-loop load generator for the SMC query gateway")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value = "grant", value_parser = parse_protocol)]
    protocol: Protocol,
    /// Run length in seconds; defaults to 30 for grant, 60 for computation.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 100)]
    capacity: usize,
    #[arg(long, default_value_t = 8)]
    workers: usize,
    /// Output directory for report.json, report.csv and charts.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Permit runs shorter than the protocol minimum (smoke tests only).
    #[arg(long)]
    allow_short: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// One run at a fixed rate.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        peers: usize,
        #[arg(long)]
        rate: f64,
    },
    /// One run per offered rate.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        peers: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,50,100,170,200")]
        rates: Vec<f64>,
        /// Seconds to pause between runs.
        #[arg(long, default_value_t = 5.0)]
        cooldown: f64,
    },
    /// One run per peer count at a fixed rate.
    Scale {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
        peers: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 5.0)]
        cooldown: f64,
    },
    /// Estimates the saturated service rate.
    Calibrate {
        #[arg(long, default_value = "grant", value_parser = parse_protocol)]
        protocol: Protocol,
        #[arg(long, default_value_t = 10)]
        peers: usize,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
    },
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse()
}

fn scenario(c: &Common, peers: usize, rate: f64) -> Result<LoadScenario> {
    let duration = c.duration.unwrap_or(c.protocol.min_duration());
    let s = LoadScenario {
        queue_capacity: c.capacity,
        workers: c.workers,
        ..LoadScenario::new(c.protocol, peers, rate, duration)
    };
    if c.allow_short {
        if duration <= 0.0 {
            bail!("duration must be positive");
        }
    } else {
        s.validate()?;
    }
    Ok(s)
}

fn print(r: &RunReport) {
    let ms = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.2}"));
    println!(
        "{} peers={} rate={} offered={} ok={} dropped={} failed={} q25={} median={} q75={} ms throughput={:.2}/s max_depth={} depth_at_end={}",
        r.scenario.protocol,
        r.scenario.peer_count,
        r.scenario.rate,
        r.offered,
        r.succeeded,
        r.dropped,
        r.failed,
        ms(r.q25_ms),
        ms(r.median_ms),
        ms(r.q75_ms),
        r.throughput,
        r.max_queue_depth,
        r.depth_after_last_send,
    );
    for (reason, n) in &r.failures {
        println!("  {reason}: {n}");
    }
}

fn save(out: &Path, reports: &[RunReport], by_peers: bool) -> Result<()> {
    let mut charts = load_charts(reports);
    if by_peers {
        charts = vec![("latency_vs_peers.svg", peer_chart(reports))];
    }
    write_all(out, reports, &charts).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { common, peers, rate } => {
            let s = scenario(&common, peers, rate)?;
            let bed = launch_for(&s).context("launching testbed")?;
            let r = run(&bed, &s)?;
            print(&r);
            save(&common.out, std::slice::from_ref(&r), false)?;
        }
        Cmd::Sweep {
            common,
            peers,
            rates,
            cooldown,
        } => {
            let base = scenario(&common, peers, rates.first().copied().unwrap_or(1.0))?;
            for &r in &rates {
                base.with_rate(r).validate().or_else(|e| if common.allow_short { Ok(()) } else { Err(e) })?;
            }
            let bed = launch_for(&base).context("launching testbed")?;
            let result = sweep(&bed, &base, &rates, Duration::from_secs_f64(cooldown), |so_far| {
                if let Some(r) = so_far.last() {
                    print(r);
                }
                if let Err(e) = save(&common.out, so_far, false) {
                    eprintln!("warning: {e:#}");
                }
            });
            match result {
                Ok(reports) => save(&common.out, &reports, false)?,
                Err(e) => {
                    save(&common.out, &e.partial, false)?;
                    return Err(e.into());
                }
            }
        }
        Cmd::Scale {
            common,
            peers,
            rate,
            cooldown,
        } => {
            let mut reports = Vec::new();
            for (i, &n) in peers.iter().enumerate() {
                if i > 0 {
                    std::thread::sleep(Duration::from_secs_f64(cooldown));
                }
                let s = scenario(&common, n, rate)?;
                let bed = launch_for(&s).context("launching testbed")?;
                let r = run(&bed, &s)?;
                print(&r);
                reports.push(r);
                save(&common.out, &reports, true)?;
            }
        }
        Cmd::Calibrate {
            protocol,
            peers,
            samples,
        } => {
            let s = LoadScenario::new(protocol, peers, 1.0, protocol.min_duration());
            let bed = launch_for(&s).context("launching testbed")?;
            let rate = calibrate(&bed, protocol, samples)?;
            println!("{protocol}: {rate:.1} req/s saturated");
        }
    }
    Ok(())
}
