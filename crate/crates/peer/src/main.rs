use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use smcgate_core::crypto::{load_certificate, save_certificate};
use smcgate_core::smc::backend_by_name;
use smcgate_core::{Clock, Fixed, SystemClock};
use smcgate_net::{HttpConnector, HttpGateway};
use smcgate_peer::log::{read_records, verify_log};
use smcgate_peer::{register, AccountabilityLog, Backoff, PeerConfig, PeerDaemon, ReadingStore};

#[derive(Parser)]
#[command(name = "peer", about = "Sensor peer daemon for the SMC query gateway")]
struct Cli {
    /// Peer configuration file.
    #[arg(long, short, global = true, default_value = "peer.toml")]
    config: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the daemon and register with the configured gateway.
    Serve,
    /// Inspect the accountability log.
    Log {
        #[command(subcommand)]
        cmd: LogCmd,
    },
    /// Append a reading to the local store.
    Ingest {
        input: String,
        value: String,
        /// Unix seconds; defaults to now.
        #[arg(long)]
        timestamp: Option<u64>,
    },
}

#[derive(Subcommand)]
enum LogCmd {
    /// Print one line per entry.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Re-verify chain links and signatures of every entry.
    Verify {
        /// Gateway certificate to verify against; defaults to the pinned one.
        #[arg(long)]
        gateway_cert: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = PeerConfig::load(&cli.config)?;
    match cli.cmd {
        Cmd::Serve => serve(config),
        Cmd::Ingest {
            input,
            value,
            timestamp,
        } => {
            let value: Fixed = value.parse().context("reading value")?;
            let ts = timestamp.unwrap_or_else(|| SystemClock.now());
            let dir = config.data_dir();
            std::fs::create_dir_all(&dir)?;
            let mut store = ReadingStore::open(&dir.join("readings.jsonl"))?;
            store.append(&input, value, ts)?;
            println!("{input} {value} @ {ts}");
            Ok(())
        }
        Cmd::Log { cmd } => {
            let path = config.data_dir().join("accountability.jsonl");
            if !path.exists() {
                bail!("no accountability log at {}", path.display());
            }
            match cmd {
                LogCmd::List { json } => {
                    for r in read_records(&path)? {
                        if json {
                            println!("{}", serde_json::to_string(&r)?);
                            continue;
                        }
                        let value = r
                            .entry
                            .result
                            .as_ref()
                            .map_or("-".to_owned(), |x| x.value.to_string());
                        println!(
                            "{:>6}  {}  client={}  group={}  result={}  query={}",
                            r.seq,
                            r.entry.session_id,
                            r.entry.request.certificate.fingerprint(),
                            r.entry.group.len(),
                            value,
                            r.entry.request.query.canonical_string(),
                        );
                    }
                    Ok(())
                }
                LogCmd::Verify { gateway_cert } => {
                    let gateway = match gateway_cert {
                        Some(p) => load_certificate(&p)?,
                        None => config
                            .gateway_certificate()?
                            .context("no gateway certificate configured or pinned; pass --gateway-cert")?,
                    };
                    let statuses = verify_log(&path, &gateway)?;
                    let bad: Vec<_> = statuses.iter().filter(|s| !s.is_ok()).collect();
                    for s in &bad {
                        println!(
                            "line {}: CORRUPT ({}){}",
                            s.line,
                            s.problem.as_deref().unwrap_or(""),
                            s.session_id.as_ref().map(|id| format!(" session {id}")).unwrap_or_default()
                        );
                    }
                    println!("{} entries, {} corrupt", statuses.len(), bad.len());
                    if !bad.is_empty() {
                        std::process::exit(1);
                    }
                    Ok(())
                }
            }
        }
    }
}

fn serve(config: PeerConfig) -> Result<()> {
    let identity = config.identity()?;
    if identity.certificate().subject != config.peer_id {
        bail!(
            "certificate subject {:?} does not match peer_id {:?}",
            identity.certificate().subject,
            config.peer_id
        );
    }
    let mut trust = config.trust()?;
    if trust.gateway.is_none() {
        trust.gateway = config.gateway_certificate()?;
    }
    let dir = config.data_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let store = ReadingStore::open(&dir.join("readings.jsonl"))?
        .with_retention(config.retention_days * 24 * 3600);
    let log = AccountabilityLog::open(&dir.join("accountability.jsonl"))?;
    let backend = backend_by_name(&config.backend)
        .with_context(|| format!("unknown backend {:?}", config.backend))?;
    if config.backend == "mock" {
        tracing::warn!("mock backend reveals contributions to the reporter; evaluation use only");
    }
    let daemon = Arc::new(PeerDaemon::new(
        identity,
        config.settings()?,
        trust,
        store,
        backend,
        Arc::new(SystemClock),
        Some(log),
    ));
    let timeout = Duration::from_secs(config.session_timeout_secs + 5);
    daemon.set_connector(Arc::new(HttpConnector::new(timeout)));

    if let Some(gw) = config.gateway.clone() {
        let d = Arc::clone(&daemon);
        let pin_path = config.pinned_gateway_path();
        std::thread::spawn(move || {
            let api = HttpGateway::new(&gw, Duration::from_secs(10));
            match register(&d, &api, Backoff::default()) {
                Ok(ack) => {
                    if let Err(e) = save_certificate(&pin_path, &ack.gateway_certificate) {
                        tracing::error!(error = %e, "could not persist gateway certificate");
                    }
                    tracing::info!(peers = ack.peers, "registered with gateway");
                }
                Err(e) => {
                    tracing::error!(error = %e, "registration failed");
                    std::process::exit(1);
                }
            }
        });
    }

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen)
            .await
            .with_context(|| format!("binding {}", config.listen))?;
        tracing::info!(addr = %config.listen, peer = %config.peer_id, "peer listening");
        smcgate_peer::server::serve(listener, daemon).await?;
        Ok(())
    })
}
