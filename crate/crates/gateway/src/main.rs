use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use smcgate_core::crypto::{load_identity, save_identity};
use smcgate_core::{Clock, Identity, SystemClock, Validity};
use smcgate_gateway::{Gateway, GatewayConfig};
use smcgate_net::HttpConnector;

#[derive(Parser)]
#[command(name = "gateway", about = "SMC query gateway")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, short, default_value = "gateway.toml")]
        config: PathBuf,
    },
    /// Parse a configuration and print the resulting access rules.
    CheckConfig {
        #[arg(long, short, default_value = "gateway.toml")]
        config: PathBuf,
    },
    /// Create certificates for a deployment.
    Pki {
        #[command(subcommand)]
        cmd: PkiCmd,
    },
}

#[derive(Subcommand)]
enum PkiCmd {
    /// Create a self-signed trust anchor.
    InitCa {
        #[arg(long, default_value = "ca")]
        subject: String,
        #[arg(long, default_value_t = 3650)]
        days: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Issue a certificate signed by a trust anchor.
    Issue {
        #[arg(long)]
        ca_cert: PathBuf,
        #[arg(long)]
        ca_key: PathBuf,
        /// Peer id, client name or gateway name.
        #[arg(long)]
        subject: String,
        /// Usage purpose; required for client certificates.
        #[arg(long, default_value = "")]
        purpose: String,
        #[arg(long, default_value_t = 365)]
        days: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn validity(days: u64) -> Result<Validity> {
    let now = SystemClock.now();
    Ok(Validity::new(now.saturating_sub(300), now + days * 86_400)?)
}

fn write(out_dir: &Path, subject: &str, id: &Identity) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let cert = out_dir.join(format!("{subject}.cert.json"));
    let key = out_dir.join(format!("{subject}.key.json"));
    if cert.exists() || key.exists() {
        bail!("{} or {} already exists", cert.display(), key.display());
    }
    save_identity(&cert, &key, id)?;
    println!("{}\n{}\nfingerprint {}", cert.display(), key.display(), id.fingerprint());
    Ok(())
}

fn serve(config: GatewayConfig) -> Result<()> {
    let identity = config.identity()?;
    let authority = config.authority()?;
    let signer = authority.as_ref().unwrap_or(&identity).certificate().clone();
    let trust = config.trust(&signer)?;
    let policy = config.policy()?;
    if policy.rules.is_empty() {
        tracing::warn!("no access rules configured; every grant request will be denied");
    }
    let settings = config.settings();
    let connector = HttpConnector::new(settings.peer_timeout + settings.session_timeout);
    let gw = Gateway::new(
        identity,
        authority,
        settings,
        trust,
        policy,
        Arc::new(connector),
        Arc::new(SystemClock),
    );
    let _prober = gw.start_prober(Duration::from_secs(config.probe_interval_secs.max(1)));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen)
            .await
            .with_context(|| format!("binding {}", config.listen))?;
        tracing::info!(addr = %config.listen, fingerprint = %gw.identity().fingerprint(), "gateway listening");
        axum::serve(listener, smcgate_gateway::server::router(gw)).await?;
        Ok(())
    })
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().cmd {
        Cmd::Serve { config } => serve(GatewayConfig::load(&config)?),
        Cmd::CheckConfig { config } => {
            let c = GatewayConfig::load(&config)?;
            let id = c.identity()?;
            let authority = c.authority()?;
            c.trust(authority.as_ref().unwrap_or(&id).certificate())?;
            println!("gateway {} ({})", id.certificate().subject, id.fingerprint());
            println!("{} configured queries, enumeration {}", c.queries.len(), if c.enumerate { "on" } else { "off" });
            for r in c.policy()?.rules {
                println!("{r:?}");
            }
            Ok(())
        }
        Cmd::Pki { cmd } => match cmd {
            PkiCmd::InitCa { subject, days, out_dir } => {
                write(&out_dir, &subject, &Identity::self_signed(&subject, "", validity(days)?))
            }
            PkiCmd::Issue {
                ca_cert,
                ca_key,
                subject,
                purpose,
                days,
                out_dir,
            } => {
                let ca = load_identity(&ca_cert, &ca_key)?;
                write(&out_dir, &subject, &ca.issue(&subject, &purpose, validity(days)?))
            }
        },
    }
}
