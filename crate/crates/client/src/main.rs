use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use smcgate_client::{select, Client, ClientConfig, ClientError, GrantStore, Outcome};
use smcgate_core::wire::PublishedQuery;
use smcgate_core::{Failure, SystemClock};
use smcgate_net::HttpGateway;

#[derive(Parser)]
#[command(name = "client", about = "Query client for the SMC gateway")]
struct Cli {
    #[arg(long, short, global = true, default_value = "client.toml")]
    config: PathBuf,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List the queries the gateway offers.
    Metadata,
    /// Obtain one grant covering all selected queries.
    Grant {
        /// Catalogue index or canonical-string prefix.
        #[arg(required = true)]
        selectors: Vec<String>,
    },
    /// Run a granted query and print the verified result.
    Compute {
        selector: String,
        /// Repeat at this many requests per second.
        #[arg(long)]
        poll: Option<f64>,
        /// Seconds to keep polling.
        #[arg(long, default_value_t = 10.0, requires = "poll")]
        duration: f64,
    },
}

fn print_catalog(queries: &[PublishedQuery]) {
    println!("{} quer{}", queries.len(), if queries.len() == 1 { "y" } else { "ies" });
    for (i, q) in queries.iter().enumerate() {
        println!("[{i}] {}", q.canonical);
        println!("    predicate:    {}", q.query.predicate);
        println!("    preselector:  {}", q.query.preselector.as_str());
        println!("    preprocessor: {}", q.query.preprocessor.as_str());
        println!("    protocol:     {}", q.query.protocol);
        println!("    input:        {}", q.query.input);
        println!("    {}", q.description);
    }
}

fn print_outcome(o: &Outcome, json: bool) {
    if json {
        println!("{}", serde_json::to_string(o).expect("outcome serializes"));
    } else {
        println!("{}  session {}  reporter {}", o.value, o.session_id, o.reporter);
    }
}

fn report(e: &ClientError, json: bool) {
    if json {
        let v = match e {
            ClientError::Failure(Failure { reason, detail }) => serde_json::json!({
                "status": "failed", "reason": reason, "detail": detail,
            }),
            other => serde_json::json!({
                "status": "error", "exit_code": other.exit_code(), "message": other.to_string(),
            }),
        };
        println!("{v}");
    } else {
        eprintln!("error: {e}");
    }
}

fn run(cli: Cli) -> Result<(), ClientError> {
    let config = ClientConfig::load(&cli.config)?;
    let gateway = HttpGateway::new(&config.gateway, Duration::from_secs(config.timeout_secs));
    let mut client = Client::new(
        config.identity()?,
        gateway,
        config.trust()?,
        GrantStore::open(&config.grants_path())?,
        std::sync::Arc::new(SystemClock),
    );
    match cli.cmd {
        Cmd::Metadata => {
            let meta = client.metadata()?;
            if cli.json {
                println!("{}", serde_json::to_string(&meta).expect("metadata serializes"));
            } else {
                print_catalog(&meta.queries);
            }
        }
        Cmd::Grant { selectors } => {
            let meta = client.metadata()?;
            let queries = selectors
                .iter()
                .map(|s| select(&meta.queries, s).map(|p| p.query.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            let grant = client.request_grant(&queries)?;
            if cli.json {
                println!("{}", serde_json::to_string(&grant).expect("grant serializes"));
            } else {
                println!("granted {} quer(ies) until {}", grant.queries.len(), grant.not_after);
                for q in &grant.queries {
                    println!("  {}", q.canonical_string());
                }
            }
        }
        Cmd::Compute {
            selector,
            poll,
            duration,
        } => {
            let meta = client.metadata()?;
            let query = select(&meta.queries, &selector)?.query.clone();
            match poll {
                None => print_outcome(&client.compute(&query)?, cli.json),
                Some(hz) => {
                    let mut attempts = 0usize;
                    let json = cli.json;
                    let ok = client.poll(&query, hz, Duration::from_secs_f64(duration), |r| {
                        attempts += 1;
                        match r {
                            Ok(o) => print_outcome(o, json),
                            Err(e) => report(e, json),
                        }
                    });
                    if !json {
                        println!("{ok}/{attempts} succeeded");
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, json);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
