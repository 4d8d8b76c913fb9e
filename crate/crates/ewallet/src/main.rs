use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ewallet::config::Config;
use ewallet::http::ADMIN_HEADER;
use ewallet::providers::SystemClock;
use ewallet::service::{self, Service};
use ewallet::{audit, scenario};

#[derive(Parser)]
#[command(name = "ewallet", version, about = "eWallet mobile-money service and admin tools")]
struct Cli {
    /// JSON config file (also EWALLET_CONFIG).
    #[arg(long, global = true, env = "EWALLET_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    listen: Option<String>,
    #[arg(long, global = true)]
    journal: Option<PathBuf>,
    /// Seed fixture applied when the journal is empty.
    #[arg(long, global = true)]
    seed: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve,
    /// Provision telco numbers and bank accounts on a running service.
    Seed {
        fixture: PathBuf,
        #[arg(long)]
        url: Option<String>,
    },
    /// Rebuild state from a journal and check every invariant.
    Replay { journal: PathBuf },
    /// Print a wallet statement from the journal.
    Statement { msisdn: String },
    /// Unlock a subscriber on a running service.
    Unlock {
        msisdn: String,
        #[arg(long)]
        url: Option<String>,
    },
    /// Run the family walkthrough end to end and print the transcript.
    Scenario {
        /// Use a running, freshly seeded service instead of starting one.
        #[arg(long)]
        url: Option<String>,
        /// Skip seeding the bundled fixture.
        #[arg(long)]
        no_seed: bool,
    },
}

fn load_config(cli: &Cli) -> Result<Config, String> {
    let mut config = Config::from_process_env(cli.config.as_deref())?;
    if let Some(l) = &cli.listen {
        config.listen = l.clone();
    }
    if let Some(j) = &cli.journal {
        config.journal = j.clone();
    }
    if let Some(s) = &cli.seed {
        config.seed = Some(s.clone());
    }
    config.validate()?;
    Ok(config)
}

fn base_url(config: &Config, url: &Option<String>) -> String {
    url.clone().unwrap_or_else(|| format!("http://{}", config.listen))
}

fn post(config: &Config, url: &str, body: serde_json::Value) -> Result<serde_json::Value, String> {
    let mut req = reqwest::blocking::Client::new().post(url).json(&body);
    if let Some(t) = &config.admin_token {
        req = req.header(ADMIN_HEADER, t);
    }
    let resp = req.send().map_err(|e| format!("{url}: {e}"))?;
    let status = resp.status();
    let v: serde_json::Value = resp.json().map_err(|e| format!("{url}: {e}"))?;
    if status.is_success() {
        Ok(v)
    } else {
        Err(format!(
            "{}: {}",
            v["code"].as_str().unwrap_or("ERROR"),
            v["message"].as_str().unwrap_or("")
        ))
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Serve => {
            let listen = config.listen.clone();
            let svc = Arc::new(Service::open(config, Arc::new(SystemClock), None).map_err(|e| e.to_string())?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&listen)
                    .await
                    .map_err(|e| format!("cannot listen on {listen}: {e}"))?;
                eprintln!("eWallet listening on {listen}");
                let interrupted = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                ewallet::http::serve_until(svc.clone(), listener, interrupted)
                    .await
                    .map_err(|e| e.to_string())?;
                svc.write_snapshot();
                eprintln!("eWallet stopped");
                Ok(())
            })
        }
        Command::Seed { fixture, url } => {
            let body = service::read_fixture(&fixture).map_err(|e| e.to_string())?;
            let url = format!("{}/admin/seed", base_url(&config, &url));
            let v = post(&config, &url, serde_json::to_value(body).map_err(|e| e.to_string())?)?;
            println!("provisioned {} records", v["provisioned"]);
            Ok(())
        }
        Command::Replay { journal } => {
            let engine = service::rebuild(&config, Arc::new(SystemClock), &journal, 0).map_err(|e| e.to_string())?;
            let report = audit::audit(&engine)?;
            println!("{report}");
            Ok(())
        }
        Command::Statement { msisdn } => {
            let engine =
                service::rebuild(&config, Arc::new(SystemClock), &config.journal, 0).map_err(|e| e.to_string())?;
            let entries = engine.statement(&msisdn, 1, u64::MAX, true).map_err(|e| e.message)?;
            let account = ewallet_core::AccountId::wallet(&ewallet_core::msisdn::normalize(&msisdn).unwrap_or(msisdn));
            let mut running = 0i64;
            for e in &entries {
                let delta = e.delta_for(&account);
                running += delta;
                println!(
                    "{:>6}  {}  {:<16}  {:>12}  {:>12}  {}",
                    e.seq,
                    e.ts.format("%Y-%m-%d %H:%M:%S"),
                    e.entry_type.as_str(),
                    engine.money(delta).render(),
                    engine.money(running).render(),
                    e.txn_id
                );
            }
            println!("{} entries, balance {}", entries.len(), engine.money(running).render());
            Ok(())
        }
        Command::Unlock { msisdn, url } => {
            let url = format!("{}/admin/unlock", base_url(&config, &url));
            let v = post(&config, &url, serde_json::json!({ "msisdn": msisdn }))?;
            println!("{}", v["message"].as_str().unwrap_or_default());
            Ok(())
        }
        Command::Scenario { url, no_seed } => {
            let mut stdout = std::io::stdout();
            let admin = config.admin_token.clone();
            match url {
                Some(u) => scenario::run(&u, admin.as_deref(), !no_seed, &mut stdout),
                None => {
                    let (u, _dir) = scenario::self_host(config)?;
                    scenario::run(&u, admin.as_deref(), !no_seed, &mut stdout)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
