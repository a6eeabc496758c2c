use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use tokio::net::TcpListener;
use tracing_subscriber::EnvFilter;

use overdraft_core::settlement::LedgerConfig;
use overdraft_service::{serve, AppState};

/// Loan-network simulator node.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Ledger configuration as JSON.
    #[arg(long)]
    ledger_config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::from_default_env()).init();
    let args = Args::parse();
    let config: LedgerConfig = match &args.ledger_config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).context("parsing ledger configuration")?
        }
        None => LedgerConfig::default(),
    };
    let state = AppState::new(config).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let listener = TcpListener::bind(args.listen).await.with_context(|| format!("binding {}", args.listen))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    serve(listener, state).await?;
    Ok(())
}
