//! `overdraft` command line.
//!
//! Every subcommand is a request to the simulator service. Without
//! `--server` an in-process service is started on a loopback port.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use overdraft_client::{Client, ClientError};
use overdraft_core::bench::BenchConfig;
use overdraft_core::confidence::{AcceptancePolicy, WalkStrategy};
use overdraft_core::incentives::InterestParams;
use overdraft_core::settlement::{to_json_lines, LedgerConfig};
use overdraft_core::sybil::{AttackKind, AttackParams, VictimPolicy};
use overdraft_core::wire::{AttackRequest, EstimateRequest, InterestRequest};
use overdraft_core::{NodeId, OfflineTransaction};

#[derive(Parser)]
#[command(name = "overdraft", version, about = "Overdraft loan-network simulator")]
struct Cli {
    /// Seed for graph generation, walks, attacks and the ledger beacon.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key=value file of benchmark settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Service base URL; an embedded service is started when absent.
    #[arg(long, global = true)]
    server: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Random loan network in the network text format.
    GenGraph {
        #[arg(long)]
        nodes: usize,
    },
    /// Monte Carlo confidence; prints the histogram as `amount,count`.
    Estimate(EstimateArgs),
    /// Settle an offline transaction against a ledger file.
    Settle {
        #[command(flatten)]
        ledger: LedgerArgs,
        #[arg(long)]
        payer: u64,
        #[arg(long)]
        payee: u64,
        #[arg(long)]
        amount: u64,
        #[arg(long, default_value_t = 1)]
        tx_id: u64,
        /// Block of the view the payee relied on; defaults to the ledger height.
        #[arg(long)]
        view_at: Option<u64>,
    },
    /// Advance a ledger file by some blocks; prints the events as JSON lines.
    Advance {
        #[command(flatten)]
        ledger: LedgerArgs,
        #[arg(long, default_value_t = 1)]
        blocks: u64,
    },
    /// Total interest and per-block installments.
    Interest(InterestArgs),
    /// Sybil attack verdicts as CSV.
    Attack(AttackArgs),
    /// Timing and CI-width sweep as CSV.
    Bench,
}

#[derive(Args)]
struct EstimateArgs {
    /// Network text file.
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    payer: u64,
    #[arg(long)]
    amount: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    iterations: u64,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    max_distance: Option<u32>,
    #[arg(long)]
    no_cap: bool,
    #[arg(long)]
    no_early_stop: bool,
    /// Use the unindexed walker.
    #[arg(long)]
    naive: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Report an accept/deny decision at this minimum probability.
    #[arg(long)]
    min_probability: Option<f64>,
}

#[derive(Args)]
struct LedgerArgs {
    /// Ledger state: a JSON snapshot (`.json`) or a text dump.
    #[arg(long)]
    ledger: PathBuf,
    /// Where to write the updated snapshot; defaults to the input path with a `.json` extension.
    #[arg(long)]
    save: Option<PathBuf>,
    /// Also write `node,block,reputation` CSV here.
    #[arg(long)]
    reputation_out: Option<PathBuf>,
}

#[derive(Args)]
struct InterestArgs {
    #[arg(long, default_value_t = 500.0)]
    amount: f64,
    #[arg(long, default_value_t = 0.75)]
    rate: f64,
    #[arg(long, default_value_t = 100.0)]
    days: f64,
    #[arg(long, default_value_t = 0.05)]
    apr: f64,
    #[arg(long, default_value_t = 0.5)]
    reputation: f64,
    #[arg(long, default_value_t = 0.5)]
    midpoint: f64,
    #[arg(long, default_value_t = 20.0)]
    steepness: f64,
    /// Loan length in blocks for the installment schedule.
    #[arg(long)]
    blocks: Option<u64>,
}

#[derive(Args)]
struct AttackArgs {
    /// Attack kinds; all of them when omitted.
    #[arg(long = "kind")]
    kinds: Vec<AttackKind>,
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long, default_value_t = 0.5)]
    reputation: f64,
    #[arg(long, default_value_t = 100)]
    amount: u64,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    iterations: u64,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Client(ClientError::Api { status, .. }) if status.is_client_error() => 2,
            _ => 1,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn bench_config(cli: &Cli) -> Result<BenchConfig, CliError> {
    let mut cfg = BenchConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_kv(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(cfg)
}

struct Output {
    text: String,
    code: u8,
}

impl From<String> for Output {
    fn from(text: String) -> Self {
        Output { text, code: 0 }
    }
}

async fn connect(cli: &Cli) -> Result<Client, CliError> {
    let base = match &cli.server {
        Some(url) => url.clone(),
        None => {
            let any: SocketAddr = "127.0.0.1:0".parse().expect("loopback address");
            let addr = overdraft_service::spawn(any, LedgerConfig::default())
                .await
                .map_err(|e| CliError::Other(format!("starting embedded service: {e}")))?;
            format!("http://{addr}")
        }
    };
    Ok(Client::new(base))
}

async fn load_ledger(client: &Client, args: &LedgerArgs, seed: Option<u64>) -> Result<(), CliError> {
    let text = read(&args.ledger)?;
    if text.trim_start().starts_with('{') {
        client.restore_snapshot(text).await?;
    } else {
        let mut config = LedgerConfig::default();
        if let Some(s) = seed {
            config.beacon_seed = s;
        }
        client.load_dump(text, Some(&config)).await?;
    }
    Ok(())
}

async fn save_ledger(client: &Client, args: &LedgerArgs) -> Result<(), CliError> {
    let target = args.save.clone().unwrap_or_else(|| args.ledger.with_extension("json"));
    write(&target, &client.snapshot().await?)?;
    if let Some(path) = &args.reputation_out {
        write(path, &client.reputation_csv().await?)?;
    }
    Ok(())
}

async fn run(cli: &Cli) -> Result<Output, CliError> {
    let client = connect(cli).await?;
    match &cli.cmd {
        Cmd::GenGraph { nodes } => {
            let cfg = bench_config(cli)?;
            Ok(client.generate(*nodes, &cfg).await?.network.into())
        }
        Cmd::Estimate(a) => {
            let cfg = bench_config(cli)?;
            let mut params = cfg.walk_params();
            if let Some(v) = a.amount {
                params.transaction_amount = v;
            }
            if let Some(v) = a.decay {
                params.decay = v;
            }
            if let Some(v) = a.max_distance {
                params.max_distance = v;
            }
            params.enable_min_cap = !a.no_cap;
            params.enable_early_stop = !a.no_early_stop;
            let threshold = params.transaction_amount;
            let req = EstimateRequest {
                network: read(&a.network)?,
                payer: NodeId(a.payer),
                params,
                iterations: a.iterations,
                strategy: if a.naive { WalkStrategy::Naive } else { WalkStrategy::Indexed },
                workers: a.workers,
                thresholds: vec![threshold],
                policy: a.min_probability.map(|p| AcceptancePolicy { threshold, min_probability: p }),
            };
            let resp = client.estimate(&req).await?;
            let e = &resp.estimate;
            eprintln!(
                "mean={:.4} stddev={:.4} ci95_width={:.4} p(>={threshold})={:.4}",
                e.mean,
                e.stddev,
                e.ci95_width,
                resp.probabilities.get(&threshold).copied().unwrap_or(0.0)
            );
            if let Some(d) = resp.decision {
                eprintln!("decision={}", serde_json::to_string(&d).unwrap_or_default().trim_matches('"'));
            }
            Ok(e.histogram_csv().into())
        }
        Cmd::Settle { ledger, payer, payee, amount, tx_id, view_at } => {
            load_ledger(&client, ledger, cli.seed).await?;
            let at = match view_at {
                Some(b) => *b,
                None => client.ledger().await?.height,
            };
            let tx = OfflineTransaction::new(*tx_id, NodeId(*payer), NodeId(*payee), *amount, at);
            let report = client.settle(&tx).await?;
            save_ledger(&client, ledger).await?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
            Ok(format!("{text}\n").into())
        }
        Cmd::Advance { ledger, blocks } => {
            load_ledger(&client, ledger, cli.seed).await?;
            let resp = client.advance(*blocks).await?;
            save_ledger(&client, ledger).await?;
            eprintln!("height={}", resp.height);
            Ok(to_json_lines(&resp.events).into())
        }
        Cmd::Interest(a) => {
            let params = InterestParams {
                loan_amount: a.amount,
                loaned_percentage_rate: a.rate,
                loan_duration_days: a.days,
                annual_percentage_rate: a.apr,
                lender_reputation: a.reputation,
                midpoint: a.midpoint,
                steepness: a.steepness,
            };
            let resp = client.interest(&InterestRequest { params, duration_blocks: a.blocks }).await?;
            let mut out = format!("total_interest={:.6}\n", resp.total);
            if let Some(s) = resp.schedule {
                out.push_str(&format!("rounded_total={} per_block={}\nblock,installment\n", s.total, s.per_block));
                for (k, amount) in s.installments().enumerate() {
                    out.push_str(&format!("{k},{amount}\n"));
                }
            }
            Ok(out.into())
        }
        Cmd::Attack(a) => {
            let mut params =
                AttackParams { k: a.k, reputation: a.reputation, amount: a.amount, epsilon: a.epsilon, ..Default::default() };
            if let Some(s) = cli.seed {
                params.seed = s;
            }
            let kinds = if a.kinds.is_empty() { AttackKind::ALL.to_vec() } else { a.kinds.clone() };
            let req = AttackRequest { kinds, params, iterations: a.iterations, policy: VictimPolicy::default() };
            Ok(client.attack(&req).await?.csv.into())
        }
        Cmd::Bench => {
            let cfg = bench_config(cli)?;
            let resp = client.bench(&cfg).await?;
            let skipped = resp.rows.iter().filter(|r| r.skipped()).count();
            if skipped > 0 {
                eprintln!("{skipped} cell(s) skipped");
            }
            Ok(Output { text: resp.csv, code: if skipped > 0 { 3 } else { 0 } })
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).await.and_then(|out| {
        match &cli.out {
            Some(path) => write(path, &out.text)?,
            None => print!("{}", out.text),
        }
        Ok(out.code)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
