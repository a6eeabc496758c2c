//! Random loan networks and the estimator benchmark sweep.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{estimate_confidence_with, ConfidenceError, EstimateOptions, WalkParams, WalkStrategy};
use crate::model::{quantize_reputation, AgreementId, LoanEdge, LoanNetworkView, NodeId, Tokens};

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("decay {0} outside [0, 1]")]
    Decay(f64),
    #[error("root reputation {0} outside [0, 1]")]
    RootReputation(f64),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub node_counts: Vec<usize>,
    pub iteration_counts: Vec<u64>,
    /// Incoming loan edges per node.
    pub out_degree: usize,
    pub max_distance: u32,
    pub decay: f64,
    pub loan_capacities: Vec<Tokens>,
    pub root_reputation: f64,
    pub transaction_amount: Tokens,
    pub seed: u64,
    /// `None` runs both walkers.
    pub optimized: Option<bool>,
    /// Cells whose estimated footprint exceeds this are skipped.
    pub memory_budget_mb: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            node_counts: vec![10, 100, 1_000, 10_000, 100_000, 1_000_000],
            iteration_counts: vec![100, 1_000, 10_000, 100_000],
            out_degree: 9,
            max_distance: 9,
            decay: 0.95,
            loan_capacities: vec![0, 10, 20],
            root_reputation: 0.2,
            transaction_amount: 100,
            seed: 42,
            optimized: None,
            memory_budget_mb: 3072,
        }
    }
}

fn list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.replace('_', "").parse::<T>().map_err(|_| format!("bad list item {s:?}")))
        .collect()
}

fn scalar<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.replace('_', "").parse::<T>().map_err(|_| format!("bad value {v:?}"))
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.node_counts.is_empty() {
            return Err(BenchError::Empty("node_counts"));
        }
        if self.iteration_counts.is_empty() {
            return Err(BenchError::Empty("iteration_counts"));
        }
        if self.loan_capacities.is_empty() {
            return Err(BenchError::Empty("loan_capacities"));
        }
        if self.node_counts.contains(&0) {
            return Err(BenchError::NonPositive("node_counts"));
        }
        if self.iteration_counts.contains(&0) {
            return Err(BenchError::NonPositive("iteration_counts"));
        }
        if self.transaction_amount == 0 {
            return Err(BenchError::NonPositive("transaction_amount"));
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(BenchError::Decay(self.decay));
        }
        if !(0.0..=1.0).contains(&self.root_reputation) {
            return Err(BenchError::RootReputation(self.root_reputation));
        }
        Ok(())
    }

    /// Applies a flat `key=value` file on top of `self`. Lists are comma
    /// separated; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), BenchError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| BenchError::Config { line: i + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "node_counts" => self.node_counts = list(v)?,
            "iteration_counts" => self.iteration_counts = list(v)?,
            "out_degree" => self.out_degree = scalar(v)?,
            "max_distance" => self.max_distance = scalar(v)?,
            "decay" => self.decay = scalar(v)?,
            "loan_capacities" => self.loan_capacities = list(v)?,
            "root_reputation" => self.root_reputation = scalar(v)?,
            "transaction_amount" => self.transaction_amount = scalar(v)?,
            "seed" => self.seed = scalar(v)?,
            "memory_budget_mb" => self.memory_budget_mb = scalar(v)?,
            "optimized" => {
                self.optimized = match v {
                    "both" => None,
                    _ => Some(scalar(v)?),
                }
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn walk_params(&self) -> WalkParams {
        WalkParams::new(self.transaction_amount, self.decay, self.max_distance, self.seed)
    }

    fn modes(&self) -> Vec<bool> {
        match self.optimized {
            Some(o) => vec![o],
            None => vec![true, false],
        }
    }

    /// Rough peak footprint of one cell with `n` nodes, in MiB.
    pub fn estimated_mb(&self, n: usize) -> u64 {
        let edges = (n as u64) * self.out_degree.min(n.saturating_sub(1)) as u64;
        (edges * 160 + n as u64 * 160) >> 20
    }
}

/// The payer in generated networks.
pub const ROOT: NodeId = NodeId(0);

/// Random network of `n` nodes: node 0 is the root with the configured
/// reputation, all others draw theirs uniformly. Every node borrows from
/// `out_degree` distinct other nodes (fewer if `n` is too small), with a
/// capacity drawn from `loan_capacities`.
pub fn generate_random_network(n: usize, config: &BenchConfig) -> Result<LoanNetworkView, BenchError> {
    if n == 0 {
        return Err(BenchError::NonPositive("node count"));
    }
    if config.loan_capacities.is_empty() {
        return Err(BenchError::Empty("loan_capacities"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (n as u64).rotate_left(32));
    let mut nodes = BTreeMap::new();
    nodes.insert(ROOT, config.root_reputation);
    for i in 1..n {
        nodes.insert(NodeId(i as u64), quantize_reputation(rng.gen::<f64>()));
    }
    let degree = config.out_degree.min(n - 1);
    let mut edges = Vec::with_capacity(n * degree);
    for borrower in 0..n {
        for j in sample(&mut rng, n - 1, degree) {
            let lender = if j >= borrower { j + 1 } else { j };
            let amount = config.loan_capacities[rng.gen_range(0..config.loan_capacities.len())];
            edges.push(LoanEdge {
                agreement_id: AgreementId(edges.len() as u64 + 1),
                lender: NodeId(lender as u64),
                borrower: NodeId(borrower as u64),
                amount,
                opening_block: 0,
                agreement_duration: 1_000,
                opening_fee: 0,
                closing_fee: 0,
            });
        }
    }
    Ok(LoanNetworkView::new(0, nodes, edges).expect("generated view is well formed"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub iterations: u64,
    pub optimized: bool,
    /// `None` for skipped cells.
    pub wall_ms: Option<f64>,
    pub mean: Option<f64>,
    pub ci95_width: Option<f64>,
}

impl BenchRow {
    pub fn skipped(&self) -> bool {
        self.wall_ms.is_none()
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| v.map(|x| format!("{x:.prec$}")).unwrap_or_default();
        match self.wall_ms {
            Some(ms) => format!(
                "{},{},{},{:.3},{},{}",
                self.nodes,
                self.iterations,
                self.optimized,
                ms,
                opt(self.mean, 6),
                opt(self.ci95_width, 6)
            ),
            None => format!("{},{},{},skipped,,", self.nodes, self.iterations, self.optimized),
        }
    }
}

pub const BENCH_CSV_HEADER: &str = "nodes,iterations,optimized,wall_ms,mean,ci95_width";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Times one estimate on `view` from the root, index construction included.
pub fn time_estimate(
    view: &LoanNetworkView,
    params: &WalkParams,
    iterations: u64,
    optimized: bool,
) -> Result<(f64, crate::confidence::ConfidenceEstimate), BenchError> {
    let strategy = if optimized { WalkStrategy::Indexed } else { WalkStrategy::Naive };
    let options = EstimateOptions { strategy, workers: 1 };
    let start = Instant::now();
    let estimate = estimate_confidence_with(view, ROOT, params, iterations, options)?;
    Ok((start.elapsed().as_secs_f64() * 1e3, estimate))
}

/// Runs every (nodes, iterations, walker) cell, generating each network once.
pub fn run_benchmark(config: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    config.validate()?;
    let params = config.walk_params();
    let mut rows = Vec::new();
    for &n in &config.node_counts {
        let skip = config.estimated_mb(n) > config.memory_budget_mb;
        let view = if skip { None } else { Some(generate_random_network(n, config)?) };
        for &k in &config.iteration_counts {
            for optimized in config.modes() {
                let row = match &view {
                    None => BenchRow { nodes: n, iterations: k, optimized, wall_ms: None, mean: None, ci95_width: None },
                    Some(view) => {
                        let (ms, est) = time_estimate(view, &params, k, optimized)?;
                        BenchRow {
                            nodes: n,
                            iterations: k,
                            optimized,
                            wall_ms: Some(ms),
                            mean: Some(est.mean),
                            ci95_width: Some(est.ci95_width),
                        }
                    }
                };
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
