//! Monte Carlo estimate of how much of an offline payment will be settled
//! online, by repeated random walks over the payer's loan network.

mod graph;
mod naive;
mod oracle;
mod walk;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::LoanGraph;
pub use naive::NaiveWalker;
pub use oracle::{exact_distribution, exact_expectation, has_lender_cycle, MAX_ORACLE_EDGES};
pub use walk::{WalkOutcome, Walker};

use crate::model::{LoanNetworkView, NodeId, Tokens};

#[derive(Debug, Error, PartialEq)]
pub enum ConfidenceError {
    #[error("node {0} is not in the view")]
    UnknownNode(NodeId),
    #[error("loaned amount must be positive")]
    NonPositiveAmount,
    #[error("decay {0} outside [0, 1]")]
    Decay(f64),
    #[error("at least one iteration is required")]
    NoIterations,
    #[error("exact oracle limited to {MAX_ORACLE_EDGES} edges, view has {0}")]
    OracleTooLarge(usize),
    #[error("exact expectation requires early stop and the min cap to be disabled")]
    OracleOrderDependent,
    #[error("exact expectation requires an acyclic lender neighbourhood")]
    OracleCyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub decay: f64,
    pub max_distance: u32,
    pub transaction_amount: Tokens,
    pub rng_seed: u64,
    /// Cap what an insolvent node passes on at the amount it was asked for.
    pub enable_min_cap: bool,
    /// Stop asking lenders once enough has been collected.
    pub enable_early_stop: bool,
}

impl WalkParams {
    pub fn new(transaction_amount: Tokens, decay: f64, max_distance: u32, rng_seed: u64) -> Self {
        WalkParams {
            decay,
            max_distance,
            transaction_amount,
            rng_seed,
            enable_min_cap: true,
            enable_early_stop: true,
        }
    }

    /// Both the cap and early stop off: the plain accumulating walk.
    pub fn uncapped(mut self) -> Self {
        self.enable_min_cap = false;
        self.enable_early_stop = false;
        self
    }

    pub fn validate(&self) -> Result<(), ConfidenceError> {
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(ConfidenceError::Decay(self.decay));
        }
        Ok(())
    }

    /// Collected amount at which a node asked for `loaned` stops asking its
    /// lenders. With the cap on, anything above `loaned` would be discarded,
    /// so the node also stops there.
    #[inline]
    pub fn stop_threshold(&self, loaned: Tokens) -> Tokens {
        if self.enable_min_cap {
            self.transaction_amount.min(loaned)
        } else {
            self.transaction_amount
        }
    }

    /// Solvency probability of a node at `distance` hops from the payer.
    pub fn success_probability(&self, reputation: f64, distance: u32) -> f64 {
        reputation * self.decay.powi(distance as i32)
    }
}

/// Random generator for walk `index`: every walk gets its own ChaCha stream
/// under the key derived from the seed, so any partition of walks across
/// workers reproduces the sequential result.
pub fn walk_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Empirical distribution of settled amounts over `iterations` walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEstimate {
    pub iterations: u64,
    pub transaction_amount: Tokens,
    pub histogram: BTreeMap<Tokens, u64>,
    pub mean: f64,
    pub stddev: f64,
    pub ci95_width: f64,
}

impl ConfidenceEstimate {
    pub fn from_histogram(histogram: BTreeMap<Tokens, u64>, transaction_amount: Tokens) -> Self {
        let k: u64 = histogram.values().sum();
        let kf = k as f64;
        let mean = if k == 0 {
            0.0
        } else {
            histogram.iter().map(|(&v, &c)| v as f64 * c as f64).sum::<f64>() / kf
        };
        let stddev = if k < 2 {
            0.0
        } else {
            let ss: f64 = histogram.iter().map(|(&v, &c)| c as f64 * (v as f64 - mean).powi(2)).sum();
            (ss / (kf - 1.0)).sqrt()
        };
        let ci95_width = if k == 0 { 0.0 } else { 2.0 * 1.96 * stddev / kf.sqrt() };
        ConfidenceEstimate { iterations: k, transaction_amount, histogram, mean, stddev, ci95_width }
    }

    pub fn standard_error(&self) -> f64 {
        self.stddev / (self.iterations as f64).sqrt()
    }

    /// Empirical `P(settled >= threshold)`.
    pub fn prob_at_least(&self, threshold: Tokens) -> f64 {
        if self.iterations == 0 {
            return 0.0;
        }
        let hits: u64 = self.histogram.range(threshold..).map(|(_, &c)| c).sum();
        hits as f64 / self.iterations as f64
    }

    pub fn prob_at_least_map(&self, thresholds: &[Tokens]) -> BTreeMap<Tokens, f64> {
        thresholds.iter().map(|&t| (t, self.prob_at_least(t))).collect()
    }

    /// Histogram as `amount,count` CSV.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("amount,count\n");
        for (v, c) in &self.histogram {
            out.push_str(&format!("{v},{c}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkStrategy {
    /// Dense borrower index with stamped visited edges.
    #[default]
    Indexed,
    /// Per-visit lookups on the raw view.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub strategy: WalkStrategy,
    /// Worker threads; 1 runs on the calling thread.
    pub workers: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { strategy: WalkStrategy::Indexed, workers: 1 }
    }
}

fn merge(mut a: BTreeMap<Tokens, u64>, b: BTreeMap<Tokens, u64>) -> BTreeMap<Tokens, u64> {
    for (v, c) in b {
        *a.entry(v).or_insert(0) += c;
    }
    a
}

fn ranges(iterations: u64, parts: usize) -> Vec<(u64, u64)> {
    let parts = (parts.max(1) as u64).min(iterations);
    (0..parts)
        .map(|i| (iterations * i / parts, iterations * (i + 1) / parts))
        .collect()
}

/// Histogram of walks `start..end` using walk `i`'s own stream.
fn run_range(
    view: &LoanNetworkView,
    graph: Option<&LoanGraph>,
    payer: NodeId,
    params: &WalkParams,
    (start, end): (u64, u64),
) -> Result<BTreeMap<Tokens, u64>, ConfidenceError> {
    let mut hist = BTreeMap::new();
    let base = walk_rng(params.rng_seed, 0);
    match graph {
        Some(graph) => {
            let mut walker = Walker::new(graph, params)?;
            let root = graph.index_of(payer).ok_or(ConfidenceError::UnknownNode(payer))?;
            for i in start..end {
                let mut rng = base.clone();
                rng.set_stream(i);
                let v = walker.walk_indexed(root, params.transaction_amount, &mut rng).amount;
                *hist.entry(v).or_insert(0) += 1;
            }
        }
        None => {
            let walker = NaiveWalker::new(view, params)?;
            for i in start..end {
                let mut rng = walk_rng(params.rng_seed, i);
                let v = walker.walk(payer, params.transaction_amount, &mut rng)?;
                *hist.entry(v).or_insert(0) += 1;
            }
        }
    }
    Ok(hist)
}

pub fn estimate_confidence_with(
    view: &LoanNetworkView,
    payer: NodeId,
    params: &WalkParams,
    iterations: u64,
    options: EstimateOptions,
) -> Result<ConfidenceEstimate, ConfidenceError> {
    params.validate()?;
    if iterations == 0 {
        return Err(ConfidenceError::NoIterations);
    }
    if !view.contains(payer) {
        return Err(ConfidenceError::UnknownNode(payer));
    }
    if params.transaction_amount == 0 {
        return Err(ConfidenceError::NonPositiveAmount);
    }
    let graph = match options.strategy {
        WalkStrategy::Indexed => Some(LoanGraph::from_view(view)),
        WalkStrategy::Naive => None,
    };
    let parts = ranges(iterations, options.workers);
    let hist = if parts.len() == 1 {
        run_range(view, graph.as_ref(), payer, params, parts[0])?
    } else {
        parts
            .into_par_iter()
            .map(|r| run_range(view, graph.as_ref(), payer, params, r))
            .try_reduce(BTreeMap::new, |a, b| Ok(merge(a, b)))?
    };
    Ok(ConfidenceEstimate::from_histogram(hist, params.transaction_amount))
}

/// Runs `iterations` independent walks from `payer`, each asking for the full
/// transaction amount.
pub fn estimate_confidence(
    view: &LoanNetworkView,
    payer: NodeId,
    params: &WalkParams,
    iterations: u64,
) -> Result<ConfidenceEstimate, ConfidenceError> {
    estimate_confidence_with(view, payer, params, iterations, EstimateOptions::default())
}

/// Same as [`estimate_confidence`] with walks spread over the rayon pool.
pub fn estimate_confidence_parallel(
    view: &LoanNetworkView,
    payer: NodeId,
    params: &WalkParams,
    iterations: u64,
) -> Result<ConfidenceEstimate, ConfidenceError> {
    let workers = rayon::current_num_threads().max(1) * 4;
    estimate_confidence_with(view, payer, params, iterations, EstimateOptions { workers, ..Default::default() })
}

/// Single walk on a view. Builds the index on every call; use [`Walker`]
/// for repeated walks.
pub fn random_walk<R: rand::Rng + ?Sized>(
    view: &LoanNetworkView,
    payer: NodeId,
    loaned_amount: Tokens,
    params: &WalkParams,
    rng: &mut R,
) -> Result<WalkOutcome, ConfidenceError> {
    let graph = LoanGraph::from_view(view);
    Walker::new(&graph, params)?.walk(payer, loaned_amount, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptancePolicy {
    pub threshold: Tokens,
    pub min_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Deny,
}

/// Accept when the estimated chance of receiving at least `threshold` is at
/// least `min_probability`.
pub fn accept_payment(estimate: &ConfidenceEstimate, policy: &AcceptancePolicy) -> Decision {
    if estimate.prob_at_least(policy.threshold) >= policy.min_probability {
        Decision::Accept
    } else {
        Decision::Deny
    }
}
