//! Outcome-driven reputation scores with per-epoch decay.
//!
//! This is a stand-in for an external reputation service: every consumer goes
//! through [`ReputationProvider`], which only promises a score in `[0, 1]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Block, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Payment settled from the payer's own balance, or a loan repaid.
    DirectSuccess,
    /// Payment needed the payer's lenders.
    LoanFallback,
    /// Something was left unpaid.
    Default,
}

pub trait ReputationProvider {
    fn reputation_of(&self, node: NodeId, at_block: Block) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationConfig {
    pub prior: f64,
    pub reward: f64,
    pub fallback_penalty: f64,
    pub default_penalty: f64,
    pub epoch_length: Block,
    pub decay_per_epoch: f64,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        ReputationConfig {
            prior: 0.2,
            reward: 0.01,
            fallback_penalty: -0.05,
            default_penalty: -0.10,
            epoch_length: 100,
            decay_per_epoch: 0.9,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReputationError {
    #[error("prior {0} outside [0, 1]")]
    Prior(f64),
    #[error("decay per epoch {0} outside (0, 1]")]
    Decay(f64),
    #[error("epoch length must be positive")]
    EpochLength,
    #[error("reputation {0} outside [0, 1]")]
    Reputation(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("sybil count must be at least 1")]
    SybilCount,
}

impl ReputationConfig {
    pub fn validate(&self) -> Result<(), ReputationError> {
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(ReputationError::Prior(self.prior));
        }
        if !(self.decay_per_epoch > 0.0 && self.decay_per_epoch <= 1.0) {
            return Err(ReputationError::Decay(self.decay_per_epoch));
        }
        if self.epoch_length == 0 {
            return Err(ReputationError::EpochLength);
        }
        Ok(())
    }

    pub fn delta(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::DirectSuccess => self.reward,
            Outcome::LoanFallback => self.fallback_penalty,
            Outcome::Default => self.default_penalty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationLedger {
    config: ReputationConfig,
    /// Per-node starting score overriding the global prior.
    baseline: BTreeMap<NodeId, f64>,
    history: BTreeMap<NodeId, Vec<(Block, Outcome)>>,
}

impl ReputationLedger {
    pub fn new(config: ReputationConfig) -> Result<Self, ReputationError> {
        config.validate()?;
        Ok(ReputationLedger { config, baseline: BTreeMap::new(), history: BTreeMap::new() })
    }

    pub fn config(&self) -> &ReputationConfig {
        &self.config
    }

    pub fn set_baseline(&mut self, node: NodeId, reputation: f64) -> Result<(), ReputationError> {
        if !(0.0..=1.0).contains(&reputation) {
            return Err(ReputationError::Reputation(reputation));
        }
        self.baseline.insert(node, reputation);
        Ok(())
    }

    pub fn record_outcome(&mut self, node: NodeId, outcome: Outcome, at_block: Block) {
        self.history.entry(node).or_default().push((at_block, outcome));
    }

    pub fn history(&self, node: NodeId) -> &[(Block, Outcome)] {
        self.history.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes that have either a baseline or any recorded outcome.
    pub fn known_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        let mut nodes: Vec<NodeId> = self.baseline.keys().chain(self.history.keys()).copied().collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes.into_iter()
    }

    /// Weight of an outcome recorded at `recorded` when read at `at_block`.
    /// Outcomes from the future carry no weight.
    fn weight(&self, recorded: Block, at_block: Block) -> f64 {
        if recorded > at_block {
            return 0.0;
        }
        let epochs = (at_block - recorded) / self.config.epoch_length;
        self.config.decay_per_epoch.powi(epochs.min(i32::MAX as u64) as i32)
    }

    pub fn reputation_of(&self, node: NodeId, at_block: Block) -> f64 {
        let base = self.baseline.get(&node).copied().unwrap_or(self.config.prior);
        let drift: f64 = self
            .history(node)
            .iter()
            .map(|&(b, o)| self.config.delta(o) * self.weight(b, at_block))
            .sum();
        (base + drift).clamp(0.0, 1.0)
    }
}

impl Default for ReputationLedger {
    fn default() -> Self {
        ReputationLedger::new(ReputationConfig::default()).expect("default config is valid")
    }
}

impl ReputationProvider for ReputationLedger {
    fn reputation_of(&self, node: NodeId, at_block: Block) -> f64 {
        ReputationLedger::reputation_of(self, node, at_block)
    }
}

/// Fixed scores, mostly useful in tests and for externally computed ranks.
impl ReputationProvider for BTreeMap<NodeId, f64> {
    fn reputation_of(&self, node: NodeId, _at_block: Block) -> f64 {
        self.get(&node).copied().unwrap_or(0.0).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitVerdict {
    Profitable,
    Unprofitable,
}

/// Whether splitting a node of reputation `r` into `k` even Sybils pays off
/// against a per-split penalty `epsilon`.
///
/// An even split of `k` nodes holding `r/k` reputation and `x/k` tokens each
/// yields an influence benefit of `k * (r/k) * (x/k) = r*x/k`, which must beat
/// the penalty `epsilon * x`. Splitting is profitable exactly when `r > k * epsilon`.
pub fn sybil_split_profitability(r: f64, k: u32, epsilon: f64) -> Result<SplitVerdict, ReputationError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(ReputationError::Reputation(r));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ReputationError::Epsilon(epsilon));
    }
    match k {
        0 => Err(ReputationError::SybilCount),
        1 => Ok(SplitVerdict::Unprofitable),
        _ if r > k as f64 * epsilon => Ok(SplitVerdict::Profitable),
        _ => Ok(SplitVerdict::Unprofitable),
    }
}
