//! Request and response bodies of the HTTP API.
//!
//! Loan networks travel in the network text format so that every request
//! goes through the same validating parser as files do.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bench::{BenchConfig, BenchRow};
use crate::confidence::{AcceptancePolicy, ConfidenceEstimate, Decision, WalkParams, WalkStrategy};
use crate::incentives::{InterestParams, InterestSchedule};
use crate::model::{Account, AgreementId, Block, LoanAgreement, NodeId, Tokens};
use crate::settlement::{Event, Repayment};
use crate::sybil::{AttackKind, AttackParams, AttackReport, VictimPolicy};

/// Error body returned with every non-2xx status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable machine-readable category such as `validation` or `conflict`.
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub nodes: usize,
    #[serde(default)]
    pub config: BenchConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkResponse {
    pub network: String,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub network: String,
    pub payer: NodeId,
    pub params: WalkParams,
    pub iterations: u64,
    #[serde(default)]
    pub strategy: WalkStrategy,
    #[serde(default = "one")]
    pub workers: usize,
    /// Amounts for which `P(settled >= amount)` is reported.
    #[serde(default)]
    pub thresholds: Vec<Tokens>,
    #[serde(default)]
    pub policy: Option<AcceptancePolicy>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub estimate: ConfidenceEstimate,
    pub probabilities: BTreeMap<Tokens, f64>,
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestRequest {
    pub params: InterestParams,
    /// Agreement length in blocks for the installment schedule.
    #[serde(default)]
    pub duration_blocks: Option<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestResponse {
    pub total: f64,
    pub schedule: Option<InterestSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRequest {
    pub kinds: Vec<AttackKind>,
    pub params: AttackParams,
    pub iterations: u64,
    #[serde(default)]
    pub policy: VictimPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResponse {
    pub reports: Vec<AttackReport>,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResponse {
    pub rows: Vec<BenchRow>,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateAccountRequest {
    pub node: NodeId,
    #[serde(default)]
    pub balance: Tokens,
    /// Starting reputation in place of the ledger's prior.
    #[serde(default)]
    pub reputation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenLoanResponse {
    pub agreement_id: AgreementId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvanceRequest {
    pub blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvanceResponse {
    pub height: Block,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub height: Block,
    pub beacon: u64,
    pub supply: Tokens,
    pub total_tokens: Tokens,
    pub fee_sink: Tokens,
    pub accounts: Vec<Account>,
    pub agreements: Vec<LoanAgreement>,
    pub repayments: Vec<Repayment>,
}
