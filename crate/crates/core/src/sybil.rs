//! Attack scenarios that split one identity's reputation, coins or loan over
//! Sybils, and their evaluation against the influence metric and a victim
//! payee's acceptance decision.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num::{BigInt, BigRational, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{accept_payment, estimate_confidence, AcceptancePolicy, ConfidenceError, Decision, WalkParams};
use crate::model::{LoanDraft, LoanEdge, LoanNetworkView, NodeId, Tokens, ViewError};
use crate::settlement::{Ledger, LedgerConfig, LedgerError};

#[derive(Debug, Error, PartialEq)]
pub enum SybilError {
    #[error("number of Sybils must be at least 1")]
    SybilCount,
    #[error("amount {amount} cannot be split evenly over {k} Sybils")]
    UnevenSplit { amount: Tokens, k: u32 },
    #[error("amount must be positive")]
    NonPositiveAmount,
    #[error("{name} = {value} outside its range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("unknown attack kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    ReputationSplit,
    CoinSplit,
    LoanSplit,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::ReputationSplit, AttackKind::CoinSplit, AttackKind::LoanSplit];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::ReputationSplit => "reputation_split",
            AttackKind::CoinSplit => "coin_split",
            AttackKind::LoanSplit => "loan_split",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = SybilError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| SybilError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    /// Number of Sybil identities (or duplicate loans for coin splitting).
    pub k: u32,
    /// Reputation of the honest identity being split.
    pub reputation: f64,
    /// Tokens the honest identity lends.
    pub amount: Tokens,
    /// Per-split reputation penalty.
    pub epsilon: f64,
    /// Reputation of the borrower whose payment the victim receives.
    pub payer_reputation: f64,
    pub decay: f64,
    pub max_distance: u32,
    pub seed: u64,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            k: 2,
            reputation: 0.5,
            amount: 100,
            epsilon: 0.2,
            payer_reputation: 0.1,
            decay: 0.95,
            max_distance: 9,
            seed: 7,
        }
    }
}

impl AttackParams {
    fn validate(&self, kind: AttackKind) -> Result<(), SybilError> {
        if self.k == 0 {
            return Err(SybilError::SybilCount);
        }
        if self.amount == 0 {
            return Err(SybilError::NonPositiveAmount);
        }
        for (name, value) in
            [("reputation", self.reputation), ("payer_reputation", self.payer_reputation), ("decay", self.decay)]
        {
            if !(0.0..=1.0).contains(&value) {
                return Err(SybilError::OutOfRange { name, value });
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(SybilError::OutOfRange { name: "epsilon", value: self.epsilon });
        }
        if kind != AttackKind::CoinSplit && self.amount % self.k as Tokens != 0 {
            return Err(SybilError::UnevenSplit { amount: self.amount, k: self.k });
        }
        Ok(())
    }
}

/// An attacker-controlled lender with its exact reputation.
#[derive(Debug, Clone, PartialEq)]
pub struct SybilLender {
    pub node: NodeId,
    pub reputation: BigRational,
    pub amount: Tokens,
}

/// Exact rational value of a float.
pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

/// Σ reputation × loaned amount.
pub fn influence(lenders: &[SybilLender]) -> BigRational {
    lenders
        .iter()
        .map(|l| &l.reputation * BigRational::from_integer(BigInt::from(l.amount)))
        .fold(BigRational::zero(), |a, b| a + b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackScenario {
    pub kind: AttackKind,
    pub params: AttackParams,
    pub payer: NodeId,
    pub baseline: LoanNetworkView,
    pub variant: LoanNetworkView,
    pub baseline_lenders: Vec<SybilLender>,
    pub variant_lenders: Vec<SybilLender>,
    pub attacker_nodes: Vec<NodeId>,
    /// Coin splitting only: loans attempted beyond the first, and how many
    /// of them the ledger refused.
    pub duplicate_attempts: u32,
    pub duplicates_rejected: u32,
    /// Coin splitting only: largest active principal the attacker reached.
    pub max_active_principal: Tokens,
    pub attacker_balance: Tokens,
}

const PAYER: NodeId = NodeId(0);

fn view_of(params: &AttackParams, lenders: &[SybilLender]) -> Result<LoanNetworkView, ViewError> {
    let mut nodes = BTreeMap::from([(PAYER, params.payer_reputation)]);
    let mut edges = Vec::new();
    for (i, l) in lenders.iter().enumerate() {
        nodes.insert(l.node, l.reputation.to_f64().unwrap_or(0.0).clamp(0.0, 1.0));
        edges.push(LoanEdge {
            agreement_id: crate::model::AgreementId(i as u64 + 1),
            lender: l.node,
            borrower: PAYER,
            amount: l.amount,
            opening_block: 0,
            agreement_duration: 100,
            opening_fee: 0,
            closing_fee: 0,
        });
    }
    LoanNetworkView::new(0, nodes, edges)
}

fn even_split(params: &AttackParams) -> Vec<SybilLender> {
    let k = params.k as u64;
    let share = exact(params.reputation) / BigRational::from_integer(BigInt::from(k));
    (1..=k)
        .map(|i| SybilLender { node: NodeId(i), reputation: share.clone(), amount: params.amount / k })
        .collect()
}

/// Builds a matched honest/attack pair.
///
/// The honest baseline is one lender `1` of reputation `R` lending `X` to the
/// payer `0`. Loan and reputation splitting replace it with `K` lenders of
/// `R/K` and `X/K`. Coin splitting runs `K` loans of `X` from a lender holding
/// only `X` through a ledger and keeps whatever the ledger accepted.
pub fn build_scenario(kind: AttackKind, params: AttackParams) -> Result<AttackScenario, SybilError> {
    params.validate(kind)?;
    let honest = vec![SybilLender { node: NodeId(1), reputation: exact(params.reputation), amount: params.amount }];
    let baseline = view_of(&params, &honest)?;
    let mut scenario = AttackScenario {
        kind,
        params,
        payer: PAYER,
        baseline: baseline.clone(),
        variant: baseline,
        baseline_lenders: honest.clone(),
        variant_lenders: honest,
        attacker_nodes: vec![NodeId(1)],
        duplicate_attempts: 0,
        duplicates_rejected: 0,
        max_active_principal: 0,
        attacker_balance: params.amount,
    };
    match kind {
        AttackKind::ReputationSplit if params.k == 1 => {}
        AttackKind::ReputationSplit | AttackKind::LoanSplit => {
            let sybils = even_split(&params);
            scenario.variant = view_of(&params, &sybils)?;
            scenario.attacker_nodes = sybils.iter().map(|l| l.node).collect();
            scenario.variant_lenders = sybils;
        }
        AttackKind::CoinSplit => run_coin_split(&mut scenario)?,
    }
    Ok(scenario)
}

fn run_coin_split(s: &mut AttackScenario) -> Result<(), SybilError> {
    let p = s.params;
    let attacker = NodeId(1);
    let mut ledger = Ledger::new(LedgerConfig::default())?;
    ledger.create_account(PAYER, 0)?;
    ledger.create_account(attacker, p.amount)?;
    ledger.set_reputation_baseline(PAYER, p.payer_reputation)?;
    ledger.set_reputation_baseline(attacker, p.reputation)?;
    for i in 0..p.k.max(2) {
        let draft = LoanDraft::new(attacker, PAYER, p.amount, 100).with_interest(0);
        let accepted = ledger.open_loan(&draft).is_ok();
        if i > 0 {
            s.duplicate_attempts += 1;
            s.duplicates_rejected += u32::from(!accepted);
        }
        let active: Tokens = ledger
            .agreements()
            .filter(|a| a.active && a.lender == attacker)
            .map(|a| a.amount)
            .sum();
        s.max_active_principal = s.max_active_principal.max(active);
    }
    s.variant_lenders = ledger
        .agreements()
        .filter(|a| a.active && a.lender == attacker)
        .map(|a| SybilLender { node: attacker, reputation: exact(p.reputation), amount: a.amount })
        .collect();
    s.variant = view_of(&p, &s.variant_lenders)?;
    Ok(())
}

impl AttackScenario {
    pub fn baseline_influence(&self) -> BigRational {
        influence(&self.baseline_lenders)
    }

    /// Influence of the attack, net of the splitting penalty for reputation
    /// splits.
    ///
    /// For a reputation split the Sybils keep the original standing `R·X`
    /// and gain the cross term `R·X/K`, but pay `ε·X` for splitting; the
    /// attack profits exactly when `R > K·ε`.
    pub fn variant_influence(&self) -> BigRational {
        match self.kind {
            AttackKind::ReputationSplit if self.params.k > 1 => {
                let x = BigRational::from_integer(BigInt::from(self.params.amount));
                self.baseline_influence() + influence(&self.variant_lenders) - exact(self.params.epsilon) * x
            }
            _ => influence(&self.variant_lenders),
        }
    }

    /// Σ of attacker tokens and reputation are preserved by the split (up
    /// to `ε` for reputation).
    pub fn conserves(&self) -> bool {
        let tokens = |ls: &[SybilLender]| ls.iter().map(|l| l.amount).sum::<Tokens>();
        let rep = |ls: &[SybilLender]| ls.iter().map(|l| l.reputation.clone()).fold(BigRational::zero(), |a, b| a + b);
        match self.kind {
            AttackKind::CoinSplit => self.max_active_principal <= self.attacker_balance,
            _ => {
                tokens(&self.baseline_lenders) == tokens(&self.variant_lenders)
                    && rep(&self.variant_lenders) <= rep(&self.baseline_lenders) + exact(self.params.epsilon)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackVerdict {
    Profitable,
    Unprofitable,
    /// The ledger refused every duplicate loan.
    Blocked,
}

impl fmt::Display for AttackVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackVerdict::Profitable => "profitable",
            AttackVerdict::Unprofitable => "unprofitable",
            AttackVerdict::Blocked => "blocked",
        })
    }
}

/// How the victim payee decides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VictimPolicy {
    pub min_probability: f64,
    /// Payments from payers below this reputation are refused outright.
    pub reputation_floor: f64,
}

impl Default for VictimPolicy {
    fn default() -> Self {
        VictimPolicy { min_probability: 0.9, reputation_floor: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub k: u32,
    pub reputation: f64,
    pub epsilon: f64,
    pub baseline_influence: f64,
    pub variant_influence: f64,
    /// Exact influences as `p/q`.
    pub baseline_influence_exact: String,
    pub variant_influence_exact: String,
    pub attacker_advantage: f64,
    pub verdict: AttackVerdict,
    pub baseline_confidence: f64,
    pub variant_confidence: f64,
    pub baseline_decision: Decision,
    pub variant_decision: Decision,
    pub duplicates_rejected: u32,
    pub duplicate_attempts: u32,
}

impl AttackReport {
    pub fn decision_changed(&self) -> bool {
        self.baseline_decision != self.variant_decision
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.kind, self.k, self.reputation, self.epsilon, self.baseline_influence, self.variant_influence, self.verdict
        )
    }
}

pub const ATTACK_CSV_HEADER: &str = "kind,K,R,epsilon,baseline_influence,variant_influence,verdict";

pub fn attack_csv(reports: &[AttackReport]) -> String {
    let mut out = format!("{ATTACK_CSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn victim_view(
    scenario: &AttackScenario,
    view: &LoanNetworkView,
    iterations: u64,
    policy: &VictimPolicy,
) -> Result<(f64, Decision), SybilError> {
    let p = &scenario.params;
    let walk = WalkParams::new(p.amount, p.decay, p.max_distance, p.seed);
    let estimate = estimate_confidence(view, scenario.payer, &walk, iterations)?;
    let accept = AcceptancePolicy { threshold: p.amount, min_probability: policy.min_probability };
    let confidence = estimate.prob_at_least(p.amount);
    let decision = if view.reputation(scenario.payer).unwrap_or(0.0) < policy.reputation_floor {
        Decision::Deny
    } else {
        accept_payment(&estimate, &accept)
    };
    Ok((confidence, decision))
}

pub fn evaluate_attack_with(
    scenario: &AttackScenario,
    iterations: u64,
    policy: &VictimPolicy,
) -> Result<AttackReport, SybilError> {
    let base = scenario.baseline_influence();
    let var = scenario.variant_influence();
    let verdict = match scenario.kind {
        AttackKind::CoinSplit if scenario.duplicates_rejected == scenario.duplicate_attempts => AttackVerdict::Blocked,
        _ if var > base => AttackVerdict::Profitable,
        _ => AttackVerdict::Unprofitable,
    };
    let advantage = if verdict == AttackVerdict::Blocked { 0.0 } else { (&var - &base).to_f64().unwrap_or(0.0) };
    let (baseline_confidence, baseline_decision) = victim_view(scenario, &scenario.baseline, iterations, policy)?;
    let (variant_confidence, variant_decision) = victim_view(scenario, &scenario.variant, iterations, policy)?;
    Ok(AttackReport {
        kind: scenario.kind,
        k: scenario.params.k,
        reputation: scenario.params.reputation,
        epsilon: scenario.params.epsilon,
        baseline_influence: base.to_f64().unwrap_or(0.0),
        variant_influence: var.to_f64().unwrap_or(0.0),
        baseline_influence_exact: base.to_string(),
        variant_influence_exact: var.to_string(),
        attacker_advantage: advantage,
        verdict,
        baseline_confidence,
        variant_confidence,
        baseline_decision,
        variant_decision,
        duplicates_rejected: scenario.duplicates_rejected,
        duplicate_attempts: scenario.duplicate_attempts,
    })
}

/// Evaluates with the default victim policy.
pub fn evaluate_attack(scenario: &AttackScenario, iterations: u64) -> Result<AttackReport, SybilError> {
    evaluate_attack_with(scenario, iterations, &VictimPolicy::default())
}
