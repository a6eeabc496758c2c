//! Shared domain types: accounts, loan agreements, the loan-network view and
//! offline transactions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest indivisible token unit.
pub type Tokens = u64;

/// Block height.
pub type Block = u64;

/// Opaque participant identifier. Stands in for a public key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgreementId(pub u64);

impl fmt::Display for AgreementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u64);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Public state of one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Account {
    pub node: NodeId,
    pub balance: Tokens,
    pub locked: Tokens,
    pub reputation: f64,
}

/// Reputation values in views and network files are kept on a 1e-6 grid.
pub fn quantize_reputation(r: f64) -> f64 {
    (r.clamp(0.0, 1.0) * 1e6).round() / 1e6
}

/// Tag for the agreement's dispute-resolution mechanism. Only the random
/// lender traversal exists; the tag is carried along for completeness.
pub const RANDOM_LENDER_TRAVERSAL: &str = "random-lender-traversal";

/// A loan agreement as proposed by its two parties, before registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanDraft {
    pub lender: NodeId,
    pub borrower: NodeId,
    pub amount: Tokens,
    /// Blocks the borrower has to repay a consumed loan.
    pub repayment_time: Block,
    pub agreement_duration: Block,
    /// Earliest block at which the agreement may be registered.
    pub min_open_time: Block,
    pub opening_fee: Tokens,
    pub closing_fee: Tokens,
    #[serde(default = "default_dispute_resolution")]
    pub dispute_resolution: String,
    /// Total interest agreed out of band. `None` lets the ledger price the
    /// loan with its interest policy.
    #[serde(default)]
    pub interest: Option<Tokens>,
    /// Both parties' signatures, reduced to a validity attestation.
    #[serde(default = "yes")]
    pub signed: bool,
}

fn default_dispute_resolution() -> String {
    RANDOM_LENDER_TRAVERSAL.to_string()
}

fn yes() -> bool {
    true
}

impl LoanDraft {
    pub fn new(lender: NodeId, borrower: NodeId, amount: Tokens, agreement_duration: Block) -> Self {
        LoanDraft {
            lender,
            borrower,
            amount,
            repayment_time: agreement_duration,
            agreement_duration,
            min_open_time: 0,
            opening_fee: 0,
            closing_fee: 0,
            dispute_resolution: default_dispute_resolution(),
            interest: None,
            signed: true,
        }
    }

    pub fn with_interest(mut self, interest: Tokens) -> Self {
        self.interest = Some(interest);
        self
    }

    pub fn with_fees(mut self, opening_fee: Tokens, closing_fee: Tokens) -> Self {
        self.opening_fee = opening_fee;
        self.closing_fee = closing_fee;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    SelfLoan,
    NonPositiveAmount,
    NonPositiveDuration,
    NegativeFee,
    Unsigned,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::SelfLoan => "self-loan",
            Violation::NonPositiveAmount => "non-positive amount",
            Violation::NonPositiveDuration => "non-positive duration",
            Violation::NegativeFee => "negative fee",
            Violation::Unsigned => "missing signatures",
        };
        f.write_str(s)
    }
}

/// Checks every structural invariant of a draft and reports all violations.
///
/// Token amounts are unsigned, so a negative fee can only arrive through a
/// wire format; [`validate_signed_fees`] covers that path.
pub fn validate_agreement(draft: &LoanDraft) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if draft.lender == draft.borrower {
        violations.push(Violation::SelfLoan);
    }
    if draft.amount == 0 {
        violations.push(Violation::NonPositiveAmount);
    }
    if draft.agreement_duration == 0 {
        violations.push(Violation::NonPositiveDuration);
    }
    if !draft.signed {
        violations.push(Violation::Unsigned);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Fee check for fee values parsed from signed inputs.
pub fn validate_signed_fees(opening_fee: i64, closing_fee: i64) -> Result<(), Vec<Violation>> {
    if opening_fee < 0 || closing_fee < 0 {
        Err(vec![Violation::NegativeFee])
    } else {
        Ok(())
    }
}

/// A registered loan agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanAgreement {
    pub agreement_id: AgreementId,
    pub lender: NodeId,
    pub borrower: NodeId,
    pub amount: Tokens,
    pub repayment_time: Block,
    pub agreement_duration: Block,
    pub min_open_time: Block,
    pub opening_fee: Tokens,
    pub closing_fee: Tokens,
    pub dispute_resolution: String,
    pub opening_block: Block,
    pub close_time: Option<Block>,
    pub closing_block: Option<Block>,
    pub active: bool,
    /// Lender and borrower reputation at registration.
    pub reputation_snapshot: (f64, f64),
    pub total_interest: Tokens,
}

impl LoanAgreement {
    /// First block at which the agreement is no longer usable.
    pub fn end_block(&self) -> Block {
        self.opening_block + self.agreement_duration
    }

    pub fn usable_at(&self, block: Block) -> bool {
        self.opening_block <= block && block < self.end_block()
    }

    pub fn to_edge(&self) -> LoanEdge {
        LoanEdge {
            agreement_id: self.agreement_id,
            lender: self.lender,
            borrower: self.borrower,
            amount: self.amount,
            opening_block: self.opening_block,
            agreement_duration: self.agreement_duration,
            opening_fee: self.opening_fee,
            closing_fee: self.closing_fee,
        }
    }
}

/// The part of an agreement that travels in a loan-network view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoanEdge {
    pub agreement_id: AgreementId,
    pub lender: NodeId,
    pub borrower: NodeId,
    pub amount: Tokens,
    pub opening_block: Block,
    pub agreement_duration: Block,
    pub opening_fee: Tokens,
    pub closing_fee: Tokens,
}

impl LoanEdge {
    pub fn usable_at(&self, block: Block) -> bool {
        self.opening_block <= block && block < self.opening_block + self.agreement_duration
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ViewError {
    #[error("edge {0} references unknown node {1}")]
    UnknownNode(AgreementId, NodeId),
    #[error("edge {0} is not usable at block {1}")]
    EdgeOutsideWindow(AgreementId, Block),
    #[error("edge {0} is a self-loan")]
    SelfLoan(AgreementId),
    #[error("duplicate agreement id {0}")]
    DuplicateAgreement(AgreementId),
    #[error("reputation {1} of node {0} outside [0, 1]")]
    ReputationRange(NodeId, f64),
}

/// Point-in-time snapshot of the active loan network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanNetworkView {
    as_of_block: Block,
    nodes: BTreeMap<NodeId, f64>,
    edges: Vec<LoanEdge>,
}

impl LoanNetworkView {
    /// Builds a view, rejecting edges that are not usable at `as_of_block` or
    /// that reference nodes missing from `nodes`. Edge order is preserved; it
    /// fixes the order in which walks visit lenders.
    pub fn new(
        as_of_block: Block,
        nodes: BTreeMap<NodeId, f64>,
        edges: Vec<LoanEdge>,
    ) -> Result<Self, ViewError> {
        for (&node, &r) in &nodes {
            if !(0.0..=1.0).contains(&r) {
                return Err(ViewError::ReputationRange(node, r));
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for e in &edges {
            if !seen.insert(e.agreement_id) {
                return Err(ViewError::DuplicateAgreement(e.agreement_id));
            }
            if e.lender == e.borrower {
                return Err(ViewError::SelfLoan(e.agreement_id));
            }
            for n in [e.lender, e.borrower] {
                if !nodes.contains_key(&n) {
                    return Err(ViewError::UnknownNode(e.agreement_id, n));
                }
            }
            if !e.usable_at(as_of_block) {
                return Err(ViewError::EdgeOutsideWindow(e.agreement_id, as_of_block));
            }
        }
        Ok(LoanNetworkView { as_of_block, nodes, edges })
    }

    pub fn as_of_block(&self) -> Block {
        self.as_of_block
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, f64> {
        &self.nodes
    }

    pub fn edges(&self) -> &[LoanEdge] {
        &self.edges
    }

    pub fn reputation(&self, node: NodeId) -> Option<f64> {
        self.nodes.get(&node).copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains_key(&node)
    }

    /// Serializes into the line-oriented network file format.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 + self.nodes.len() * 16 + self.edges.len() * 40);
        write_view(&mut out, self);
        out
    }

    pub fn from_text(text: &str) -> Result<Self, crate::netfile::ParseError> {
        let parsed = crate::netfile::parse(text)?;
        if !parsed.accounts.is_empty() {
            return Err(crate::netfile::ParseError::Unexpected("account lines in a network file".into()));
        }
        Ok(parsed.view)
    }
}

pub(crate) fn write_view(out: &mut String, view: &LoanNetworkView) {
    use std::fmt::Write;
    let _ = writeln!(out, "overdraft-net v1 as_of={}", view.as_of_block);
    for (node, r) in &view.nodes {
        let _ = writeln!(out, "N {} {}", node, format_reputation(*r));
    }
    for e in &view.edges {
        let _ = writeln!(
            out,
            "L {} {} {} {} {} {} {} {}",
            e.agreement_id,
            e.lender,
            e.borrower,
            e.amount,
            e.opening_block,
            e.agreement_duration,
            e.opening_fee,
            e.closing_fee
        );
    }
}

/// Decimal with at most six fractional digits, trailing zeros trimmed.
pub fn format_reputation(r: f64) -> String {
    let s = format!("{:.6}", r);
    let s = s.trim_end_matches('0');
    let s = s.strip_suffix('.').unwrap_or(s);
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// A signed payer-to-payee transfer made offline, waiting for settlement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineTransaction {
    pub tx_id: TxId,
    pub payer: NodeId,
    pub payee: NodeId,
    pub amount: Tokens,
    /// `as_of_block` of the view the payee relied on.
    pub agreed_at_view: Block,
    #[serde(default)]
    pub submitted_at: Option<Block>,
    #[serde(default = "yes")]
    pub signed: bool,
}

impl OfflineTransaction {
    pub fn new(tx_id: u64, payer: NodeId, payee: NodeId, amount: Tokens, agreed_at_view: Block) -> Self {
        OfflineTransaction {
            tx_id: TxId(tx_id),
            payer,
            payee,
            amount,
            agreed_at_view,
            submitted_at: None,
            signed: true,
        }
    }
}

/// Monotone block counter read by all time-dependent logic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockClock {
    height: Block,
}

impl BlockClock {
    pub fn at(height: Block) -> Self {
        BlockClock { height }
    }

    pub fn height(&self) -> Block {
        self.height
    }

    pub fn tick(&mut self) -> Block {
        self.height += 1;
        self.height
    }
}
