//! Simulator for loan-backed offline payments.
//!
//! Nodes pay each other offline and settle later on a ledger. A payee judges
//! an incoming payment by estimating, through random walks over the payer's
//! loan network, how much of it will be covered online. The ledger emulator
//! locks loan collateral, charges interest and settles payments through the
//! payer's lenders when the payer is short.

pub mod bench;
pub mod confidence;
pub mod incentives;
pub mod model;
pub mod netfile;
pub mod reputation;
pub mod settlement;
pub mod sybil;
pub mod wire;

pub use confidence::{
    accept_payment, estimate_confidence, estimate_confidence_parallel, estimate_confidence_with, exact_distribution,
    exact_expectation, random_walk, AcceptancePolicy, ConfidenceError, ConfidenceEstimate, Decision, EstimateOptions,
    WalkParams, WalkStrategy,
};
pub use incentives::{total_interest, InterestParams, InterestPolicy, InterestSchedule};
pub use model::{
    AgreementId, Block, LoanAgreement, LoanDraft, LoanEdge, LoanNetworkView, NodeId, OfflineTransaction, Tokens, TxId,
};
pub use reputation::{sybil_split_profitability, Outcome, ReputationConfig, ReputationLedger, SplitVerdict};
pub use settlement::{Ledger, LedgerConfig, LedgerError, LoanFunding, SettlementReport};
