use serde::{Deserialize, Serialize};

use crate::model::{AgreementId, Block, NodeId, Tokens, TxId};
use crate::reputation::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    Expired,
    /// Fully consumed by settlements.
    Used,
    /// Borrower missed an interest installment.
    Delinquent,
}

/// Ledger event body; serialized as `{"kind": ..., "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    AccountCreated { node: NodeId, balance: Tokens },
    LoanOpened { agreement_id: AgreementId, lender: NodeId, borrower: NodeId, amount: Tokens, interest: Tokens },
    InterestPaid { agreement_id: AgreementId, borrower: NodeId, lender: NodeId, amount: Tokens },
    LoanClosed { agreement_id: AgreementId, reason: CloseReason, unlocked: Tokens, closing_fee: Tokens },
    TokensTransferred { from: NodeId, to: NodeId, amount: Tokens },
    LoanTokensUsed { agreement_id: AgreementId, lender: NodeId, borrower: NodeId, payee: NodeId, amount: Tokens },
    OfflineSettled { tx_id: TxId, payer: NodeId, payee: NodeId, credited: Tokens, shortfall: Tokens },
    RepaymentDue { agreement_id: AgreementId, debtor: NodeId, creditor: NodeId, amount: Tokens, due_block: Block },
    Repaid { agreement_id: AgreementId, debtor: NodeId, creditor: NodeId, amount: Tokens },
    RepaymentDefaulted { agreement_id: AgreementId, debtor: NodeId, creditor: NodeId, paid: Tokens, unpaid: Tokens },
    ReputationUpdated { node: NodeId, outcome: Outcome },
}

/// One line of the JSON-lines event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub block: Block,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("events serialize");
        s.push('\n');
        s
    }
}

pub fn to_json_lines(events: &[Event]) -> String {
    events.iter().map(Event::to_json_line).collect()
}
