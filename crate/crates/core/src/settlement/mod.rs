//! Deterministic in-process emulation of the loan contract: token locking,
//! block-by-block interest and expiry, and settlement of offline payments
//! through the payer's lenders.
//!
//! All mutation goes through `&mut Ledger`; callers that share a ledger must
//! serialize writers themselves. Views handed out by [`Ledger::capture_view`]
//! are independent copies.

mod events;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use events::{to_json_lines, CloseReason, Event, EventKind};

use crate::incentives::{InterestError, InterestPolicy, InterestSchedule};
use crate::model::{
    quantize_reputation, validate_agreement, Account, AgreementId, Block, BlockClock, LoanAgreement, LoanDraft,
    LoanNetworkView, NodeId, OfflineTransaction, Tokens, TxId, Violation,
};
use crate::netfile::{self, AccountLine, ParseError};
use crate::reputation::{Outcome, ReputationConfig, ReputationError, ReputationLedger};

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("invalid agreement: {0:?}")]
    InvalidAgreement(Vec<Violation>),
    #[error("agreement cannot be registered before block {min_open_time} (height {height})")]
    NotYetOpenable { min_open_time: Block, height: Block },
    #[error("unknown account {0}")]
    UnknownAccount(NodeId),
    #[error("account {0} already exists")]
    DuplicateAccount(NodeId),
    #[error("loan canceled: {node} holds {available}, needs {needed}")]
    InsufficientFunds { node: NodeId, needed: Tokens, available: Tokens },
    #[error("unknown agreement {0}")]
    UnknownAgreement(AgreementId),
    #[error("agreement {id} cannot be closed before block {closes_at}")]
    EarlyClosure { id: AgreementId, closes_at: Block },
    #[error("transaction {0} already settled")]
    Replay(TxId),
    #[error("invalid transaction: {0}")]
    InvalidTransaction(&'static str),
    #[error("no snapshot for block {requested}; ledger is at {height}")]
    InvalidSnapshot { requested: Block, height: Block },
    #[error("tokens can only be minted at genesis")]
    GenesisClosed,
    #[error("not enough loaned tokens to cover {needed}")]
    LoanedTokensExhausted { needed: Tokens },
    #[error("locked amount of {node} is {locked}, loans require {expected}")]
    LockMismatch { node: NodeId, locked: Tokens, expected: Tokens },
    #[error("ledger dump: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Reputation(#[from] ReputationError),
    #[error(transparent)]
    Interest(#[from] InterestError),
}

/// How registering a loan moves tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoanFunding {
    /// Principal and interest stay locked on the lender until used or expired.
    #[default]
    Escrow,
    /// The borrower is credited the principal at registration and settlement
    /// draws on the recorded loaned amounts. Kept for differential testing;
    /// this mode does not conserve tokens.
    ImmediateTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub reputation: ReputationConfig,
    pub interest: InterestPolicy,
    /// Lender hops explored when settling a shortfall.
    pub settlement_depth: u32,
    /// Flat fee per lender hop taken out of that hop's contribution.
    pub dispute_hop_fee: Tokens,
    pub beacon_seed: u64,
    pub funding: LoanFunding,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            reputation: ReputationConfig::default(),
            interest: InterestPolicy::default(),
            settlement_depth: 9,
            dispute_hop_fee: 0,
            beacon_seed: 0x5eed,
            funding: LoanFunding::Escrow,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Balances {
    balance: Tokens,
    locked: Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AgreementState {
    agreement: LoanAgreement,
    schedule: InterestSchedule,
    installments_paid: Block,
    remaining_principal: Tokens,
    /// (block, amount) drawn by settlements.
    consumption: Vec<(Block, Tokens)>,
}

impl AgreementState {
    fn interest_reserve(&self) -> Tokens {
        self.schedule.remaining_after(self.installments_paid)
    }

    fn consumed(&self) -> Tokens {
        self.agreement.amount - self.remaining_principal
    }

    fn remaining_at(&self, block: Block) -> Tokens {
        let used: Tokens = self.consumption.iter().filter(|(b, _)| *b <= block).map(|(_, a)| a).sum();
        self.agreement.amount - used
    }
}

/// Outstanding debt of a borrower whose loan paid for them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repayment {
    pub agreement_id: AgreementId,
    pub debtor: NodeId,
    pub creditor: NodeId,
    pub amount: Tokens,
    pub due_block: Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub tx_id: TxId,
    /// Credited to the payee.
    pub paid_total: Tokens,
    pub paid_by_payer: Tokens,
    pub lender_contributions: Vec<(NodeId, Tokens)>,
    pub shortfall: Tokens,
    pub dispute_fees: Tokens,
    pub reputation_effects: Vec<(NodeId, Outcome)>,
}

impl SettlementReport {
    pub fn contributed(&self) -> Tokens {
        self.lender_contributions.iter().map(|(_, a)| a).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloseOutcome {
    pub agreement: LoanAgreement,
    /// The agreement was already inactive; nothing moved.
    pub already_closed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ledger {
    config: LedgerConfig,
    clock: BlockClock,
    beacon: u64,
    prev_beacon: u64,
    accounts: BTreeMap<NodeId, Balances>,
    agreements: BTreeMap<AgreementId, AgreementState>,
    /// Active agreement ids per borrower.
    active_by_borrower: BTreeMap<NodeId, BTreeSet<AgreementId>>,
    next_agreement: u64,
    fee_sink: Tokens,
    minted: Tokens,
    reputation: ReputationLedger,
    settled: BTreeSet<TxId>,
    repayments: Vec<Repayment>,
    #[serde(skip)]
    events: Vec<Event>,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn next_beacon(prev: u64, height: Block) -> u64 {
    mix64(prev ^ mix64(height))
}

/// First 8 bytes of SHA-256 over (block, previous beacon, account id).
pub fn lender_selection_hash(block: Block, prev_beacon: u64, account: NodeId) -> u64 {
    let mut h = Sha256::new();
    h.update(block.to_be_bytes());
    h.update(prev_beacon.to_be_bytes());
    h.update(account.0.to_be_bytes());
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("32-byte digest"))
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Result<Self, LedgerError> {
        let reputation = ReputationLedger::new(config.reputation)?;
        let beacon = next_beacon(config.beacon_seed, 0);
        Ok(Ledger {
            config,
            clock: BlockClock::default(),
            beacon,
            prev_beacon: config.beacon_seed,
            accounts: BTreeMap::new(),
            agreements: BTreeMap::new(),
            active_by_borrower: BTreeMap::new(),
            next_agreement: 1,
            fee_sink: 0,
            minted: 0,
            reputation,
            settled: BTreeSet::new(),
            repayments: Vec::new(),
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn height(&self) -> Block {
        self.clock.height()
    }

    pub fn beacon(&self) -> u64 {
        self.beacon
    }

    pub fn fee_sink(&self) -> Tokens {
        self.fee_sink
    }

    /// Tokens created at genesis.
    pub fn supply(&self) -> Tokens {
        self.minted
    }

    pub fn reputation_ledger(&self) -> &ReputationLedger {
        &self.reputation
    }

    pub fn reputation_of(&self, node: NodeId) -> f64 {
        self.reputation.reputation_of(node, self.height())
    }

    /// `node,block,reputation` for every account at the current block.
    pub fn reputation_csv(&self) -> String {
        let mut out = String::from("node,block,reputation\n");
        for &node in self.accounts.keys() {
            let r = crate::model::format_reputation(crate::model::quantize_reputation(self.reputation_of(node)));
            out.push_str(&format!("{node},{},{r}\n", self.height()));
        }
        out
    }

    pub fn repayments(&self) -> &[Repayment] {
        &self.repayments
    }

    pub fn is_settled(&self, tx: TxId) -> bool {
        self.settled.contains(&tx)
    }

    /// Sum of balances, locked tokens and collected fees.
    pub fn total_tokens(&self) -> Tokens {
        self.accounts.values().map(|a| a.balance + a.locked).sum::<Tokens>() + self.fee_sink
    }

    pub fn accounts(&self) -> impl Iterator<Item = Account> + '_ {
        self.accounts.keys().map(|&n| self.account(n).expect("listed account"))
    }

    pub fn account(&self, node: NodeId) -> Option<Account> {
        self.accounts.get(&node).map(|b| Account {
            node,
            balance: b.balance,
            locked: b.locked,
            reputation: self.reputation_of(node),
        })
    }

    pub fn agreement(&self, id: AgreementId) -> Option<&LoanAgreement> {
        self.agreements.get(&id).map(|s| &s.agreement)
    }

    pub fn agreements(&self) -> impl Iterator<Item = &LoanAgreement> + '_ {
        self.agreements.values().map(|s| &s.agreement)
    }

    pub fn remaining_principal(&self, id: AgreementId) -> Option<Tokens> {
        self.agreements.get(&id).map(|s| s.remaining_principal)
    }

    /// Usable principal from `lender` to `borrower` over active agreements.
    pub fn loaned_amount(&self, lender: NodeId, borrower: NodeId) -> Tokens {
        self.active_by_borrower
            .get(&borrower)
            .into_iter()
            .flatten()
            .map(|id| &self.agreements[id])
            .filter(|s| s.agreement.lender == lender)
            .map(|s| s.remaining_principal)
            .sum()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(Event { block: self.height(), kind });
    }

    fn record(&mut self, node: NodeId, outcome: Outcome) {
        let h = self.height();
        self.reputation.record_outcome(node, outcome, h);
        self.emit(EventKind::ReputationUpdated { node, outcome });
    }

    fn balances_mut(&mut self, node: NodeId) -> Result<&mut Balances, LedgerError> {
        self.accounts.get_mut(&node).ok_or(LedgerError::UnknownAccount(node))
    }

    /// Creates an account holding `balance` freshly minted tokens. Minting is
    /// only possible at height 0; later accounts must start empty.
    pub fn create_account(&mut self, node: NodeId, balance: Tokens) -> Result<Account, LedgerError> {
        if self.accounts.contains_key(&node) {
            return Err(LedgerError::DuplicateAccount(node));
        }
        if balance > 0 && self.height() > 0 {
            return Err(LedgerError::GenesisClosed);
        }
        self.accounts.insert(node, Balances { balance, locked: 0 });
        self.minted += balance;
        self.emit(EventKind::AccountCreated { node, balance });
        Ok(self.account(node).expect("just inserted"))
    }

    /// Starting reputation for `node` in place of the configured prior.
    pub fn set_reputation_baseline(&mut self, node: NodeId, reputation: f64) -> Result<(), LedgerError> {
        Ok(self.reputation.set_baseline(node, reputation)?)
    }

    fn transfer(&mut self, from: NodeId, to: NodeId, amount: Tokens) -> Result<(), LedgerError> {
        if amount == 0 {
            return Ok(());
        }
        let src = self.balances_mut(from)?;
        if src.balance < amount {
            return Err(LedgerError::InsufficientFunds { node: from, needed: amount, available: src.balance });
        }
        src.balance -= amount;
        self.balances_mut(to)?.balance += amount;
        self.emit(EventKind::TokensTransferred { from, to, amount });
        Ok(())
    }

    /// Registers a loan at the current block.
    ///
    /// In escrow mode the lender must hold the principal, the whole interest
    /// and its half of the opening fee (rounded up); principal and interest
    /// are locked. The borrower pays the other half of the fee. On any
    /// shortfall the loan is canceled and nothing changes.
    pub fn open_loan(&mut self, draft: &LoanDraft) -> Result<AgreementId, LedgerError> {
        validate_agreement(draft).map_err(LedgerError::InvalidAgreement)?;
        let height = self.height();
        if height < draft.min_open_time {
            return Err(LedgerError::NotYetOpenable { min_open_time: draft.min_open_time, height });
        }
        let lender = *self.accounts.get(&draft.lender).ok_or(LedgerError::UnknownAccount(draft.lender))?;
        let borrower = *self.accounts.get(&draft.borrower).ok_or(LedgerError::UnknownAccount(draft.borrower))?;
        let lender_rep = self.reputation_of(draft.lender);
        let borrower_rep = self.reputation_of(draft.borrower);

        let schedule = match draft.interest {
            Some(total) => InterestSchedule::for_tokens(total, draft.agreement_duration)?,
            None => self.config.interest.schedule(draft.amount, draft.agreement_duration, lender_rep)?,
        };
        let interest = schedule.total;

        let (lender_debit, lender_lock, borrower_debit) = match self.config.funding {
            LoanFunding::Escrow => {
                let lender_fee = draft.opening_fee.div_ceil(2);
                let borrower_fee = draft.opening_fee / 2;
                (draft.amount + interest + lender_fee, draft.amount + interest, borrower_fee)
            }
            LoanFunding::ImmediateTransfer => (draft.amount + draft.opening_fee, 0, 0),
        };
        if lender.balance < lender_debit {
            return Err(LedgerError::InsufficientFunds {
                node: draft.lender,
                needed: lender_debit,
                available: lender.balance,
            });
        }
        if borrower.balance < borrower_debit {
            return Err(LedgerError::InsufficientFunds {
                node: draft.borrower,
                needed: borrower_debit,
                available: borrower.balance,
            });
        }

        {
            let l = self.accounts.get_mut(&draft.lender).unwrap();
            l.balance -= lender_debit;
            l.locked += lender_lock;
        }
        {
            let b = self.accounts.get_mut(&draft.borrower).unwrap();
            b.balance -= borrower_debit;
            if self.config.funding == LoanFunding::ImmediateTransfer {
                b.balance += draft.amount;
            }
        }
        self.fee_sink += draft.opening_fee;

        let id = AgreementId(self.next_agreement);
        self.next_agreement += 1;
        let agreement = LoanAgreement {
            agreement_id: id,
            lender: draft.lender,
            borrower: draft.borrower,
            amount: draft.amount,
            repayment_time: draft.repayment_time,
            agreement_duration: draft.agreement_duration,
            min_open_time: draft.min_open_time,
            opening_fee: draft.opening_fee,
            closing_fee: draft.closing_fee,
            dispute_resolution: draft.dispute_resolution.clone(),
            opening_block: height,
            close_time: None,
            closing_block: None,
            active: true,
            reputation_snapshot: (lender_rep, borrower_rep),
            total_interest: interest,
        };
        self.agreements.insert(
            id,
            AgreementState {
                agreement,
                schedule,
                installments_paid: 0,
                remaining_principal: draft.amount,
                consumption: Vec::new(),
            },
        );
        self.active_by_borrower.entry(draft.borrower).or_default().insert(id);
        self.emit(EventKind::LoanOpened {
            agreement_id: id,
            lender: draft.lender,
            borrower: draft.borrower,
            amount: draft.amount,
            interest,
        });
        Ok(id)
    }

    /// Deactivates an agreement, unlocking what is left of its principal and
    /// interest reserve and charging the closing fee: the borrower pays it if
    /// the loan was drawn on, the lender otherwise, capped at their balance.
    fn deactivate(&mut self, id: AgreementId, reason: CloseReason) {
        let height = self.height();
        let state = self.agreements.get_mut(&id).expect("known agreement");
        debug_assert!(state.agreement.active);
        let unlocked = match self.config.funding {
            LoanFunding::Escrow => state.remaining_principal + state.interest_reserve(),
            LoanFunding::ImmediateTransfer => 0,
        };
        let used = state.consumed() > 0;
        state.agreement.active = false;
        state.agreement.closing_block = Some(height);
        state.agreement.close_time = Some(height);
        state.remaining_principal = 0;
        let a = state.agreement.clone();

        if let Some(set) = self.active_by_borrower.get_mut(&a.borrower) {
            set.remove(&id);
            if set.is_empty() {
                self.active_by_borrower.remove(&a.borrower);
            }
        }
        let lender = self.accounts.get_mut(&a.lender).expect("lender account");
        lender.locked -= unlocked;
        lender.balance += unlocked;

        let fee_payer = if used { a.borrower } else { a.lender };
        let payer = self.accounts.get_mut(&fee_payer).expect("party account");
        let fee = a.closing_fee.min(payer.balance);
        payer.balance -= fee;
        self.fee_sink += fee;

        self.emit(EventKind::LoanClosed { agreement_id: id, reason, unlocked, closing_fee: fee });
    }

    /// Closes an agreement whose validity window has ended. Closing earlier
    /// is refused since offline payees may still rely on the loan; closing an
    /// inactive agreement is a no-op.
    pub fn close_loan(&mut self, id: AgreementId) -> Result<CloseOutcome, LedgerError> {
        let state = self.agreements.get(&id).ok_or(LedgerError::UnknownAgreement(id))?;
        if !state.agreement.active {
            return Ok(CloseOutcome { agreement: state.agreement.clone(), already_closed: true });
        }
        let closes_at = state.agreement.end_block();
        if self.height() < closes_at {
            return Err(LedgerError::EarlyClosure { id, closes_at });
        }
        self.deactivate(id, CloseReason::Expired);
        Ok(CloseOutcome { agreement: self.agreements[&id].agreement.clone(), already_closed: false })
    }

    /// Moves to the next block: collects interest installments, closes
    /// expired agreements, settles due repayments and refreshes the beacon.
    /// Returns the events of this block.
    pub fn advance_block(&mut self) -> Vec<Event> {
        let first_event = self.events.len();
        let height = self.clock.tick();
        self.prev_beacon = self.beacon;
        self.beacon = next_beacon(self.beacon, height);

        let active: Vec<AgreementId> = self.active_by_borrower.values().flatten().copied().collect();
        let mut active = active;
        active.sort_unstable();

        for id in active {
            let state = &self.agreements[&id];
            let a = &state.agreement;
            let (lender, borrower, opening, end) = (a.lender, a.borrower, a.opening_block, a.end_block());
            if height > opening && height <= end {
                let k = height - opening - 1;
                let due = state.schedule.installment(k);
                let borrower_balance = self.accounts[&borrower].balance;
                if due > borrower_balance {
                    self.deactivate(id, CloseReason::Delinquent);
                    self.record(borrower, Outcome::Default);
                    continue;
                }
                if due > 0 {
                    let release = if self.config.funding == LoanFunding::Escrow { due } else { 0 };
                    let l = self.accounts.get_mut(&lender).unwrap();
                    l.locked -= release;
                    l.balance += release;
                    self.transfer(borrower, lender, due).expect("checked balance");
                    self.emit(EventKind::InterestPaid { agreement_id: id, borrower, lender, amount: due });
                }
                self.agreements.get_mut(&id).unwrap().installments_paid = k + 1;
            }
            if height >= end {
                self.deactivate(id, CloseReason::Expired);
            }
        }

        self.process_repayments();
        self.events[first_event..].to_vec()
    }

    pub fn advance_blocks(&mut self, n: u64) -> Vec<Event> {
        (0..n).flat_map(|_| self.advance_block()).collect()
    }

    fn process_repayments(&mut self) {
        let height = self.height();
        let pending = std::mem::take(&mut self.repayments);
        for r in pending {
            let balance = self.accounts[&r.debtor].balance;
            if balance >= r.amount {
                self.transfer(r.debtor, r.creditor, r.amount).expect("checked balance");
                self.emit(EventKind::Repaid {
                    agreement_id: r.agreement_id,
                    debtor: r.debtor,
                    creditor: r.creditor,
                    amount: r.amount,
                });
                self.record(r.debtor, Outcome::DirectSuccess);
            } else if height >= r.due_block {
                self.transfer(r.debtor, r.creditor, balance).expect("checked balance");
                self.emit(EventKind::RepaymentDefaulted {
                    agreement_id: r.agreement_id,
                    debtor: r.debtor,
                    creditor: r.creditor,
                    paid: balance,
                    unpaid: r.amount - balance,
                });
                self.record(r.debtor, Outcome::Default);
            } else {
                self.repayments.push(r);
            }
        }
    }

    /// Lenders of `borrower` with usable principal, in the order fixed by the
    /// block's selection hash.
    fn shuffled_lenders(&self, borrower: NodeId) -> Vec<NodeId> {
        let mut lenders: Vec<NodeId> = self
            .active_by_borrower
            .get(&borrower)
            .into_iter()
            .flatten()
            .map(|id| &self.agreements[id])
            .filter(|s| s.remaining_principal > 0)
            .map(|s| s.agreement.lender)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let seed = lender_selection_hash(self.height(), self.prev_beacon, borrower);
        lenders.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        lenders
    }

    /// Draws up to `wanted` from the active agreements `lender → borrower`
    /// (oldest first) for `payee`. Returns the amount drawn.
    fn draw_loans(&mut self, lender: NodeId, borrower: NodeId, payee: NodeId, wanted: Tokens) -> Tokens {
        let height = self.height();
        let ids: Vec<AgreementId> = self
            .active_by_borrower
            .get(&borrower)
            .into_iter()
            .flatten()
            .copied()
            .filter(|id| self.agreements[id].agreement.lender == lender)
            .collect();
        let mut drawn = 0;
        for id in ids {
            if drawn == wanted {
                break;
            }
            let state = self.agreements.get_mut(&id).unwrap();
            let take = (wanted - drawn).min(state.remaining_principal);
            if take == 0 {
                continue;
            }
            state.remaining_principal -= take;
            state.consumption.push((height, take));
            let exhausted = state.remaining_principal == 0;
            let repayment = Repayment {
                agreement_id: id,
                debtor: borrower,
                creditor: lender,
                amount: take,
                due_block: height + state.agreement.repayment_time,
            };
            drawn += take;
            if self.config.funding == LoanFunding::Escrow {
                self.accounts.get_mut(&lender).unwrap().locked -= take;
                self.accounts.get_mut(&payee).unwrap().balance += take;
                self.emit(EventKind::LoanTokensUsed { agreement_id: id, lender, borrower, payee, amount: take });
                self.emit(EventKind::RepaymentDue {
                    agreement_id: id,
                    debtor: borrower,
                    creditor: lender,
                    amount: take,
                    due_block: repayment.due_block,
                });
                self.repayments.push(repayment);
            }
            if exhausted {
                self.deactivate(id, CloseReason::Used);
            }
        }
        drawn
    }

    fn check_transaction(&self, tx: &OfflineTransaction) -> Result<(), LedgerError> {
        if self.settled.contains(&tx.tx_id) {
            return Err(LedgerError::Replay(tx.tx_id));
        }
        if !tx.signed {
            return Err(LedgerError::InvalidTransaction("missing signatures"));
        }
        if tx.amount == 0 {
            return Err(LedgerError::InvalidTransaction("non-positive amount"));
        }
        if tx.payer == tx.payee {
            return Err(LedgerError::InvalidTransaction("payer equals payee"));
        }
        if tx.agreed_at_view > self.height() {
            return Err(LedgerError::InvalidTransaction("view block lies in the future"));
        }
        for n in [tx.payer, tx.payee] {
            if !self.accounts.contains_key(&n) {
                return Err(LedgerError::UnknownAccount(n));
            }
        }
        Ok(())
    }

    /// Executes an offline payment.
    ///
    /// A solvent payer pays directly. Otherwise the payer's whole balance
    /// goes to the payee and the rest is drawn from locked loans: first the
    /// payer's lenders in hash-shuffled order, then, hop by hop up to
    /// `settlement_depth`, the lenders of every lender that contributed. Each
    /// lender/borrower pair is used at most once; the payer and payee are
    /// never drawn on. Whatever cannot be covered is reported as shortfall.
    pub fn settle_offline_transaction(&mut self, tx: &OfflineTransaction) -> Result<SettlementReport, LedgerError> {
        self.check_transaction(tx)?;
        if self.config.funding == LoanFunding::ImmediateTransfer {
            return self.settle_immediate(tx);
        }
        self.settled.insert(tx.tx_id);

        let payer_balance = self.accounts[&tx.payer].balance;
        let paid_by_payer = payer_balance.min(tx.amount);
        self.transfer(tx.payer, tx.payee, paid_by_payer).expect("bounded by balance");

        let mut remaining = tx.amount - paid_by_payer;
        let mut contributions: Vec<(NodeId, Tokens)> = Vec::new();
        let mut fees = 0;
        let mut used_pairs = BTreeSet::new();
        let mut frontier = vec![tx.payer];
        let mut depth = 0;
        while remaining > 0 && depth < self.config.settlement_depth && !frontier.is_empty() {
            depth += 1;
            let mut next = Vec::new();
            'hop: for &borrower in &frontier {
                for lender in self.shuffled_lenders(borrower) {
                    if remaining == 0 {
                        break 'hop;
                    }
                    if lender == tx.payer || lender == tx.payee || !used_pairs.insert((lender, borrower)) {
                        continue;
                    }
                    let drawn = self.draw_loans(lender, borrower, tx.payee, remaining);
                    if drawn == 0 {
                        continue;
                    }
                    remaining -= drawn;
                    let fee = self.config.dispute_hop_fee.min(drawn);
                    if fee > 0 {
                        self.accounts.get_mut(&tx.payee).unwrap().balance -= fee;
                        self.fee_sink += fee;
                        fees += fee;
                    }
                    contributions.push((lender, drawn));
                    next.push(lender);
                }
            }
            frontier = next;
        }

        let mut effects = Vec::new();
        if contributions.is_empty() && remaining == 0 {
            effects.push((tx.payer, Outcome::DirectSuccess));
        }
        if !contributions.is_empty() {
            effects.push((tx.payer, Outcome::LoanFallback));
        }
        if remaining > 0 {
            effects.push((tx.payer, Outcome::Default));
        }
        for &(node, outcome) in &effects {
            self.record(node, outcome);
        }

        let contributed: Tokens = contributions.iter().map(|(_, a)| a).sum();
        let report = SettlementReport {
            tx_id: tx.tx_id,
            paid_total: paid_by_payer + contributed - fees,
            paid_by_payer,
            lender_contributions: contributions,
            shortfall: remaining,
            dispute_fees: fees,
            reputation_effects: effects,
        };
        self.emit(EventKind::OfflineSettled {
            tx_id: tx.tx_id,
            payer: tx.payer,
            payee: tx.payee,
            credited: report.paid_total,
            shortfall: report.shortfall,
        });
        Ok(report)
    }

    /// Literal contract routine for [`LoanFunding::ImmediateTransfer`]: the
    /// shortfall is credited to the payer out of the recorded loaned amounts,
    /// and the whole transfer aborts if they do not suffice.
    fn settle_immediate(&mut self, tx: &OfflineTransaction) -> Result<SettlementReport, LedgerError> {
        let balance = self.accounts[&tx.payer].balance;
        let mut contributions = Vec::new();
        if balance < tx.amount {
            let shortfall = tx.amount - balance;
            let mut seen = BTreeSet::new();
            let lenders: Vec<NodeId> = self
                .active_by_borrower
                .get(&tx.payer)
                .into_iter()
                .flatten()
                .map(|id| self.agreements[id].agreement.lender)
                .filter(|l| seen.insert(*l))
                .collect();
            let available: Tokens = lenders.iter().map(|&l| self.loaned_amount(l, tx.payer)).sum();
            if available < shortfall {
                return Err(LedgerError::LoanedTokensExhausted { needed: shortfall });
            }
            let mut remaining = shortfall;
            for lender in lenders {
                if remaining == 0 {
                    break;
                }
                let used = self.draw_loans(lender, tx.payer, tx.payer, remaining);
                if used > 0 {
                    self.accounts.get_mut(&tx.payer).unwrap().balance += used;
                    remaining -= used;
                    contributions.push((lender, used));
                }
            }
        }
        self.settled.insert(tx.tx_id);
        self.transfer(tx.payer, tx.payee, tx.amount)?;
        let contributed: Tokens = contributions.iter().map(|(_, a)| a).sum();
        let outcome = if contributions.is_empty() { Outcome::DirectSuccess } else { Outcome::LoanFallback };
        self.record(tx.payer, outcome);
        Ok(SettlementReport {
            tx_id: tx.tx_id,
            paid_total: tx.amount,
            paid_by_payer: tx.amount - contributed,
            lender_contributions: contributions,
            shortfall: 0,
            dispute_fees: 0,
            reputation_effects: vec![(tx.payer, outcome)],
        })
    }

    /// View of the loan network as it stood at the end of block `at_block`.
    pub fn capture_view(&self, at_block: Block) -> Result<LoanNetworkView, LedgerError> {
        self.capture_view_with(at_block, &self.reputation)
    }

    pub fn capture_view_with(
        &self,
        at_block: Block,
        reputation: &dyn crate::reputation::ReputationProvider,
    ) -> Result<LoanNetworkView, LedgerError> {
        if at_block > self.height() {
            return Err(LedgerError::InvalidSnapshot { requested: at_block, height: self.height() });
        }
        let nodes = self
            .accounts
            .keys()
            .map(|&n| (n, quantize_reputation(reputation.reputation_of(n, at_block))))
            .collect();
        let edges = self
            .agreements
            .values()
            .filter(|s| {
                let a = &s.agreement;
                a.usable_at(at_block) && a.closing_block.is_none_or(|c| at_block < c)
            })
            .filter_map(|s| {
                let amount = s.remaining_at(at_block);
                (amount > 0).then(|| {
                    let mut e = s.agreement.to_edge();
                    e.amount = amount;
                    e
                })
            })
            .collect();
        LoanNetworkView::new(at_block, nodes, edges).map_err(|e| LedgerError::Parse(ParseError::View(e)))
    }

    /// Current state in the network text format plus `A` account lines.
    pub fn dump_text(&self) -> String {
        let view = self.capture_view(self.height()).expect("current block");
        let accounts: Vec<AccountLine> = self
            .accounts
            .iter()
            .map(|(&node, b)| AccountLine { node, balance: b.balance, locked: b.locked })
            .collect();
        netfile::write_ledger_dump(&view, &accounts)
    }

    /// Rebuilds a ledger from a text dump. Agreements come back interest-free
    /// with their repayment time set to their duration; node reputations
    /// become baselines. Locked amounts must match the listed loans.
    pub fn load_text(text: &str, config: LedgerConfig) -> Result<Self, LedgerError> {
        let parsed = netfile::parse(text)?;
        let mut ledger = Ledger::new(config)?;
        let height = parsed.view.as_of_block();
        ledger.clock = BlockClock::at(height);
        ledger.prev_beacon = next_beacon(config.beacon_seed, height.saturating_sub(1));
        ledger.beacon = next_beacon(ledger.prev_beacon, height);

        for (&node, &rep) in parsed.view.nodes() {
            ledger.reputation.set_baseline(node, rep)?;
            ledger.accounts.insert(node, Balances::default());
        }
        for a in &parsed.accounts {
            let entry = ledger.accounts.entry(a.node).or_default();
            *entry = Balances { balance: a.balance, locked: a.locked };
        }
        let mut expected: BTreeMap<NodeId, Tokens> = BTreeMap::new();
        for e in parsed.view.edges() {
            *expected.entry(e.lender).or_default() += e.amount;
            let agreement = LoanAgreement {
                agreement_id: e.agreement_id,
                lender: e.lender,
                borrower: e.borrower,
                amount: e.amount,
                repayment_time: e.agreement_duration,
                agreement_duration: e.agreement_duration,
                min_open_time: e.opening_block,
                opening_fee: e.opening_fee,
                closing_fee: e.closing_fee,
                dispute_resolution: crate::model::RANDOM_LENDER_TRAVERSAL.to_string(),
                opening_block: e.opening_block,
                close_time: None,
                closing_block: None,
                active: true,
                reputation_snapshot: (
                    parsed.view.reputation(e.lender).unwrap_or(0.0),
                    parsed.view.reputation(e.borrower).unwrap_or(0.0),
                ),
                total_interest: 0,
            };
            let schedule = InterestSchedule::for_tokens(0, e.agreement_duration)?;
            let paid = (height - e.opening_block).min(e.agreement_duration);
            ledger.agreements.insert(
                e.agreement_id,
                AgreementState {
                    agreement,
                    schedule,
                    installments_paid: paid,
                    remaining_principal: e.amount,
                    consumption: Vec::new(),
                },
            );
            ledger.active_by_borrower.entry(e.borrower).or_default().insert(e.agreement_id);
            ledger.next_agreement = ledger.next_agreement.max(e.agreement_id.0 + 1);
        }
        if config.funding == LoanFunding::Escrow {
            for (&node, b) in &ledger.accounts {
                let want = expected.get(&node).copied().unwrap_or(0);
                if b.locked != want {
                    return Err(LedgerError::LockMismatch { node, locked: b.locked, expected: want });
                }
            }
        }
        ledger.minted = ledger.total_tokens();
        Ok(ledger)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ledger serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Checks the ledger-wide invariants, returning the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.config.funding == LoanFunding::Escrow && self.total_tokens() != self.minted {
            return Err(format!("conservation: {} tokens, {} minted", self.total_tokens(), self.minted));
        }
        let mut locked: BTreeMap<NodeId, Tokens> = BTreeMap::new();
        for s in self.agreements.values() {
            let a = &s.agreement;
            if a.active {
                if a.closing_block.is_some() {
                    return Err(format!("active agreement {} has a closing block", a.agreement_id));
                }
                if self.config.funding == LoanFunding::Escrow {
                    *locked.entry(a.lender).or_default() += s.remaining_principal + s.interest_reserve();
                }
                let listed = self.active_by_borrower.get(&a.borrower).is_some_and(|set| set.contains(&a.agreement_id));
                if !listed {
                    return Err(format!("active agreement {} not indexed", a.agreement_id));
                }
            } else {
                match a.closing_block {
                    Some(c) if c <= a.end_block() => {}
                    _ => return Err(format!("inactive agreement {} has bad closing block", a.agreement_id)),
                }
            }
            if s.remaining_principal > a.amount {
                return Err(format!("agreement {} has more principal than its amount", a.agreement_id));
            }
        }
        for (node, b) in &self.accounts {
            let want = locked.get(node).copied().unwrap_or(0);
            if b.locked != want {
                return Err(format!("account {node}: locked {} but loans need {want}", b.locked));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
