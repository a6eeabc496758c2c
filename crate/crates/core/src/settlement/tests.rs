use proptest::prelude::*;

use super::*;
use crate::model::{LoanDraft, NodeId, OfflineTransaction};

fn n(i: u64) -> NodeId {
    NodeId(i)
}

fn ledger_with(balances: &[(u64, Tokens)]) -> Ledger {
    let mut l = Ledger::new(LedgerConfig::default()).unwrap();
    for &(id, b) in balances {
        l.create_account(n(id), b).unwrap();
    }
    l
}

fn loan(lender: u64, borrower: u64, amount: Tokens, duration: Block) -> LoanDraft {
    LoanDraft::new(n(lender), n(borrower), amount, duration).with_interest(0)
}

fn snapshot(l: &Ledger) -> String {
    l.to_json()
}

#[test]
fn open_locks_principal_and_interest() {
    let mut l = ledger_with(&[(1, 1000), (2, 0)]);
    let id = l.open_loan(&loan(1, 2, 100, 10).with_interest(53)).unwrap();
    let a = l.account(n(1)).unwrap();
    assert_eq!((a.balance, a.locked), (847, 153));
    assert_eq!(l.account(n(2)).unwrap().balance, 0);
    assert!(l.agreement(id).unwrap().active);
    assert_eq!(l.loaned_amount(n(1), n(2)), 100);
    l.check_invariants().unwrap();
}

#[test]
fn open_without_funds_is_canceled() {
    let mut l = ledger_with(&[(1, 100), (2, 0)]);
    let before = snapshot(&l);
    let err = l.open_loan(&loan(1, 2, 100, 10).with_interest(53)).unwrap_err();
    assert_eq!(err, LedgerError::InsufficientFunds { node: n(1), needed: 153, available: 100 });
    assert_eq!(snapshot(&l), before);
}

#[test]
fn open_rejects_bad_drafts() {
    let mut l = ledger_with(&[(1, 100), (2, 0)]);
    assert_eq!(
        l.open_loan(&loan(1, 1, 10, 10)).unwrap_err(),
        LedgerError::InvalidAgreement(vec![Violation::SelfLoan])
    );
    let mut early = loan(1, 2, 10, 10);
    early.min_open_time = 3;
    assert_eq!(l.open_loan(&early).unwrap_err(), LedgerError::NotYetOpenable { min_open_time: 3, height: 0 });
    assert_eq!(l.open_loan(&loan(1, 9, 10, 10)).unwrap_err(), LedgerError::UnknownAccount(n(9)));
}

#[test]
fn opening_fee_is_split_against_the_lender() {
    let mut l = ledger_with(&[(1, 100), (2, 10)]);
    l.open_loan(&loan(1, 2, 50, 10).with_fees(5, 0)).unwrap();
    assert_eq!(l.account(n(1)).unwrap().balance, 47);
    assert_eq!(l.account(n(2)).unwrap().balance, 8);
    assert_eq!(l.fee_sink(), 5);

    let mut poor = ledger_with(&[(1, 100), (2, 1)]);
    let before = snapshot(&poor);
    assert!(matches!(
        poor.open_loan(&loan(1, 2, 50, 10).with_fees(5, 0)),
        Err(LedgerError::InsufficientFunds { .. })
    ));
    assert_eq!(snapshot(&poor), before);
}

#[test]
fn expiry_unlocks_at_end_block() {
    let mut l = ledger_with(&[(1, 100), (2, 0)]);
    l.advance_blocks(5);
    let id = l.open_loan(&loan(1, 2, 100, 3)).unwrap();
    l.advance_blocks(2);
    assert!(l.agreement(id).unwrap().active);
    assert_eq!(l.close_loan(id).unwrap_err(), LedgerError::EarlyClosure { id, closes_at: 8 });
    let events = l.advance_block();
    assert_eq!(l.height(), 8);
    assert!(!l.agreement(id).unwrap().active);
    assert_eq!(l.agreement(id).unwrap().closing_block, Some(8));
    assert!(events
        .iter()
        .any(|e| matches!(e.kind, EventKind::LoanClosed { reason: CloseReason::Expired, unlocked: 100, .. })));
    assert_eq!(l.account(n(1)).unwrap().balance, 100);
    let closed = l.close_loan(id).unwrap();
    assert!(closed.already_closed);
    l.check_invariants().unwrap();
}

#[test]
fn interest_is_paid_per_block() {
    let mut l = ledger_with(&[(1, 200), (2, 10)]);
    let id = l.open_loan(&loan(1, 2, 100, 4).with_interest(10)).unwrap();
    let mut paid = Vec::new();
    for _ in 0..4 {
        for e in l.advance_block() {
            if let EventKind::InterestPaid { amount, .. } = e.kind {
                paid.push(amount);
            }
        }
        l.check_invariants().unwrap();
    }
    assert_eq!(paid, vec![3, 3, 3, 1]);
    assert!(!l.agreement(id).unwrap().active);
    assert_eq!(l.account(n(1)).unwrap().balance, 210);
    assert_eq!(l.account(n(1)).unwrap().locked, 0);
    assert_eq!(l.account(n(2)).unwrap().balance, 0);
}

#[test]
fn missed_installment_closes_as_delinquent() {
    let mut l = ledger_with(&[(1, 200), (2, 0)]);
    let id = l.open_loan(&loan(1, 2, 100, 4).with_interest(10)).unwrap();
    let events = l.advance_block();
    assert!(!l.agreement(id).unwrap().active);
    assert!(events.iter().any(|e| matches!(e.kind, EventKind::LoanClosed { reason: CloseReason::Delinquent, .. })));
    assert_eq!(l.reputation_ledger().history(n(2)), &[(1, Outcome::Default)]);
    assert_eq!(l.account(n(1)).unwrap().balance, 200);
    l.check_invariants().unwrap();
}

#[test]
fn empty_block_only_moves_clock_and_beacon() {
    let mut l = ledger_with(&[(1, 5)]);
    let beacon = l.beacon();
    assert!(l.advance_block().is_empty());
    assert_eq!(l.height(), 1);
    assert_ne!(l.beacon(), beacon);
    assert_eq!(l.account(n(1)).unwrap().balance, 5);
}

#[test]
fn beacon_is_deterministic() {
    let mut a = ledger_with(&[]);
    let mut b = ledger_with(&[]);
    a.advance_blocks(10);
    b.advance_blocks(10);
    assert_eq!(a.beacon(), b.beacon());
    let mut c = Ledger::new(LedgerConfig { beacon_seed: 1, ..LedgerConfig::default() }).unwrap();
    c.advance_blocks(10);
    assert_ne!(a.beacon(), c.beacon());
}

#[test]
fn solvent_payer_pays_directly() {
    let mut l = ledger_with(&[(1, 150), (2, 0)]);
    let r = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 100, 0)).unwrap();
    assert_eq!((r.paid_by_payer, r.paid_total, r.shortfall), (100, 100, 0));
    assert!(r.lender_contributions.is_empty());
    assert_eq!(r.reputation_effects, vec![(n(1), Outcome::DirectSuccess)]);
    assert_eq!(l.account(n(2)).unwrap().balance, 100);
}

#[test]
fn insolvent_payer_uses_the_loan() {
    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 100)]);
    l.open_loan(&loan(3, 1, 100, 10)).unwrap();
    let r = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 100, 0)).unwrap();
    assert_eq!(r.lender_contributions, vec![(n(3), 100)]);
    assert_eq!(r.paid_total, 100);
    assert_eq!(r.reputation_effects, vec![(n(1), Outcome::LoanFallback)]);
    assert_eq!(l.account(n(2)).unwrap().balance, 100);
    assert_eq!(l.account(n(3)).unwrap().locked, 0);
    assert_eq!(l.repayments().len(), 1);
    l.check_invariants().unwrap();
}

#[test]
fn partial_cover_leaves_shortfall() {
    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 30), (4, 50)]);
    l.open_loan(&loan(3, 1, 30, 10)).unwrap();
    l.open_loan(&loan(4, 1, 50, 10)).unwrap();
    let r = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 100, 0)).unwrap();
    let mut contributions = r.lender_contributions.clone();
    contributions.sort();
    assert_eq!(contributions, vec![(n(3), 30), (n(4), 50)]);
    assert_eq!(r.shortfall, 20);
    assert_eq!(r.paid_total, 80);
    assert_eq!(r.reputation_effects, vec![(n(1), Outcome::LoanFallback), (n(1), Outcome::Default)]);
    assert_eq!(l.account(n(2)).unwrap().balance, 80);
    l.check_invariants().unwrap();
}

#[test]
fn settlement_recurses_into_lenders_of_lenders() {
    // 3 lends 20 to payer 1, 4 lends 50 to 3
    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 20), (4, 50)]);
    l.open_loan(&loan(3, 1, 20, 10)).unwrap();
    l.open_loan(&loan(4, 3, 50, 10)).unwrap();
    let r = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 60, 0)).unwrap();
    assert_eq!(r.lender_contributions, vec![(n(3), 20), (n(4), 40)]);
    assert_eq!(r.shortfall, 0);
    assert_eq!(l.account(n(2)).unwrap().balance, 60);
    assert_eq!(l.remaining_principal(AgreementId(2)), Some(10));
    l.check_invariants().unwrap();

    let mut shallow = ledger_with(&[(1, 0), (2, 0), (3, 20), (4, 50)]);
    shallow.config.settlement_depth = 1;
    shallow.open_loan(&loan(3, 1, 20, 10)).unwrap();
    shallow.open_loan(&loan(4, 3, 50, 10)).unwrap();
    let r = shallow.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 60, 0)).unwrap();
    assert_eq!(r.shortfall, 40);
}

#[test]
fn settlement_never_draws_on_payer_or_payee() {
    // payee 2 lends to 3 who lends to payer 1
    let mut l = ledger_with(&[(1, 0), (2, 100), (3, 10)]);
    l.open_loan(&loan(3, 1, 10, 10)).unwrap();
    l.open_loan(&loan(2, 3, 100, 10)).unwrap();
    let r = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 50, 0)).unwrap();
    assert_eq!(r.lender_contributions, vec![(n(3), 10)]);
    assert_eq!(r.shortfall, 40);
}

#[test]
fn hop_fee_is_taken_from_contributions() {
    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 100)]);
    l.config.dispute_hop_fee = 2;
    l.open_loan(&loan(3, 1, 100, 10)).unwrap();
    let r = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 100, 0)).unwrap();
    assert_eq!(r.dispute_fees, 2);
    assert_eq!(r.paid_total, 98);
    assert_eq!(r.paid_by_payer + r.contributed() + r.shortfall, 100);
    assert_eq!(l.account(n(2)).unwrap().balance, 98);
    l.check_invariants().unwrap();
}

#[test]
fn replay_and_malformed_transactions() {
    let mut l = ledger_with(&[(1, 150), (2, 0)]);
    let tx = OfflineTransaction::new(7, n(1), n(2), 10, 0);
    l.settle_offline_transaction(&tx).unwrap();
    let before = snapshot(&l);
    assert_eq!(l.settle_offline_transaction(&tx).unwrap_err(), LedgerError::Replay(TxId(7)));
    assert_eq!(snapshot(&l), before);
    assert!(l.is_settled(TxId(7)));
    assert!(matches!(
        l.settle_offline_transaction(&OfflineTransaction::new(8, n(1), n(1), 10, 0)),
        Err(LedgerError::InvalidTransaction(_))
    ));
    assert!(matches!(
        l.settle_offline_transaction(&OfflineTransaction::new(9, n(1), n(2), 0, 0)),
        Err(LedgerError::InvalidTransaction(_))
    ));
    assert!(matches!(
        l.settle_offline_transaction(&OfflineTransaction::new(10, n(1), n(2), 1, 5)),
        Err(LedgerError::InvalidTransaction(_))
    ));
    assert_eq!(
        l.settle_offline_transaction(&OfflineTransaction::new(11, n(1), n(5), 1, 0)).unwrap_err(),
        LedgerError::UnknownAccount(n(5))
    );
}

#[test]
fn conflicting_payments_are_bounded_by_reachable_funds() {
    let mut l = ledger_with(&[(1, 30), (2, 0), (3, 0), (4, 50)]);
    l.open_loan(&loan(4, 1, 50, 10)).unwrap();
    let a = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 60, 0)).unwrap();
    let b = l.settle_offline_transaction(&OfflineTransaction::new(2, n(1), n(3), 60, 0)).unwrap();
    assert_eq!(a.paid_total, 60);
    assert_eq!(b.paid_total, 20);
    assert_eq!(b.shortfall, 40);
    assert!(a.paid_total + b.paid_total <= 80);
}

#[test]
fn repayment_then_default_branch() {
    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 100), (4, 100)]);
    let mut d = loan(3, 1, 100, 20);
    d.repayment_time = 5;
    l.open_loan(&d).unwrap();
    l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 100, 0)).unwrap();
    l.advance_blocks(4);
    assert_eq!(l.repayments().len(), 1);
    l.settle_offline_transaction(&OfflineTransaction::new(2, n(4), n(1), 100, 4)).unwrap();
    let events = l.advance_block();
    assert!(events.iter().any(|e| matches!(e.kind, EventKind::Repaid { amount: 100, .. })));
    assert_eq!(l.account(n(3)).unwrap().balance, 100);
    assert!(l.repayments().is_empty());

    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 100), (4, 100)]);
    l.open_loan(&d).unwrap();
    l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 100, 0)).unwrap();
    l.advance_blocks(2);
    l.settle_offline_transaction(&OfflineTransaction::new(2, n(4), n(1), 30, 2)).unwrap();
    l.advance_blocks(2);
    assert_eq!(l.repayments().len(), 1);
    let events = l.advance_block();
    assert!(events.iter().any(|e| matches!(e.kind, EventKind::RepaymentDefaulted { paid: 30, unpaid: 70, .. })));
    assert_eq!(l.account(n(3)).unwrap().balance, 30);
    assert_eq!(l.reputation_ledger().history(n(1)).last(), Some(&(5, Outcome::Default)));
    l.check_invariants().unwrap();
}

#[test]
fn used_loan_charges_closing_fee_to_borrower() {
    let mut l = ledger_with(&[(1, 5), (2, 0), (3, 100)]);
    l.open_loan(&loan(3, 1, 50, 10).with_fees(0, 4)).unwrap();
    l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 55, 0)).unwrap();
    // payer spent its 5 before the fee came due: fee capped at zero
    assert_eq!(l.fee_sink(), 0);

    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 100)]);
    l.open_loan(&loan(3, 1, 50, 3).with_fees(0, 4)).unwrap();
    l.advance_blocks(3);
    assert_eq!(l.fee_sink(), 4);
    assert_eq!(l.account(n(3)).unwrap().balance, 96);
    l.check_invariants().unwrap();
}

#[test]
fn close_used_agreement_is_noop() {
    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 100)]);
    let id = l.open_loan(&loan(3, 1, 100, 10)).unwrap();
    l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 100, 0)).unwrap();
    let before = snapshot(&l);
    let out = l.close_loan(id).unwrap();
    assert!(out.already_closed);
    assert_eq!(snapshot(&l), before);
    assert_eq!(l.close_loan(AgreementId(99)).unwrap_err(), LedgerError::UnknownAgreement(AgreementId(99)));
}

#[test]
fn views_reflect_history() {
    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 100)]);
    l.open_loan(&loan(3, 1, 100, 10)).unwrap();
    l.advance_blocks(2);
    l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 40, 0)).unwrap();
    l.advance_block();
    let at1 = l.capture_view(1).unwrap();
    assert_eq!(at1.edges()[0].amount, 100);
    let now = l.capture_view(3).unwrap();
    assert_eq!(now.edges()[0].amount, 60);
    assert_eq!(now.reputation(n(3)), Some(0.2));
    assert!(matches!(l.capture_view(4), Err(LedgerError::InvalidSnapshot { requested: 4, height: 3 })));
    l.advance_blocks(10);
    assert!(l.capture_view(l.height()).unwrap().edges().is_empty());
}

#[test]
fn minting_only_at_genesis() {
    let mut l = ledger_with(&[(1, 10)]);
    l.advance_block();
    assert_eq!(l.create_account(n(2), 5).unwrap_err(), LedgerError::GenesisClosed);
    l.create_account(n(2), 0).unwrap();
    assert_eq!(l.create_account(n(2), 0).unwrap_err(), LedgerError::DuplicateAccount(n(2)));
    assert_eq!(l.supply(), 10);
}

#[test]
fn json_snapshot_round_trip() {
    let mut l = ledger_with(&[(1, 0), (2, 0), (3, 200)]);
    l.open_loan(&loan(3, 1, 100, 10).with_interest(9)).unwrap();
    l.advance_blocks(2);
    l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 40, 0)).unwrap();
    let copy = Ledger::from_json(&l.to_json()).unwrap();
    assert_eq!(copy.to_json(), l.to_json());
    copy.check_invariants().unwrap();
}

#[test]
fn text_dump_round_trip() {
    let mut l = ledger_with(&[(1, 0), (2, 10), (3, 100)]);
    l.open_loan(&loan(3, 1, 60, 10)).unwrap();
    l.open_loan(&loan(2, 3, 10, 10)).unwrap();
    l.advance_blocks(2);
    let text = l.dump_text();
    let loaded = Ledger::load_text(&text, LedgerConfig::default()).unwrap();
    assert_eq!(loaded.height(), 2);
    assert_eq!(loaded.dump_text(), text);
    loaded.check_invariants().unwrap();
    assert_eq!(loaded.total_tokens(), l.total_tokens());

    let broken = text.replace("A 3 40 60", "A 3 40 61");
    assert!(matches!(Ledger::load_text(&broken, LedgerConfig::default()), Err(LedgerError::LockMismatch { .. })));
}

#[test]
fn settlement_is_deterministic() {
    let build = || {
        let mut l = ledger_with(&[(1, 0), (2, 0), (3, 30), (4, 30), (5, 30), (6, 30)]);
        for lender in 3..=6 {
            l.open_loan(&loan(lender, 1, 30, 10)).unwrap();
        }
        l.advance_blocks(3);
        l
    };
    let tx = OfflineTransaction::new(1, n(1), n(2), 50, 0);
    let a = build().settle_offline_transaction(&tx).unwrap();
    let b = build().settle_offline_transaction(&tx).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lender_order_depends_on_beacon() {
    let mut orders = std::collections::BTreeSet::new();
    for seed in 0..20 {
        let mut l = Ledger::new(LedgerConfig { beacon_seed: seed, ..LedgerConfig::default() }).unwrap();
        for (i, b) in [(1, 0), (2, 0), (3, 30), (4, 30), (5, 30)] {
            l.create_account(n(i), b).unwrap();
        }
        for lender in 3..=5 {
            l.open_loan(&loan(lender, 1, 30, 10)).unwrap();
        }
        l.advance_block();
        let r = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 30, 0)).unwrap();
        orders.insert(r.lender_contributions[0].0);
    }
    assert!(orders.len() > 1);
}

#[test]
fn immediate_transfer_mode_mints_tokens() {
    let config = LedgerConfig { funding: LoanFunding::ImmediateTransfer, ..LedgerConfig::default() };
    let mut l = Ledger::new(config).unwrap();
    for (i, b) in [(1, 0), (2, 0), (3, 100)] {
        l.create_account(n(i), b).unwrap();
    }
    l.open_loan(&loan(3, 1, 100, 10)).unwrap();
    assert_eq!(l.account(n(1)).unwrap().balance, 100);
    assert_eq!(l.account(n(3)).unwrap().locked, 0);
    l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 150, 0)).unwrap();
    assert!(l.total_tokens() > l.supply());

    let mut short = Ledger::new(config).unwrap();
    for (i, b) in [(1, 0), (2, 0), (3, 100)] {
        short.create_account(n(i), b).unwrap();
    }
    short.open_loan(&loan(3, 1, 20, 10)).unwrap();
    assert_eq!(
        short.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 50, 0)).unwrap_err(),
        LedgerError::LoanedTokensExhausted { needed: 30 }
    );
}

#[test]
fn escrow_mode_conserves_where_immediate_does_not() {
    let script = |funding| {
        let mut l = Ledger::new(LedgerConfig { funding, ..LedgerConfig::default() }).unwrap();
        for (i, b) in [(1, 10), (2, 0), (3, 100)] {
            l.create_account(n(i), b).unwrap();
        }
        l.open_loan(&loan(3, 1, 100, 10)).unwrap();
        let _ = l.settle_offline_transaction(&OfflineTransaction::new(1, n(1), n(2), 150, 0));
        l.advance_blocks(12);
        l.total_tokens() as i64 - l.supply() as i64
    };
    assert_eq!(script(LoanFunding::Escrow), 0);
    assert_ne!(script(LoanFunding::ImmediateTransfer), 0);
}

#[test]
fn event_log_lines() {
    let mut l = ledger_with(&[(1, 100), (2, 0)]);
    l.open_loan(&loan(1, 2, 10, 2)).unwrap();
    l.advance_blocks(2);
    let text = to_json_lines(l.events());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), l.events().len());
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["kind"], "account_created");
    assert_eq!(first["block"], 0);
    assert_eq!(first["payload"]["balance"], 100);
    let parsed: Event = serde_json::from_str(lines[lines.len() - 1]).unwrap();
    assert_eq!(&parsed, l.events().last().unwrap());
}

#[derive(Debug, Clone)]
enum Op {
    Open { lender: u64, borrower: u64, amount: Tokens, duration: Block, interest: Tokens, fees: (Tokens, Tokens) },
    Advance(u64),
    Settle { payer: u64, payee: u64, amount: Tokens },
    Close(u64),
}

fn op() -> impl Strategy<Value = Op> {
    let node = 0u64..8;
    prop_oneof![
        (node.clone(), node.clone(), 1u64..80, 1u64..12, 0u64..20, (0u64..5, 0u64..5)).prop_map(
            |(lender, borrower, amount, duration, interest, fees)| Op::Open {
                lender,
                borrower,
                amount,
                duration,
                interest,
                fees
            }
        ),
        (1u64..4).prop_map(Op::Advance),
        (node.clone(), node, 1u64..150).prop_map(|(payer, payee, amount)| Op::Settle { payer, payee, amount }),
        (1u64..40).prop_map(Op::Close),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn invariants_hold_under_random_operations(ops in proptest::collection::vec(op(), 1..80), depth in 1u32..4) {
        let mut l = Ledger::new(LedgerConfig { settlement_depth: depth, ..LedgerConfig::default() }).unwrap();
        for i in 0..8 {
            l.create_account(n(i), 50 + 20 * i).unwrap();
        }
        let genesis = l.total_tokens();
        let mut tx = 0;
        for op in ops {
            match op {
                Op::Open { lender, borrower, amount, duration, interest, fees } => {
                    let before = l.to_json();
                    let d = loan(lender, borrower, amount, duration).with_interest(interest).with_fees(fees.0, fees.1);
                    if l.open_loan(&d).is_err() {
                        prop_assert_eq!(l.to_json(), before);
                    }
                }
                Op::Advance(k) => { l.advance_blocks(k); }
                Op::Settle { payer, payee, amount } => {
                    tx += 1;
                    let at = l.height();
                    if let Ok(r) = l.settle_offline_transaction(&OfflineTransaction::new(tx, n(payer), n(payee), amount, at)) {
                        prop_assert_eq!(r.paid_by_payer + r.contributed() + r.shortfall, amount);
                    }
                }
                Op::Close(id) => { let _ = l.close_loan(AgreementId(id)); }
            }
            prop_assert_eq!(l.total_tokens(), genesis);
            if let Err(e) = l.check_invariants() {
                prop_assert!(false, "{}", e);
            }
        }
    }
}
