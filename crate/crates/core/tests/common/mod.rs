//! Alice lends to Bob, Bob pays Charlie offline without funds, and the
//! ledger settles through Alice's locked loan. Bob then either repays Alice
//! with money received from Dave, or defaults.

use overdraft_core::confidence::{estimate_confidence, exact_distribution, WalkParams};
use overdraft_core::reputation::Outcome;
use overdraft_core::settlement::EventKind;
use overdraft_core::{Ledger, LedgerConfig, LoanDraft, NodeId, OfflineTransaction, SettlementReport, Tokens};

pub const ALICE: NodeId = NodeId(1);
pub const BOB: NodeId = NodeId(2);
pub const CHARLIE: NodeId = NodeId(3);
pub const DAVE: NodeId = NodeId(4);

#[derive(Debug)]
pub struct Walkthrough {
    pub alice_after_open: (Tokens, Tokens),
    pub charlie_confidence: f64,
    pub charlie_exact: f64,
    pub report: SettlementReport,
    pub alice_after_settle: (Tokens, Tokens),
    pub charlie_after_settle: Tokens,
    pub bob_rep_start: f64,
    pub bob_rep_after_settle: f64,
    pub bob_rep_final: f64,
    pub alice_final: Tokens,
    pub bob_final: Tokens,
    pub repaid: bool,
    pub defaulted: bool,
    pub conserved: bool,
}

fn balances(l: &Ledger, n: NodeId) -> (Tokens, Tokens) {
    let a = l.account(n).unwrap();
    (a.balance, a.locked)
}

pub fn run(bob_repays: bool) -> Walkthrough {
    let mut l = Ledger::new(LedgerConfig::default()).unwrap();
    l.create_account(ALICE, 200).unwrap();
    l.create_account(BOB, 0).unwrap();
    l.create_account(CHARLIE, 0).unwrap();
    l.create_account(DAVE, 100).unwrap();
    l.set_reputation_baseline(ALICE, 0.9).unwrap();
    l.set_reputation_baseline(BOB, 0.5).unwrap();

    let mut draft = LoanDraft::new(ALICE, BOB, 100, 20).with_interest(0);
    draft.repayment_time = 5;
    l.open_loan(&draft).unwrap();
    let alice_after_open = balances(&l, ALICE);
    l.advance_block();

    // Charlie judges the offline payment from the view at block 1
    let view = l.capture_view(1).unwrap();
    let params = WalkParams::new(100, 0.95, 9, 6);
    let est = estimate_confidence(&view, BOB, &params, 20_000).unwrap();
    let exact = exact_distribution(&view, BOB, &params).unwrap();
    let charlie_exact = exact.range(100..).map(|(_, p)| p).sum();

    let bob_rep_start = l.reputation_of(BOB);
    l.advance_block();
    let report = l.settle_offline_transaction(&OfflineTransaction::new(1, BOB, CHARLIE, 100, 1)).unwrap();
    let alice_after_settle = balances(&l, ALICE);
    let charlie_after_settle = l.account(CHARLIE).unwrap().balance;
    let bob_rep_after_settle = l.reputation_of(BOB);

    if bob_repays {
        l.settle_offline_transaction(&OfflineTransaction::new(2, DAVE, BOB, 100, 2)).unwrap();
    }
    let mut repaid = false;
    let mut defaulted = false;
    for _ in 0..5 {
        for e in l.advance_block() {
            match e.kind {
                EventKind::Repaid { debtor, .. } if debtor == BOB => repaid = true,
                EventKind::RepaymentDefaulted { debtor, .. } if debtor == BOB => defaulted = true,
                _ => {}
            }
        }
    }
    assert!(l.reputation_ledger().history(BOB).contains(&(2, Outcome::LoanFallback)));

    Walkthrough {
        alice_after_open,
        charlie_confidence: est.prob_at_least(100),
        charlie_exact,
        report,
        alice_after_settle,
        charlie_after_settle,
        bob_rep_start,
        bob_rep_after_settle,
        bob_rep_final: l.reputation_of(BOB),
        alice_final: l.account(ALICE).unwrap().balance,
        bob_final: l.account(BOB).unwrap().balance,
        repaid,
        defaulted,
        conserved: l.total_tokens() == l.supply() && l.check_invariants().is_ok(),
    }
}

/// Every expected token movement and reputation sign of both branches.
pub fn check() -> Result<(), String> {
    let ok = |cond: bool, what: &str| if cond { Ok(()) } else { Err(what.to_string()) };
    for repays in [true, false] {
        let w = run(repays);
        ok(w.alice_after_open == (100, 100), "loan locks Alice's 100")?;
        ok((w.charlie_confidence - w.charlie_exact).abs() < 0.02, "Charlie's estimate matches the exact value")?;
        ok(w.report.paid_by_payer == 0, "Bob pays nothing himself")?;
        ok(w.report.lender_contributions == vec![(ALICE, 100)], "Alice's loan covers the payment")?;
        ok(w.report.shortfall == 0, "no shortfall")?;
        ok(w.alice_after_settle == (100, 0), "Alice's locked tokens go to Charlie")?;
        ok(w.charlie_after_settle == 100, "Charlie receives 100")?;
        ok(w.bob_rep_after_settle < w.bob_rep_start, "fallback lowers Bob's reputation")?;
        ok(w.conserved, "tokens conserved")?;
        if repays {
            ok(w.repaid && !w.defaulted, "Bob repays")?;
            ok(w.alice_final == 200, "Alice is made whole")?;
            ok(w.bob_final == 0, "Bob's income goes to Alice")?;
            ok(w.bob_rep_final > w.bob_rep_after_settle, "repayment raises Bob's reputation")?;
        } else {
            ok(w.defaulted && !w.repaid, "Bob defaults")?;
            ok(w.alice_final == 100, "Alice loses the loan")?;
            ok(w.bob_rep_final < w.bob_rep_after_settle, "default lowers Bob's reputation")?;
        }
    }
    Ok(())
}
