//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use overdraft_core::bench::{generate_random_network, time_estimate, BenchConfig, ROOT};
use overdraft_core::confidence::{
    estimate_confidence, exact_expectation, LoanGraph, NaiveWalker, WalkParams, Walker,
};
use overdraft_core::incentives::{total_interest, InterestParams};
use overdraft_core::model::{AgreementId, LoanEdge};
use overdraft_core::reputation::{sybil_split_profitability, SplitVerdict};
use overdraft_core::sybil::{build_scenario, evaluate_attack, AttackKind, AttackParams, AttackVerdict};
use overdraft_core::{Ledger, LedgerConfig, LoanDraft, LoanNetworkView, NodeId, OfflineTransaction, Tokens};

type Outcome = Result<String, String>;

fn edge(id: u64, lender: u64, borrower: u64, amount: Tokens) -> LoanEdge {
    LoanEdge {
        agreement_id: AgreementId(id),
        lender: NodeId(lender),
        borrower: NodeId(borrower),
        amount,
        opening_block: 0,
        agreement_duration: 10,
        opening_fee: 0,
        closing_fee: 0,
    }
}

fn view(nodes: &[(u64, f64)], edges: Vec<LoanEdge>) -> LoanNetworkView {
    let nodes: BTreeMap<NodeId, f64> = nodes.iter().map(|&(n, r)| (NodeId(n), r)).collect();
    LoanNetworkView::new(0, nodes, edges).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut within = 0;
    let cases = 200;
    for case in 0..cases {
        let n = rng.gen_range(2..=8u64);
        let nodes: Vec<(u64, f64)> = (0..n).map(|i| (i, (rng.gen::<f64>() * 1e6).round() / 1e6)).collect();
        // lenders always have a larger id than their borrower: acyclic
        let m = rng.gen_range(1..=12u64);
        let edges: Vec<LoanEdge> = (0..m)
            .map(|id| {
                let b = rng.gen_range(0..n - 1);
                let l = rng.gen_range(b + 1..n);
                edge(id + 1, l, b, rng.gen_range(1..=60))
            })
            .collect();
        let v = view(&nodes, edges);
        let params =
            WalkParams::new(rng.gen_range(1..=150), rng.gen_range(0.5..=1.0), rng.gen_range(1..=9), case).uncapped();
        let exact = exact_expectation(&v, NodeId(0), &params).map_err(|e| e.to_string())?;
        let est = estimate_confidence(&v, NodeId(0), &params, 100_000).map_err(|e| e.to_string())?;
        let se = est.standard_error();
        if (est.mean - exact).abs() <= 4.0 * se + 1e-9 {
            within += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{within}/{cases} within 4 SE in {secs:.1}s");
    if within >= 195 && secs <= 120.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn closed_form() -> Outcome {
    let start = Instant::now();
    let v = view(&[(1, 0.5), (2, 1.0)], vec![edge(1, 2, 1, 100)]);
    let mut means = Vec::new();
    for params in [WalkParams::new(100, 0.95, 9, 2024), WalkParams::new(100, 0.95, 9, 2024).uncapped()] {
        means.push(estimate_confidence(&v, NodeId(1), &params, 100_000).map_err(|e| e.to_string())?.mean);
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("means {:.3} / {:.3} (expected 97.5 +- 0.3) in {secs:.2}s", means[0], means[1]);
    if means.iter().all(|m| (m - 97.5).abs() <= 0.3) && secs <= 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ci_scaling() -> Outcome {
    let config = BenchConfig::default();
    let v = generate_random_network(10, &config).map_err(|e| e.to_string())?;
    let params = config.walk_params();
    let small = estimate_confidence(&v, ROOT, &params, 100).map_err(|e| e.to_string())?;
    let large = estimate_confidence(&v, ROOT, &params, 100_000).map_err(|e| e.to_string())?;
    let ratio = small.ci95_width / large.ci95_width;
    let detail = format!("ci95 {:.3} -> {:.4}, ratio {ratio:.1} (want 20..45)", small.ci95_width, large.ci95_width);
    if (20.0..=45.0).contains(&ratio) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Best per-call time over several batches, each at least ~40 ms long.
fn per_call_ms(v: &LoanNetworkView, params: &WalkParams, k: u64) -> f64 {
    let (first, _) = time_estimate(v, params, k, true).unwrap();
    let reps = ((40.0 / first.max(1e-3)).ceil() as usize).clamp(1, 100_000);
    (0..5)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                time_estimate(v, params, k, true).unwrap();
            }
            t.elapsed().as_secs_f64() * 1e3 / reps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn runtime_scaling() -> Outcome {
    let config = BenchConfig::default();
    let params = config.walk_params();
    let small = generate_random_network(10, &config).map_err(|e| e.to_string())?;
    let ks = [100u64, 1_000, 10_000, 100_000];
    let times: Vec<f64> = ks.iter().map(|&k| per_call_ms(&small, &params, k)).collect();
    let mut linear = true;
    let mut parts = Vec::new();
    for (i, &k) in ks.iter().enumerate().skip(1) {
        let growth = times[i] / times[0];
        let expected = k as f64 / ks[0] as f64;
        let factor = growth / expected;
        linear &= (1.0 / 1.5..=1.5).contains(&factor);
        parts.push(format!("K={k} x{growth:.0} (ideal x{expected:.0})"));
    }

    let big = generate_random_network(1_000_000, &config).map_err(|e| e.to_string())?;
    let (opt_ms, opt) = time_estimate(&big, &params, 10_000, true).map_err(|e| e.to_string())?;
    let (naive_ms, naive) = time_estimate(&big, &params, 10_000, false).map_err(|e| e.to_string())?;
    let ordered = opt_ms < naive_ms && opt.histogram == naive.histogram;
    let detail = format!(
        "{}; n=1e6 K=1e4 optimized {opt_ms:.0} ms vs unoptimized {naive_ms:.0} ms",
        parts.join(", ")
    );
    if linear && ordered {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn interest() -> Outcome {
    let p = InterestParams::reference();
    let value = total_interest(&p).map_err(|e| e.to_string())?;
    let reference = 52.882_261_802_165_19;
    let mut monotone = true;
    let mut prev_r = f64::NEG_INFINITY;
    let mut prev_a = f64::NEG_INFINITY;
    for i in 0..100 {
        let r = total_interest(&InterestParams { lender_reputation: i as f64 / 99.0, ..p }).unwrap();
        let a = total_interest(&InterestParams { loan_amount: 1.0 + i as f64 * 10.0, ..p }).unwrap();
        monotone &= r >= prev_r && a > prev_a;
        prev_r = r;
        prev_a = a;
    }
    let detail = format!("I = {value:.4} (oracle {reference:.4}), monotone sweeps: {monotone}");
    if (value - 52.88).abs() <= 0.01 && (value - reference).abs() < 1e-9 && monotone {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut l = Ledger::new(LedgerConfig { dispute_hop_fee: 1, ..LedgerConfig::default() }).unwrap();
    for i in 0..100 {
        l.create_account(NodeId(i), rng.gen_range(0..2_000)).unwrap();
        l.set_reputation_baseline(NodeId(i), rng.gen()).unwrap();
    }
    let genesis = l.total_tokens();
    let (mut settlements, mut opened, mut tx) = (0u64, 0u64, 0u64);
    let ops = 100_000;
    for i in 0..ops {
        let node = |rng: &mut ChaCha8Rng| NodeId(rng.gen_range(0..100));
        match rng.gen_range(0..10) {
            0..=3 => {
                let mut d = LoanDraft::new(node(&mut rng), node(&mut rng), rng.gen_range(1..300), rng.gen_range(1..60))
                    .with_fees(rng.gen_range(0..4), rng.gen_range(0..4));
                d.repayment_time = rng.gen_range(1..30);
                if rng.gen_bool(0.5) {
                    d = d.with_interest(rng.gen_range(0..30));
                }
                opened += u64::from(l.open_loan(&d).is_ok());
            }
            4..=5 => {
                l.advance_blocks(rng.gen_range(1..3));
            }
            6..=8 => {
                tx += 1;
                let amount = rng.gen_range(1..800);
                let at = l.height().saturating_sub(rng.gen_range(0..3));
                let t = OfflineTransaction::new(tx, node(&mut rng), node(&mut rng), amount, at);
                if let Ok(r) = l.settle_offline_transaction(&t) {
                    settlements += 1;
                    if r.paid_by_payer + r.contributed() + r.shortfall != amount {
                        return Err(format!("report arithmetic broken for tx {tx}: {r:?}"));
                    }
                }
            }
            _ => {
                let id = AgreementId(rng.gen_range(1..=opened.max(1)));
                let _ = l.close_loan(id);
            }
        }
        if l.total_tokens() != genesis {
            return Err(format!("op {i}: total {} != genesis {genesis}", l.total_tokens()));
        }
        if i % 1_000 == 0 {
            l.check_invariants().map_err(|e| format!("op {i}: {e}"))?;
        }
    }
    l.check_invariants()?;
    Ok(format!(
        "{ops} ops, {opened} loans, {settlements} settlements, total {genesis} = genesis (fees collected {})",
        l.fee_sink()
    ))
}

fn locking_defense() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut duplicates, mut rejected) = (0u64, 0u64);
    for run in 0..1_000u64 {
        let balance = rng.gen_range(1..1_000);
        let attacker = NodeId(1);
        let mut l = Ledger::new(LedgerConfig::default()).unwrap();
        l.create_account(attacker, balance).unwrap();
        let sybils = rng.gen_range(2..6);
        for s in 0..sybils {
            l.create_account(NodeId(10 + s), 0).unwrap();
        }
        l.create_account(NodeId(99), 0).unwrap();
        for step in 0..rng.gen_range(2..12) {
            // every attempt reuses the attacker's whole initial balance
            let amount = rng.gen_range(balance.div_ceil(2)..=balance);
            let borrower = NodeId(10 + rng.gen_range(0..sybils));
            let free = l.account(attacker).unwrap().balance;
            let d = LoanDraft::new(attacker, borrower, amount, rng.gen_range(1..20)).with_interest(rng.gen_range(0..5));
            let needs = amount + d.interest.unwrap();
            let accepted = l.open_loan(&d).is_ok();
            if needs > free {
                duplicates += 1;
                rejected += u64::from(!accepted);
            }
            if rng.gen_bool(0.3) {
                let t = OfflineTransaction::new(step, borrower, NodeId(99), rng.gen_range(1..=balance), l.height());
                let _ = l.settle_offline_transaction(&t);
            }
            if rng.gen_bool(0.3) {
                l.advance_blocks(rng.gen_range(1..8));
            }
            let active: Tokens = l
                .agreements()
                .filter(|a| a.active && a.lender == attacker)
                .map(|a| l.remaining_principal(a.agreement_id).unwrap())
                .sum();
            if active > balance {
                return Err(format!("run {run}: active principal {active} exceeds balance {balance}"));
            }
        }
        let p = AttackParams { k: rng.gen_range(2..8), amount: balance, ..AttackParams::default() };
        let s = build_scenario(AttackKind::CoinSplit, p).map_err(|e| e.to_string())?;
        duplicates += u64::from(s.duplicate_attempts);
        rejected += u64::from(s.duplicates_rejected);
        if !s.conserves() {
            return Err(format!("run {run}: coin split scenario exceeded the attacker's balance"));
        }
    }
    let detail = format!("{rejected}/{duplicates} duplicate-collateral loans rejected over 1000 runs");
    if duplicates > 0 && rejected == duplicates {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sybil_economics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agree = 0;
    let mut exact = 0;
    let draws = 1_000usize;
    for i in 0..draws {
        let k = rng.gen_range(1..=10u32);
        let r: f64 = rng.gen();
        let eps: f64 = rng.gen_range(0.0..0.3);
        let direct = k > 1 && r > k as f64 * eps;
        let fast = sybil_split_profitability(r, k, eps).map_err(|e| e.to_string())? == SplitVerdict::Profitable;
        let params = AttackParams { k, reputation: r, epsilon: eps, amount: 2_520, seed: i as u64, ..AttackParams::default() };
        let s = build_scenario(AttackKind::ReputationSplit, params).map_err(|e| e.to_string())?;
        let report = evaluate_attack(&s, 20).map_err(|e| e.to_string())?;
        let evaluated = report.verdict == AttackVerdict::Profitable;
        agree += usize::from(direct == fast && fast == evaluated);

        let split = build_scenario(AttackKind::LoanSplit, params).map_err(|e| e.to_string())?;
        let k_rat = num::BigRational::from_integer(k.into());
        exact += usize::from(split.variant_influence() * k_rat == split.baseline_influence());
    }
    let detail = format!("{agree}/{draws} verdicts agree, loan_split = baseline/K exactly in {exact}/{draws}");
    if agree == draws && exact == draws {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn walkthrough() -> Outcome {
    common::check()?;
    Ok("loan, covered offline payment, repay and default branches replay as expected".into())
}

fn walk_termination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut walks = 0u64;
    let mut max_ratio: f64 = 0.0;
    for g in 0..10_000u64 {
        let n = rng.gen_range(2..=14u64);
        let nodes: Vec<(u64, f64)> = (0..n).map(|i| (i, rng.gen::<f64>() * 0.7)).collect();
        let mut edges = Vec::new();
        let density: f64 = rng.gen_range(0.2..1.0);
        for b in 0..n {
            for l in 0..n {
                if l != b && rng.gen_bool(density) {
                    edges.push(edge(edges.len() as u64 + 1, l, b, rng.gen_range(0..40)));
                }
            }
        }
        let v = view(&nodes, edges);
        let h = rng.gen_range(0..=12u32);
        let mut params = WalkParams::new(rng.gen_range(1..500), rng.gen_range(0.0..=1.0), h, g);
        params.enable_min_cap = rng.gen_bool(0.5);
        params.enable_early_stop = rng.gen_bool(0.5);
        let graph = LoanGraph::from_view(&v);
        let mut walker = Walker::new(&graph, &params).unwrap();
        let naive = NaiveWalker::new(&v, &params).unwrap();
        let ceiling = (v.edges().len() as u64 * (h as u64 + 1)).max(1);
        for w in 0..5 {
            let payer = NodeId(rng.gen_range(0..n));
            let mut a = overdraft_core::confidence::walk_rng(g, w);
            let mut b = a.clone();
            let out = walker.walk(payer, params.transaction_amount, &mut a).unwrap();
            let slow = naive.walk(payer, params.transaction_amount, &mut b).unwrap();
            if out.traversals > ceiling || out.amount != slow {
                return Err(format!("graph {g}: {} traversals, ceiling {ceiling}", out.traversals));
            }
            max_ratio = max_ratio.max(out.traversals as f64 / ceiling as f64);
            walks += 1;
        }
    }
    Ok(format!("{walks} walks on 10000 graphs terminated; max traversals/ceiling {max_ratio:.3}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("closed-form spot check", closed_form),
        ("CI-width scaling", ci_scaling),
        ("runtime scaling", runtime_scaling),
        ("interest formula", interest),
        ("settlement conservation", conservation),
        ("locking defense", locking_defense),
        ("sybil economics", sybil_economics),
        ("payment walkthrough", walkthrough),
        ("walk termination", walk_termination),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
