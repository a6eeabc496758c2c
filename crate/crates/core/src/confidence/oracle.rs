//! Exact walk-value distribution by enumerating every solvency draw.
//!
//! Exponential in the number of edges, so only usable on small views. The
//! enumeration tracks the set of crossed edges per branch, which makes it
//! exact even when different branches compete for the same edges.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{ConfidenceError, WalkParams};
use crate::model::{LoanNetworkView, NodeId, Tokens};

pub const MAX_ORACLE_EDGES: usize = 20;

struct Net {
    reputation: HashMap<NodeId, f64>,
    /// (edge bit, lender, amount) per borrower, in view order.
    lenders: HashMap<NodeId, Vec<(u32, NodeId, Tokens)>>,
}

/// `(collected, crossed edges)` → probability
type States = HashMap<(Tokens, u32), f64>;

impl Net {
    fn new(view: &LoanNetworkView) -> Self {
        let mut lenders: HashMap<NodeId, Vec<(u32, NodeId, Tokens)>> = HashMap::new();
        for (i, e) in view.edges().iter().enumerate() {
            lenders.entry(e.borrower).or_default().push((i as u32, e.lender, e.amount));
        }
        Net { reputation: view.nodes().iter().map(|(&k, &v)| (k, v)).collect(), lenders }
    }

    /// Outcomes of asking `node` for `loaned` at `distance`, given `visited`.
    /// Returns `(value, visited_after) → probability`.
    fn outcomes(&self, node: NodeId, loaned: Tokens, distance: u32, visited: u32, root: NodeId, p: &WalkParams) -> States {
        let mut out = States::new();
        if node == root && distance > 0 {
            out.insert((0, visited), 1.0);
            return out;
        }
        let pay = self.reputation[&node] * p.decay.powi(distance as i32);
        if pay > 0.0 {
            *out.entry((loaned, visited)).or_default() += pay.min(1.0);
        }
        if pay >= 1.0 {
            return out;
        }

        // branch states while scanning lenders: (collected, visited, stopped)
        let mut states: HashMap<(Tokens, u32, bool), f64> = HashMap::new();
        states.insert((0, visited, false), 1.0);
        for &(bit, lender, amount) in self.lenders.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
            let mut next: HashMap<(Tokens, u32, bool), f64> = HashMap::new();
            for (&(collected, seen, stopped), &prob) in &states {
                let early = p.enable_early_stop && collected >= p.stop_threshold(loaned);
                let mask = 1u32 << bit;
                if stopped || early || distance >= p.max_distance {
                    *next.entry((collected, seen, true)).or_default() += prob;
                } else if seen & mask != 0 {
                    *next.entry((collected, seen, false)).or_default() += prob;
                } else if lender == root {
                    *next.entry((collected, seen | mask, true)).or_default() += prob;
                } else {
                    for ((value, after), q) in self.outcomes(lender, amount, distance + 1, seen | mask, root, p) {
                        *next.entry((collected + value, after, false)).or_default() += prob * q;
                    }
                }
            }
            states = next;
        }
        for ((collected, seen, _), prob) in states {
            let value = if p.enable_min_cap { collected.min(loaned) } else { collected };
            *out.entry((value, seen)).or_default() += (1.0 - pay) * prob;
        }
        out
    }
}

/// Exact distribution of a single walk's value from `payer`, keyed by value.
///
/// Works for any view with at most [`MAX_ORACLE_EDGES`] edges, cycles and
/// early stopping included.
pub fn exact_distribution(
    view: &LoanNetworkView,
    payer: NodeId,
    params: &WalkParams,
) -> Result<BTreeMap<Tokens, f64>, ConfidenceError> {
    params.validate()?;
    if !view.contains(payer) {
        return Err(ConfidenceError::UnknownNode(payer));
    }
    if view.edges().len() > MAX_ORACLE_EDGES {
        return Err(ConfidenceError::OracleTooLarge(view.edges().len()));
    }
    let net = Net::new(view);
    let mut dist = BTreeMap::new();
    for ((value, _), prob) in net.outcomes(payer, params.transaction_amount, 0, 0, payer, params) {
        *dist.entry(value).or_insert(0.0) += prob;
    }
    Ok(dist)
}

/// Expected walk value on an acyclic neighbourhood with early stop and the
/// cap disabled.
pub fn exact_expectation(view: &LoanNetworkView, payer: NodeId, params: &WalkParams) -> Result<f64, ConfidenceError> {
    if params.enable_early_stop || params.enable_min_cap {
        return Err(ConfidenceError::OracleOrderDependent);
    }
    if !view.contains(payer) {
        return Err(ConfidenceError::UnknownNode(payer));
    }
    if view.edges().len() > MAX_ORACLE_EDGES {
        return Err(ConfidenceError::OracleTooLarge(view.edges().len()));
    }
    if has_lender_cycle(view, payer) {
        return Err(ConfidenceError::OracleCyclic);
    }
    let dist = exact_distribution(view, payer, params)?;
    Ok(dist.iter().map(|(&v, &p)| v as f64 * p).sum())
}

/// Whether a cycle is reachable from `payer` following borrower → lender.
pub fn has_lender_cycle(view: &LoanNetworkView, payer: NodeId) -> bool {
    let mut lenders: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for e in view.edges() {
        lenders.entry(e.borrower).or_default().push(e.lender);
    }
    fn dfs(n: NodeId, g: &HashMap<NodeId, Vec<NodeId>>, on_path: &mut HashSet<NodeId>, done: &mut HashSet<NodeId>) -> bool {
        if on_path.contains(&n) {
            return true;
        }
        if !done.insert(n) {
            return false;
        }
        on_path.insert(n);
        let cyclic = g.get(&n).into_iter().flatten().any(|&m| dfs(m, g, on_path, done));
        on_path.remove(&n);
        cyclic
    }
    dfs(payer, &lenders, &mut HashSet::new(), &mut HashSet::new())
}
