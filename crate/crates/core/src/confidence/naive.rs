//! Straightforward recursive walk working directly on the view.
//!
//! Same semantics and draw order as [`super::walk::Walker`], without the
//! dense index: lenders are looked up by node id on every visit, the list of
//! unvisited in-edges is rebuilt each time, and visited edges live in a hash
//! set allocated per walk. This is the unoptimized benchmark configuration.

use std::collections::{HashMap, HashSet};

use rand::Rng;

use super::{ConfidenceError, WalkParams};
use crate::model::{AgreementId, LoanEdge, LoanNetworkView, NodeId, Tokens};

pub struct NaiveWalker<'v> {
    view: &'v LoanNetworkView,
    lenders_of: HashMap<NodeId, Vec<usize>>,
    params: WalkParams,
}

impl<'v> NaiveWalker<'v> {
    pub fn new(view: &'v LoanNetworkView, params: &WalkParams) -> Result<Self, ConfidenceError> {
        params.validate()?;
        let mut lenders_of: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, e) in view.edges().iter().enumerate() {
            lenders_of.entry(e.borrower).or_default().push(i);
        }
        Ok(NaiveWalker { view, lenders_of, params: *params })
    }

    pub fn walk<R: Rng + ?Sized>(&self, payer: NodeId, loaned_amount: Tokens, rng: &mut R) -> Result<Tokens, ConfidenceError> {
        if !self.view.contains(payer) {
            return Err(ConfidenceError::UnknownNode(payer));
        }
        if loaned_amount == 0 {
            return Err(ConfidenceError::NonPositiveAmount);
        }
        let mut visited = HashSet::new();
        let mut path = Vec::new();
        Ok(self.visit(payer, loaned_amount, &mut visited, &mut path, payer, rng))
    }

    fn visit<R: Rng + ?Sized>(
        &self,
        node: NodeId,
        loaned_amount: Tokens,
        visited: &mut HashSet<AgreementId>,
        path: &mut Vec<NodeId>,
        root: NodeId,
        rng: &mut R,
    ) -> Tokens {
        path.push(node);
        let result = self.visit_inner(node, loaned_amount, visited, path, root, rng);
        path.pop();
        result
    }

    fn visit_inner<R: Rng + ?Sized>(
        &self,
        node: NodeId,
        loaned_amount: Tokens,
        visited: &mut HashSet<AgreementId>,
        path: &mut Vec<NodeId>,
        root: NodeId,
        rng: &mut R,
    ) -> Tokens {
        if node == root && path.len() > 1 {
            return 0;
        }
        let distance = path.len() - 1;
        let reputation = self.view.reputation(node).unwrap_or(0.0);
        let p = reputation * self.params.decay.powi(distance as i32);
        if rng.gen::<f64>() < p {
            return loaned_amount;
        }

        let edges: Vec<LoanEdge> = self
            .lenders_of
            .get(&node)
            .map(|idx| {
                idx.iter()
                    .map(|&i| self.view.edges()[i].clone())
                    .filter(|e| !visited.contains(&e.agreement_id))
                    .collect()
            })
            .unwrap_or_default();

        let mut amount: Tokens = 0;
        for edge in edges {
            let stop_early = self.params.enable_early_stop && amount >= self.params.stop_threshold(loaned_amount);
            if stop_early || distance >= self.params.max_distance as usize {
                break;
            }
            // may have been crossed further down this walk
            if !visited.insert(edge.agreement_id) {
                continue;
            }
            if edge.lender == root {
                break;
            }
            amount += self.visit(edge.lender, edge.amount, visited, path, root, rng);
        }
        if self.params.enable_min_cap {
            amount.min(loaned_amount)
        } else {
            amount
        }
    }
}
