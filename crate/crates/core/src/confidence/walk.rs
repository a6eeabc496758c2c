//! Randomized lender-ward walk over a [`LoanGraph`].
//!
//! Each invocation at a node draws solvency with probability
//! `reputation * decay^distance`. A solvent node pays the amount it was asked
//! for; an insolvent one asks its lenders in edge order, each edge crossed at
//! most once per walk. A node's lenders are no longer asked once the distance
//! limit is hit, once enough has been collected (early stop), or when the next
//! lender is the payer itself.

use rand::Rng;

use super::graph::LoanGraph;
use super::{ConfidenceError, WalkParams};
use crate::model::{NodeId, Tokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkOutcome {
    pub amount: Tokens,
    /// Edges crossed during the walk.
    pub traversals: u64,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    loaned: Tokens,
    distance: u32,
    cursor: u32,
    end: u32,
    collected: Tokens,
}

/// Reusable walk state. Visited edges are tracked with per-walk stamps so
/// nothing has to be cleared between walks.
pub struct Walker<'g> {
    graph: &'g LoanGraph,
    params: WalkParams,
    decay_pow: Vec<f64>,
    stamps: Vec<u32>,
    stamp: u32,
    stack: Vec<Frame>,
}

impl<'g> Walker<'g> {
    pub fn new(graph: &'g LoanGraph, params: &WalkParams) -> Result<Self, ConfidenceError> {
        params.validate()?;
        // distances never exceed max_distance; cap the table for huge limits
        let len = (params.max_distance as usize).min(graph.edge_count()) + 1;
        let decay_pow = (0..len).map(|d| params.decay.powi(d as i32)).collect();
        Ok(Walker {
            graph,
            params: *params,
            decay_pow,
            stamps: vec![0; graph.edge_count()],
            stamp: 0,
            stack: Vec::with_capacity(16),
        })
    }

    pub fn graph(&self) -> &LoanGraph {
        self.graph
    }

    #[inline]
    fn pays<R: Rng + ?Sized>(&self, node: u32, distance: u32, rng: &mut R) -> bool {
        let p = self.graph.reputation(node) * self.decay_pow[distance as usize];
        rng.gen::<f64>() < p
    }

    #[inline]
    fn finished(&self, f: &Frame) -> bool {
        if f.distance >= self.params.max_distance {
            return true;
        }
        self.params.enable_early_stop && f.collected >= self.params.stop_threshold(f.loaned)
    }

    #[inline]
    fn settle(&self, f: &Frame) -> Tokens {
        if self.params.enable_min_cap {
            f.collected.min(f.loaned)
        } else {
            f.collected
        }
    }

    /// One walk starting at `payer`, who is asked for `loaned_amount`.
    pub fn walk<R: Rng + ?Sized>(
        &mut self,
        payer: NodeId,
        loaned_amount: Tokens,
        rng: &mut R,
    ) -> Result<WalkOutcome, ConfidenceError> {
        let root = self.graph.index_of(payer).ok_or(ConfidenceError::UnknownNode(payer))?;
        if loaned_amount == 0 {
            return Err(ConfidenceError::NonPositiveAmount);
        }
        Ok(self.walk_indexed(root, loaned_amount, rng))
    }

    pub(crate) fn walk_indexed<R: Rng + ?Sized>(&mut self, root: u32, loaned_amount: Tokens, rng: &mut R) -> WalkOutcome {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        let mut traversals = 0u64;

        if self.pays(root, 0, rng) {
            return WalkOutcome { amount: loaned_amount, traversals };
        }
        let (cursor, end) = self.graph.in_range(root);
        self.stack.clear();
        self.stack.push(Frame { loaned: loaned_amount, distance: 0, cursor, end, collected: 0 });

        loop {
            let top = *self.stack.last().expect("non-empty stack");
            let mut next = None;
            if !self.finished(&top) {
                let mut pos = top.cursor;
                while pos < top.end {
                    let e = self.graph.in_edge(pos);
                    pos += 1;
                    if self.stamps[e as usize] != self.stamp {
                        next = Some(e);
                        break;
                    }
                }
                self.stack.last_mut().unwrap().cursor = pos;
            }

            let mut done = next.is_none();
            if let Some(e) = next {
                self.stamps[e as usize] = self.stamp;
                traversals += 1;
                let lender = self.graph.lender(e);
                if lender == root {
                    done = true;
                } else {
                    let distance = top.distance + 1;
                    let amount = self.graph.amount(e);
                    if self.pays(lender, distance, rng) {
                        self.stack.last_mut().unwrap().collected += amount;
                    } else {
                        let (cursor, end) = self.graph.in_range(lender);
                        self.stack.push(Frame { loaned: amount, distance, cursor, end, collected: 0 });
                    }
                }
            }

            if done {
                let frame = self.stack.pop().unwrap();
                let value = self.settle(&frame);
                match self.stack.last_mut() {
                    Some(parent) => parent.collected += value,
                    None => return WalkOutcome { amount: value, traversals },
                }
            }
        }
    }
}
