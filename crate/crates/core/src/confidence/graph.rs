use crate::model::{LoanNetworkView, NodeId, Tokens};

/// Dense, borrower-indexed copy of a view for repeated walks.
///
/// In-edges of each node keep the relative order they have in the view.
#[derive(Debug, Clone)]
pub struct LoanGraph {
    /// Sorted, since views keep nodes ordered by id.
    ids: Vec<NodeId>,
    /// `ids[i] == NodeId(i)` for all `i`.
    dense: bool,
    reputation: Vec<f64>,
    in_offsets: Vec<u32>,
    in_edges: Vec<u32>,
    edge_lender: Vec<u32>,
    edge_amount: Vec<Tokens>,
}

impl LoanGraph {
    pub fn from_view(view: &LoanNetworkView) -> Self {
        let n = view.nodes().len();
        let mut ids = Vec::with_capacity(n);
        let mut reputation = Vec::with_capacity(n);
        for (&id, &r) in view.nodes() {
            ids.push(id);
            reputation.push(r);
        }
        let dense = ids.last().is_none_or(|last| last.0 as usize == n - 1);
        let lookup = |id: NodeId| -> u32 {
            if dense {
                id.0 as u32
            } else {
                ids.binary_search(&id).expect("edge endpoints are view nodes") as u32
            }
        };

        let edges = view.edges();
        let mut edge_lender = Vec::with_capacity(edges.len());
        let mut edge_amount = Vec::with_capacity(edges.len());
        let mut borrower = Vec::with_capacity(edges.len());
        let mut in_offsets = vec![0u32; n + 1];
        for e in edges {
            let b = lookup(e.borrower);
            edge_lender.push(lookup(e.lender));
            edge_amount.push(e.amount);
            borrower.push(b);
            in_offsets[b as usize + 1] += 1;
        }
        for i in 0..n {
            in_offsets[i + 1] += in_offsets[i];
        }
        // stable counting sort by borrower
        let mut fill = in_offsets.clone();
        let mut in_edges = vec![0u32; edges.len()];
        for (e, &b) in borrower.iter().enumerate() {
            in_edges[fill[b as usize] as usize] = e as u32;
            fill[b as usize] += 1;
        }

        LoanGraph { ids, dense, reputation, in_offsets, in_edges, edge_lender, edge_amount }
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_lender.len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<u32> {
        if self.dense {
            ((id.0 as usize) < self.ids.len()).then_some(id.0 as u32)
        } else {
            self.ids.binary_search(&id).ok().map(|i| i as u32)
        }
    }

    pub fn id(&self, idx: u32) -> NodeId {
        self.ids[idx as usize]
    }

    #[inline]
    pub(crate) fn reputation(&self, idx: u32) -> f64 {
        self.reputation[idx as usize]
    }

    #[inline]
    pub(crate) fn in_range(&self, idx: u32) -> (u32, u32) {
        (self.in_offsets[idx as usize], self.in_offsets[idx as usize + 1])
    }

    #[inline]
    pub(crate) fn in_edge(&self, pos: u32) -> u32 {
        self.in_edges[pos as usize]
    }

    #[inline]
    pub(crate) fn lender(&self, edge: u32) -> u32 {
        self.edge_lender[edge as usize]
    }

    #[inline]
    pub(crate) fn amount(&self, edge: u32) -> Tokens {
        self.edge_amount[edge as usize]
    }
}
