//! Immutable CSR graph with integer node and edge weights.
//!
//! Adjacency is stored in both directions with neighbor lists sorted by id,
//! so two graphs with the same edge set compare equal regardless of how they
//! were built.

use crate::error::{Error, Result};

pub type NodeId = u32;
pub type BlockId = u32;
pub type Weight = i64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    edge_weights: Vec<Weight>,
    node_weights: Vec<Weight>,
    weighted_degrees: Vec<Weight>,
    total_node_weight: Weight,
}

impl Graph {
    /// Builds a graph from undirected edges.
    ///
    /// Self-loops are dropped and parallel edges are merged by summing their
    /// weights. All weights must be positive.
    pub fn from_edges(
        node_weights: Vec<Weight>,
        edges: impl IntoIterator<Item = (NodeId, NodeId, Weight)>,
    ) -> Result<Self> {
        let n = node_weights.len();
        if n > NodeId::MAX as usize {
            return Err(Error::InvalidGraph(format!("{n} nodes exceed the id range")));
        }
        if let Some(v) = node_weights.iter().position(|&w| w <= 0) {
            return Err(Error::InvalidGraph(format!(
                "node {v} has non-positive weight {}",
                node_weights[v]
            )));
        }
        let mut arcs: Vec<(NodeId, NodeId, Weight)> = Vec::new();
        let mut self_loops = 0usize;
        for (u, v, w) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if w <= 0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has non-positive weight {w}"
                )));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            arcs.push((u, v, w));
            arcs.push((v, u, w));
        }
        if self_loops > 0 {
            log::warn!("dropped {self_loops} self-loop(s)");
        }
        Ok(Self::from_arcs(node_weights, arcs))
    }

    /// Builds from directed arcs that already contain both directions of
    /// every edge. Parallel arcs are merged by summing.
    pub(crate) fn from_arcs(node_weights: Vec<Weight>, mut arcs: Vec<(NodeId, NodeId, Weight)>) -> Self {
        let n = node_weights.len();
        arcs.sort_unstable_by_key(|&(u, v, _)| (u, v));
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(arcs.len());
        let mut edge_weights = Vec::with_capacity(arcs.len());
        let mut last: Option<(NodeId, NodeId)> = None;
        for (u, v, w) in arcs {
            if last == Some((u, v)) {
                *edge_weights.last_mut().unwrap() += w;
                continue;
            }
            last = Some((u, v));
            offsets[u as usize + 1] += 1;
            targets.push(v);
            edge_weights.push(w);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Self::from_csr_unchecked(offsets, targets, edge_weights, node_weights)
    }

    pub(crate) fn from_csr_unchecked(
        offsets: Vec<usize>,
        targets: Vec<NodeId>,
        edge_weights: Vec<Weight>,
        node_weights: Vec<Weight>,
    ) -> Self {
        let n = node_weights.len();
        let weighted_degrees = (0..n)
            .map(|v| edge_weights[offsets[v]..offsets[v + 1]].iter().sum())
            .collect();
        let total_node_weight = node_weights.iter().sum();
        Graph {
            offsets,
            targets,
            edge_weights,
            node_weights,
            weighted_degrees,
            total_node_weight,
        }
    }

    pub fn unit(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        Self::from_edges(vec![1; n], edges.into_iter().map(|(u, v)| (u, v, 1)))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.node_weights.len()
    }

    /// Number of undirected edges.
    #[inline]
    pub fn m(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        0..self.n() as NodeId
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> impl ExactSizeIterator<Item = (NodeId, Weight)> + '_ {
        let range = self.offsets[v as usize]..self.offsets[v as usize + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.edge_weights[range].iter().copied())
    }

    #[inline]
    pub fn node_weight(&self, v: NodeId) -> Weight {
        self.node_weights[v as usize]
    }

    pub fn node_weights(&self) -> &[Weight] {
        &self.node_weights
    }

    /// Total weight of the edges incident to `v`.
    #[inline]
    pub fn weighted_degree(&self, v: NodeId) -> Weight {
        self.weighted_degrees[v as usize]
    }

    #[inline]
    pub fn total_node_weight(&self) -> Weight {
        self.total_node_weight
    }

    pub fn total_edge_weight(&self) -> Weight {
        self.edge_weights.iter().sum::<Weight>() / 2
    }

    pub fn max_node_weight(&self) -> Weight {
        self.node_weights.iter().copied().max().unwrap_or(0)
    }

    /// Each undirected edge once, as `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, Weight)> + '_ {
        self.nodes().flat_map(move |u| {
            self.neighbors(u)
                .filter(move |&(v, _)| u < v)
                .map(move |(v, w)| (u, v, w))
        })
    }

    pub fn has_unit_node_weights(&self) -> bool {
        self.node_weights.iter().all(|&w| w == 1)
    }

    pub fn has_unit_edge_weights(&self) -> bool {
        self.edge_weights.iter().all(|&w| w == 1)
    }

    /// Standard deviation of the node degrees divided by their mean.
    ///
    /// Graphs above roughly 1.2 behave like the irregular (social/web) class,
    /// meshes sit far below.
    pub fn degree_irregularity(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        let mean = self.targets.len() as f64 / n as f64;
        if mean == 0.0 {
            return 0.0;
        }
        let var = self
            .nodes()
            .map(|v| {
                let d = self.degree(v) as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n as f64;
        var.sqrt() / mean
    }

    /// Checks the structural invariants: symmetric adjacency with equal
    /// weights, no self-loops, no duplicate neighbors, positive weights.
    pub fn validate(&self) -> Result<()> {
        for u in self.nodes() {
            let mut prev: Option<NodeId> = None;
            for (v, w) in self.neighbors(u) {
                if v == u {
                    return Err(Error::InvalidGraph(format!("self-loop at {u}")));
                }
                if w <= 0 {
                    return Err(Error::InvalidGraph(format!("edge ({u}, {v}) has weight {w}")));
                }
                if prev.is_some_and(|p| p >= v) {
                    return Err(Error::InvalidGraph(format!("neighbors of {u} not strictly sorted")));
                }
                prev = Some(v);
                let back = self.edge_weight(v, u);
                if back != Some(w) {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({u}, {v}) weight {w} has reverse {back:?}"
                    )));
                }
            }
            if self.node_weight(u) <= 0 {
                return Err(Error::InvalidGraph(format!("node {u} has non-positive weight")));
            }
        }
        Ok(())
    }

    pub fn edge_weight(&self, u: NodeId, v: NodeId) -> Option<Weight> {
        let range = self.offsets[u as usize]..self.offsets[u as usize + 1];
        let slice = &self.targets[range.clone()];
        slice.binary_search(&v).ok().map(|i| self.edge_weights[range.start + i])
    }
}
