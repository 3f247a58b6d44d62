//! Partition state, balance limit and the cut/gain arithmetic.
//!
//! All mutable fields are atomics so that refinement workers can apply moves
//! concurrently. Writes to `blocks[v]` must be exclusive per node; the FM
//! ownership flags and the rebalancer's node locks provide that.

use std::sync::atomic::{AtomicI64, AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::graph::{BlockId, Graph, NodeId, Weight};

const EPS_SCALE: i128 = 1_000_000_000;

/// The maximum block weight `(1 + eps) * ceil(total / k)`, kept as an exact
/// rational so that the balance test is integer-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalanceLimit {
    perfect: Weight,
    eps_scaled: i128,
    max_block_weight: Weight,
}

impl BalanceLimit {
    pub fn new(total_weight: Weight, k: usize, epsilon: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let eps_scaled = (epsilon * EPS_SCALE as f64).round() as i128;
        let perfect = (total_weight + k as Weight - 1) / k as Weight;
        let max = (perfect as i128 * (EPS_SCALE + eps_scaled)) / EPS_SCALE;
        Ok(BalanceLimit {
            perfect,
            eps_scaled,
            max_block_weight: max as Weight,
        })
    }

    /// Largest integer block weight that is still balanced.
    #[inline]
    pub fn max_block_weight(&self) -> Weight {
        self.max_block_weight
    }

    /// `ceil(total / k)`.
    pub fn perfect_weight(&self) -> Weight {
        self.perfect
    }

    /// `(numerator, denominator)` of the exact threshold.
    pub fn as_ratio(&self) -> (i128, i128) {
        (self.perfect as i128 * (EPS_SCALE + self.eps_scaled), EPS_SCALE)
    }

    pub fn as_f64(&self) -> f64 {
        let (num, den) = self.as_ratio();
        num as f64 / den as f64
    }

    #[inline]
    pub fn is_balanced(&self, block_weight: Weight) -> bool {
        block_weight <= self.max_block_weight
    }

    /// `floor(factor * max_block_weight)` for a relaxed limit such as twice the maximum.
    pub fn scaled_max(&self, factor: f64) -> Weight {
        let factor_scaled = (factor * 1_000_000.0).round() as i128;
        let (num, den) = self.as_ratio();
        (num * factor_scaled / (den * 1_000_000)) as Weight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Move {
    pub node: NodeId,
    pub from: BlockId,
    pub to: BlockId,
    /// Gain at the time the move was applied.
    pub gain: Weight,
}

impl Move {
    pub fn new(node: NodeId, from: BlockId, to: BlockId) -> Self {
        Move {
            node,
            from,
            to,
            gain: 0,
        }
    }

    pub fn inverse(&self) -> Move {
        Move {
            node: self.node,
            from: self.to,
            to: self.from,
            gain: -self.gain,
        }
    }
}

/// Sum of the weights of edges whose endpoints lie in different blocks.
pub fn cut_from_scratch(graph: &Graph, blocks: &[BlockId]) -> Weight {
    graph
        .edges()
        .filter(|&(u, v, _)| blocks[u as usize] != blocks[v as usize])
        .map(|(_, _, w)| w)
        .sum()
}

/// `weight_to(v, target) - weight_to(v, block(v))`, by scanning the neighborhood.
pub fn gain_of_move(graph: &Graph, state: &PartitionState, node: NodeId, target: BlockId) -> Weight {
    let own = state.block(node);
    graph
        .neighbors(node)
        .map(|(u, w)| {
            let b = state.block(u);
            if b == target {
                w
            } else if b == own {
                -w
            } else {
                0
            }
        })
        .sum()
}

/// Copy of the mutable partition fields, used for exact rollback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub blocks: Vec<BlockId>,
    pub block_weights: Vec<Weight>,
    pub cut: Weight,
}

impl Snapshot {
    pub fn is_balanced(&self, limit: &BalanceLimit) -> bool {
        self.block_weights.iter().all(|&w| limit.is_balanced(w))
    }
}

#[derive(Debug)]
pub struct PartitionState {
    k: usize,
    limit: BalanceLimit,
    blocks: Vec<AtomicU32>,
    block_weights: Vec<AtomicI64>,
    cut: AtomicI64,
}

impl PartitionState {
    pub fn new(graph: &Graph, k: usize, epsilon: f64, blocks: Vec<BlockId>) -> Result<Self> {
        let limit = BalanceLimit::new(graph.total_node_weight(), k, epsilon)?;
        Self::with_limit(graph, k, limit, blocks)
    }

    pub fn with_limit(graph: &Graph, k: usize, limit: BalanceLimit, blocks: Vec<BlockId>) -> Result<Self> {
        if blocks.len() != graph.n() {
            return Err(Error::InvalidArgument(format!(
                "partition has {} entries for {} nodes",
                blocks.len(),
                graph.n()
            )));
        }
        if let Some(v) = blocks.iter().position(|&b| b as usize >= k) {
            return Err(Error::InvalidArgument(format!(
                "node {v} assigned to block {} but k = {k}",
                blocks[v]
            )));
        }
        let mut weights = vec![0; k];
        for v in graph.nodes() {
            weights[blocks[v as usize] as usize] += graph.node_weight(v);
        }
        let cut = cut_from_scratch(graph, &blocks);
        Ok(PartitionState {
            k,
            limit,
            blocks: blocks.into_iter().map(AtomicU32::new).collect(),
            block_weights: weights.into_iter().map(AtomicI64::new).collect(),
            cut: AtomicI64::new(cut),
        })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    #[inline]
    pub fn limit(&self) -> &BalanceLimit {
        &self.limit
    }

    #[inline]
    pub fn max_block_weight(&self) -> Weight {
        self.limit.max_block_weight()
    }

    #[inline]
    pub fn block(&self, v: NodeId) -> BlockId {
        self.blocks[v as usize].load(Ordering::Relaxed)
    }

    #[inline]
    pub fn block_weight(&self, b: BlockId) -> Weight {
        self.block_weights[b as usize].load(Ordering::Relaxed)
    }

    #[inline]
    pub fn cut(&self) -> Weight {
        self.cut.load(Ordering::Relaxed)
    }

    pub fn blocks(&self) -> Vec<BlockId> {
        self.blocks.iter().map(|b| b.load(Ordering::Relaxed)).collect()
    }

    pub fn block_weights(&self) -> Vec<Weight> {
        self.block_weights.iter().map(|w| w.load(Ordering::Relaxed)).collect()
    }

    pub fn is_balanced(&self) -> bool {
        (0..self.k as BlockId).all(|b| self.limit.is_balanced(self.block_weight(b)))
    }

    pub fn is_overloaded(&self, b: BlockId) -> bool {
        !self.limit.is_balanced(self.block_weight(b))
    }

    pub fn overloaded_blocks(&self) -> Vec<BlockId> {
        (0..self.k as BlockId).filter(|&b| self.is_overloaded(b)).collect()
    }

    /// Heaviest block weight over the perfectly balanced weight, minus one.
    pub fn imbalance(&self) -> f64 {
        let total: Weight = self.block_weights().iter().sum();
        if total == 0 {
            return 0.0;
        }
        let max = self.block_weights().into_iter().max().unwrap_or(0);
        max as f64 / (total as f64 / self.k as f64) - 1.0
    }

    /// Moves `mv.node` from `mv.from` to `mv.to`, computing the gain from the
    /// current neighbor blocks. Returns the gain that was applied to the cut.
    pub fn apply_move(&self, graph: &Graph, mv: Move) -> Weight {
        debug_assert_ne!(mv.from, mv.to);
        debug_assert_eq!(self.block(mv.node), mv.from);
        let gain = gain_of_move(graph, self, mv.node, mv.to);
        self.commit_move(mv.node, mv.from, mv.to, graph.node_weight(mv.node), gain);
        gain
    }

    /// Publishes a move whose gain the caller already knows. Block weights and
    /// the cut are updated with atomic read-modify-write.
    #[inline]
    pub(crate) fn commit_move(&self, v: NodeId, from: BlockId, to: BlockId, weight: Weight, gain: Weight) {
        self.blocks[v as usize].store(to, Ordering::Relaxed);
        self.block_weights[from as usize].fetch_sub(weight, Ordering::Relaxed);
        self.block_weights[to as usize].fetch_add(weight, Ordering::Relaxed);
        self.cut.fetch_sub(gain, Ordering::Relaxed);
    }

    /// Commits a move whose target weight was already reserved.
    #[inline]
    pub(crate) fn commit_reserved_move(
        &self,
        v: NodeId,
        from: BlockId,
        to: BlockId,
        weight: Weight,
        gain: Weight,
    ) -> Weight {
        self.blocks[v as usize].store(to, Ordering::Relaxed);
        self.cut.fetch_sub(gain, Ordering::Relaxed);
        self.block_weights[from as usize].fetch_sub(weight, Ordering::Relaxed) - weight
    }

    /// Adds `weight` to block `b` only if the result stays at or below `cap`.
    #[inline]
    pub(crate) fn try_reserve(&self, b: BlockId, weight: Weight, cap: Weight) -> bool {
        self.block_weights[b as usize]
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |w| {
                (w + weight <= cap).then_some(w + weight)
            })
            .is_ok()
    }

    pub(crate) fn set_cut(&self, cut: Weight) {
        self.cut.store(cut, Ordering::Relaxed);
    }

    /// Recomputes the cached cut from scratch. Concurrent moves of adjacent
    /// nodes can make the incrementally maintained value drift, so parallel
    /// phases call this once they are quiescent.
    pub fn resync_cut(&self, graph: &Graph) -> Weight {
        let cut = cut_from_scratch(graph, &self.blocks());
        self.set_cut(cut);
        cut
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            blocks: self.blocks(),
            block_weights: self.block_weights(),
            cut: self.cut(),
        }
    }

    /// Overwrites the state with `snapshot`. Callers holding a gain table must
    /// use [`crate::gain_table::GainTable::restore`] instead.
    pub fn restore(&self, snapshot: &Snapshot) {
        for (slot, &b) in self.blocks.iter().zip(&snapshot.blocks) {
            slot.store(b, Ordering::Relaxed);
        }
        for (slot, &w) in self.block_weights.iter().zip(&snapshot.block_weights) {
            slot.store(w, Ordering::Relaxed);
        }
        self.set_cut(snapshot.cut);
    }

    /// Checks cached weights and cut against a recomputation.
    pub fn check_consistency(&self, graph: &Graph) -> Result<()> {
        let blocks = self.blocks();
        let mut weights = vec![0; self.k];
        for v in graph.nodes() {
            weights[blocks[v as usize] as usize] += graph.node_weight(v);
        }
        if weights != self.block_weights() {
            return Err(Error::InvalidArgument(format!(
                "cached block weights {:?} differ from {:?}",
                self.block_weights(),
                weights
            )));
        }
        let cut = cut_from_scratch(graph, &blocks);
        if cut != self.cut() {
            return Err(Error::InvalidArgument(format!(
                "cached cut {} differs from {cut}",
                self.cut()
            )));
        }
        Ok(())
    }
}

impl Clone for PartitionState {
    fn clone(&self) -> Self {
        PartitionState {
            k: self.k,
            limit: self.limit,
            blocks: self.blocks().into_iter().map(AtomicU32::new).collect(),
            block_weights: self.block_weights().into_iter().map(AtomicI64::new).collect(),
            cut: AtomicI64::new(self.cut()),
        }
    }
}

impl PartialEq for PartitionState {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.limit == other.limit && self.snapshot() == other.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        Graph::unit(n, (0..n as NodeId - 1).map(|i| (i, i + 1))).unwrap()
    }

    #[test]
    fn balance_limit_is_exact() {
        let l = BalanceLimit::new(100, 4, 0.03).unwrap();
        assert_eq!(l.as_ratio().0 * 100 / l.as_ratio().1, 2575);
        assert_eq!(l.max_block_weight(), 25);
        assert!(l.is_balanced(25));
        assert!(!l.is_balanced(26));

        let l = BalanceLimit::new(4, 2, 0.03).unwrap();
        assert!((l.as_f64() - 2.06).abs() < 1e-12);
        assert_eq!(l.max_block_weight(), 2);

        for k in 1..10 {
            let l = BalanceLimit::new(k as Weight, k, 0.5).unwrap();
            assert!(l.is_balanced(1));
        }
    }

    #[test]
    fn balance_limit_uses_ceiling() {
        // ceil(11 / 2) = 6, 1.03 * 6 = 6.18
        let l = BalanceLimit::new(11, 2, 0.03).unwrap();
        assert_eq!(l.perfect_weight(), 6);
        assert_eq!(l.max_block_weight(), 6);
    }

    #[test]
    fn cut_examples() {
        let tri = Graph::unit(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(cut_from_scratch(&tri, &[0, 1, 1]), 2);
        assert_eq!(cut_from_scratch(&tri, &[0, 0, 0]), 0);
        assert_eq!(cut_from_scratch(&path(4), &[0, 0, 1, 1]), 1);
    }

    #[test]
    fn gain_examples() {
        let g = Graph::unit(3, [(0, 1)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 0, 0]).unwrap();
        assert_eq!(gain_of_move(&g, &s, 2, 1), 0);
        assert_eq!(gain_of_move(&g, &s, 0, 1), -1);

        // weight to target 5, to own block 2
        let g = Graph::from_edges(vec![1; 3], [(0, 1, 5), (0, 2, 2)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 1, 0]).unwrap();
        let before = s.cut();
        assert_eq!(gain_of_move(&g, &s, 0, 1), 3);
        let gain = s.apply_move(&g, Move::new(0, 0, 1));
        assert_eq!(before - gain, cut_from_scratch(&g, &s.blocks()));
    }

    #[test]
    fn apply_and_inverse_restore_state() {
        let g = path(4);
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 0, 1, 1]).unwrap();
        let start = s.clone();
        let mv = Move::new(1, 0, 1);
        let gain = s.apply_move(&g, mv);
        assert_eq!(gain, 0);
        s.check_consistency(&g).unwrap();
        s.apply_move(&g, mv.inverse());
        assert_eq!(s, start);
    }

    #[test]
    fn emptying_a_block_is_legal() {
        let g = path(2);
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 1]).unwrap();
        s.apply_move(&g, Move::new(1, 1, 0));
        assert_eq!(s.block_weight(1), 0);
        assert_eq!(s.cut(), 0);
        s.check_consistency(&g).unwrap();
    }

    #[test]
    fn rejects_out_of_range_blocks() {
        let g = path(2);
        assert!(PartitionState::new(&g, 2, 0.03, vec![0, 2]).is_err());
        assert!(PartitionState::new(&g, 2, 0.03, vec![0]).is_err());
    }
}
