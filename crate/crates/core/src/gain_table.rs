//! Dense `n x k` table of the edge weight from every node to every block.
//!
//! Cells are atomics and updates are plain additions, so concurrent updates
//! for node-disjoint moves commute and the table converges to the sequential
//! result once the workers are quiescent. Movers update the neighbors' rows
//! first and publish the block change afterwards; readers may see slightly
//! stale gains and re-check where it matters.

use std::sync::atomic::{AtomicI64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::{Move, PartitionState, Snapshot};

#[derive(Debug)]
pub struct GainTable {
    k: usize,
    cells: Vec<AtomicI64>,
}

impl GainTable {
    pub fn build(graph: &Graph, state: &PartitionState) -> Self {
        let k = state.k();
        let mut cells = vec![0 as Weight; graph.n() * k];
        cells.par_chunks_mut(k.max(1)).enumerate().for_each(|(v, row)| {
            for (u, w) in graph.neighbors(v as NodeId) {
                row[state.block(u) as usize] += w;
            }
        });
        GainTable {
            k,
            cells: cells.into_iter().map(AtomicI64::new).collect(),
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Edge weight from `v` into block `b`.
    #[inline]
    pub fn weight_to(&self, v: NodeId, b: BlockId) -> Weight {
        self.cells[v as usize * self.k + b as usize].load(Ordering::Relaxed)
    }

    /// Gain of moving `v` from `from` to `to`.
    #[inline]
    pub fn gain(&self, v: NodeId, from: BlockId, to: BlockId) -> Weight {
        self.weight_to(v, to) - self.weight_to(v, from)
    }

    pub fn row(&self, v: NodeId) -> Vec<Weight> {
        (0..self.k as BlockId).map(|b| self.weight_to(v, b)).collect()
    }

    #[inline]
    pub fn is_boundary(&self, graph: &Graph, state: &PartitionState, v: NodeId) -> bool {
        self.weight_to(v, state.block(v)) < graph.weighted_degree(v)
    }

    /// Shifts the block weights of every neighbor `u` of the moved node.
    pub fn delta_update(&self, graph: &Graph, node: NodeId, from: BlockId, to: BlockId) {
        for (u, w) in graph.neighbors(node) {
            let base = u as usize * self.k;
            self.cells[base + from as usize].fetch_sub(w, Ordering::Relaxed);
            self.cells[base + to as usize].fetch_add(w, Ordering::Relaxed);
        }
    }

    /// Moves `v` to `to`: neighbor rows first, then the block change. Returns
    /// the gain read from the table.
    pub fn apply_move(&self, graph: &Graph, state: &PartitionState, v: NodeId, to: BlockId) -> Weight {
        let from = state.block(v);
        debug_assert_ne!(from, to);
        let gain = self.gain(v, from, to);
        self.delta_update(graph, v, from, to);
        state.commit_move(v, from, to, graph.node_weight(v), gain);
        gain
    }

    /// Like [`Self::apply_move`] for a move whose target weight the caller
    /// already reserved. Returns `(gain, new weight of the origin block)`.
    pub(crate) fn apply_reserved_move(
        &self,
        graph: &Graph,
        state: &PartitionState,
        v: NodeId,
        from: BlockId,
        to: BlockId,
    ) -> (Weight, Weight) {
        let gain = self.gain(v, from, to);
        self.delta_update(graph, v, from, to);
        let origin = state.commit_reserved_move(v, from, to, graph.node_weight(v), gain);
        (gain, origin)
    }

    pub fn apply_moves(&self, graph: &Graph, state: &PartitionState, moves: &[Move]) {
        for mv in moves {
            self.apply_move(graph, state, mv.node, mv.to);
        }
    }

    /// Rolls the partition back to `snapshot` by moving every node whose
    /// block differs, keeping the table consistent.
    pub fn restore(&self, graph: &Graph, state: &PartitionState, snapshot: &Snapshot) {
        for v in graph.nodes() {
            let target = snapshot.blocks[v as usize];
            if state.block(v) != target {
                self.apply_move(graph, state, v, target);
            }
        }
        debug_assert_eq!(state.block_weights(), snapshot.block_weights);
        state.set_cut(snapshot.cut);
    }

    /// Compares every cell against a from-scratch rebuild.
    pub fn check_against(&self, graph: &Graph, state: &PartitionState) -> Result<()> {
        let fresh = GainTable::build(graph, state);
        for v in graph.nodes() {
            if self.row(v) != fresh.row(v) {
                return Err(Error::InvalidArgument(format!(
                    "gain table row {v} is {:?}, expected {:?}",
                    self.row(v),
                    fresh.row(v)
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::gain_of_move;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_edge() {
        let g = Graph::from_edges(vec![1, 1], [(0, 1, 5)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 1]).unwrap();
        let t = GainTable::build(&g, &s);
        assert_eq!(t.weight_to(0, 1), 5);
        assert_eq!(t.weight_to(0, 0), 0);
    }

    #[test]
    fn one_block_rows_are_degrees() {
        let g = Graph::unit(4, [(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let s = PartitionState::new(&g, 3, 0.03, vec![1; 4]).unwrap();
        let t = GainTable::build(&g, &s);
        for v in g.nodes() {
            assert_eq!(t.row(v), vec![0, g.weighted_degree(v), 0]);
        }
    }

    #[test]
    fn move_and_inverse() {
        let g = Graph::unit(2, [(0, 1)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 0]).unwrap();
        let t = GainTable::build(&g, &s);
        t.apply_move(&g, &s, 0, 1);
        assert_eq!(t.row(1), vec![0, 1]);
        t.apply_move(&g, &s, 0, 0);
        assert_eq!(t.row(1), vec![1, 0]);
        assert_eq!(t.row(0), vec![1, 0]);
    }

    #[test]
    fn random_moves_match_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let edges: Vec<_> = (0..200)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(1..5)))
            .collect();
        let g = Graph::from_edges(vec![1; n as usize], edges).unwrap();
        let k = 4;
        let blocks = (0..n).map(|_| rng.random_range(0..k)).collect();
        let s = PartitionState::new(&g, k as usize, 0.03, blocks).unwrap();
        let t = GainTable::build(&g, &s);
        for v in g.nodes() {
            let brute: Vec<Weight> = (0..k)
                .map(|b| g.neighbors(v).filter(|&(u, _)| s.block(u) == b).map(|(_, w)| w).sum())
                .collect();
            assert_eq!(t.row(v), brute);
        }
        for _ in 0..10_000 {
            let v = rng.random_range(0..n);
            let to = rng.random_range(0..k);
            if to == s.block(v) {
                continue;
            }
            let expected = gain_of_move(&g, &s, v, to);
            assert_eq!(t.apply_move(&g, &s, v, to), expected);
        }
        t.check_against(&g, &s).unwrap();
        s.check_consistency(&g).unwrap();
    }
}
