//! Label propagation refinement.
//!
//! The unconstrained variant moves every active node to its best neighboring
//! block with strictly positive gain, ignoring block weights, and then calls
//! the rebalancer. A round whose net improvement after rebalancing is not
//! positive is rolled back and ends the refinement. The size-constrained
//! variant only makes moves that keep the target within the limit and serves
//! as the classic reference.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use log::debug;

use crate::error::{Error, Result};
use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::PartitionState;
use crate::rebalance::{rebalance, RebalanceConfig};
use crate::runtime::Runtime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpConfig {
    pub max_rounds: usize,
    /// A round improving the cut by less than this fraction of the cut at
    /// round start is the last one.
    pub min_relative_improvement: f64,
    /// Move only within the balance limit instead of rebalancing afterwards.
    pub constrained: bool,
    pub rebalance: RebalanceConfig,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            max_rounds: 5,
            min_relative_improvement: 0.001,
            constrained: false,
            rebalance: RebalanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LpReport {
    pub rounds: usize,
    pub moves: usize,
    pub rebalance_moves: usize,
    pub rollbacks: usize,
    pub initial_cut: Weight,
    pub final_cut: Weight,
    /// Nodes moved in each round, in the order they were moved when running
    /// on a single worker.
    pub moved_per_round: Vec<Vec<NodeId>>,
    pub rebalance_time: Duration,
}

/// Nodes adjacent to a moved node that did not move themselves, sorted.
pub fn next_active_set(graph: &Graph, moved: &[NodeId]) -> Vec<NodeId> {
    let mut is_moved = vec![false; graph.n()];
    for &v in moved {
        is_moved[v as usize] = true;
    }
    let mut seen = vec![false; graph.n()];
    let mut next = Vec::new();
    for &v in moved {
        for (u, _) in graph.neighbors(v) {
            if !is_moved[u as usize] && !seen[u as usize] {
                seen[u as usize] = true;
                next.push(u);
            }
        }
    }
    next.sort_unstable();
    next
}

/// Nodes with at least one neighbor in another block.
pub fn boundary_nodes(graph: &Graph, state: &PartitionState, table: &GainTable) -> Vec<NodeId> {
    graph.nodes().filter(|&v| table.is_boundary(graph, state, v)).collect()
}

/// Best strictly positive gain target among the neighboring blocks. Ties go
/// to the lighter block, then the smaller id. With `cap` set, targets that
/// would exceed it are skipped.
fn best_target(
    graph: &Graph,
    state: &PartitionState,
    table: &GainTable,
    v: NodeId,
    cap: Option<Weight>,
) -> Option<(BlockId, Weight)> {
    let from = state.block(v);
    let internal = table.weight_to(v, from);
    let c = graph.node_weight(v);
    let mut best: Option<(Weight, Weight, BlockId)> = None;
    for b in 0..state.k() as BlockId {
        if b == from {
            continue;
        }
        let gain = table.weight_to(v, b) - internal;
        if gain <= 0 {
            continue;
        }
        let w = state.block_weight(b);
        if cap.is_some_and(|cap| w + c > cap) {
            continue;
        }
        let better = match best {
            None => true,
            Some((bg, bw, _)) => gain > bg || (gain == bg && w < bw),
        };
        if better {
            best = Some((gain, w, b));
        }
    }
    best.map(|(gain, _, b)| (b, gain))
}

/// Runs label propagation on a balanced partition. The result is balanced
/// and its cut is at most the input cut.
pub fn run_lp(
    graph: &Graph,
    state: &PartitionState,
    table: &GainTable,
    runtime: &Runtime,
    config: &LpConfig,
) -> Result<LpReport> {
    let mut report = LpReport {
        initial_cut: state.cut(),
        final_cut: state.cut(),
        ..Default::default()
    };
    if state.k() < 2 || !state.is_balanced() {
        return Ok(report);
    }
    let limit = state.max_block_weight();
    let moved_flag: Vec<AtomicBool> = (0..graph.n()).map(|_| AtomicBool::new(false)).collect();
    let mut active = boundary_nodes(graph, state, table);

    for round in 0..config.max_rounds {
        if active.is_empty() {
            break;
        }
        report.rounds += 1;
        let snapshot = state.snapshot();
        let start_cut = snapshot.cut;

        let sweep = parking_lot::Mutex::new(Vec::new());
        let chunks: Vec<(usize, &[NodeId])> = active.chunks(256).enumerate().collect();
        runtime.for_each(&chunks, |&(idx, chunk)| {
            let mut local = Vec::new();
            for &v in chunk {
                let from = state.block(v);
                if config.constrained {
                    let Some((to, _)) = best_target(graph, state, table, v, Some(limit)) else {
                        continue;
                    };
                    if !state.try_reserve(to, graph.node_weight(v), limit) {
                        continue;
                    }
                    table.apply_reserved_move(graph, state, v, from, to);
                } else {
                    let Some((to, _)) = best_target(graph, state, table, v, None) else {
                        continue;
                    };
                    table.apply_move(graph, state, v, to);
                }
                moved_flag[v as usize].store(true, Ordering::Relaxed);
                local.push(v);
            }
            sweep.lock().push((idx, local));
        });
        let mut sweep = sweep.into_inner();
        sweep.sort_unstable_by_key(|&(idx, _)| idx);
        let mut moved: Vec<NodeId> = sweep.into_iter().flat_map(|(_, m)| m).collect();
        if !runtime.is_sequential() {
            state.resync_cut(graph);
        }
        report.moves += moved.len();

        if !state.is_balanced() {
            let rb = RebalanceConfig {
                seed: config.rebalance.seed.wrapping_add(round as u64),
                ..config.rebalance
            };
            let started = Instant::now();
            let result = rebalance(graph, state, table, runtime, &rb);
            report.rebalance_time += started.elapsed();
            match result {
                Ok(outcome) => {
                    report.rebalance_moves += outcome.moves.len();
                    for mv in &outcome.moves {
                        if !moved_flag[mv.node as usize].swap(true, Ordering::Relaxed) {
                            moved.push(mv.node);
                        }
                    }
                }
                Err(Error::Infeasible(msg)) => {
                    debug!("lp round {round}: rebalancing failed ({msg}), rolling back");
                }
                Err(e) => return Err(e),
            }
        }

        let net = start_cut - state.cut();
        if !state.is_balanced() || net <= 0 {
            table.restore(graph, state, &snapshot);
            report.rollbacks += 1;
            debug!("lp round {round}: net {net}, rolled back");
            break;
        }
        debug!(
            "lp round {round}: {} moves, cut {} -> {}",
            moved.len(),
            start_cut,
            state.cut()
        );
        for &v in &moved {
            moved_flag[v as usize].store(false, Ordering::Relaxed);
        }
        active = next_active_set(graph, &moved);
        report.moved_per_round.push(moved);
        if (net as f64) < config.min_relative_improvement * start_cut as f64 {
            break;
        }
    }
    report.final_cut = state.cut();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::cut_from_scratch;

    #[test]
    fn active_set_excludes_moved_nodes() {
        // u = 0 with neighbors a = 1 and b = 2; b moved too
        let g = Graph::unit(4, [(0, 1), (0, 2), (2, 3)]).unwrap();
        assert_eq!(next_active_set(&g, &[0, 2]), vec![1, 3]);
        assert_eq!(next_active_set(&g, &[]), Vec::<NodeId>::new());
        assert_eq!(next_active_set(&g, &[0, 1, 2, 3]), Vec::<NodeId>::new());
    }

    #[test]
    fn local_optimum_is_untouched() {
        let g = Graph::unit(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 0, 1, 1]).unwrap();
        let before = s.clone();
        let t = GainTable::build(&g, &s);
        let r = run_lp(&g, &s, &t, &Runtime::sequential(), &LpConfig::default()).unwrap();
        assert_eq!(r.moves, 0);
        assert_eq!(s, before);
    }

    #[test]
    fn improves_an_obviously_bad_split() {
        // two triangles joined by one edge, split badly
        let g = Graph::unit(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 0, 1, 1, 0, 1]).unwrap();
        let t = GainTable::build(&g, &s);
        let before = s.cut();
        let r = run_lp(&g, &s, &t, &Runtime::sequential(), &LpConfig::default()).unwrap();
        assert!(s.is_balanced());
        assert!(s.cut() <= before);
        assert_eq!(s.cut(), cut_from_scratch(&g, &s.blocks()));
        assert_eq!(r.final_cut, s.cut());
        t.check_against(&g, &s).unwrap();
    }

    #[test]
    fn net_negative_round_is_rolled_back() {
        // block 1 is a full clique {1,2,3}; node 0 in block 0 has two edges
        // into it and one to node 4. Moving 0 gains 1, but the only repair is
        // moving it back.
        let g = Graph::unit(6, [(1, 2), (1, 3), (2, 3), (0, 1), (0, 2), (0, 4), (4, 5)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.0, vec![0, 1, 1, 1, 0, 0]).unwrap();
        let before = s.clone();
        let t = GainTable::build(&g, &s);
        let r = run_lp(&g, &s, &t, &Runtime::sequential(), &LpConfig::default()).unwrap();
        assert_eq!(r.rollbacks, 1);
        assert_eq!(s, before);
        t.check_against(&g, &s).unwrap();
    }

    #[test]
    fn constrained_lp_never_overloads() {
        let g = Graph::unit(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 0, 1, 1, 0, 1]).unwrap();
        let t = GainTable::build(&g, &s);
        let cfg = LpConfig {
            constrained: true,
            ..Default::default()
        };
        let r = run_lp(&g, &s, &t, &Runtime::sequential(), &cfg).unwrap();
        assert_eq!(r.rebalance_moves, 0);
        assert!(s.is_balanced());
    }
}
