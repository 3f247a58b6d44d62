//! Global move sequence handling after the localized searches: interleaving
//! the rebalancing moves, fusing duplicate moves, exact gain recalculation
//! and reverting to the best balanced prefix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::{Move, PartitionState};
use crate::runtime::Runtime;

const UNMOVED: usize = usize::MAX;

/// Merges the search moves `search` with the rebalancing moves grouped by
/// origin block. After every search move that leaves a block overloaded, the
/// shortest prefix of that block's remaining rebalancing moves that brings it
/// back within the limit is appended. A rebalancing move of a node whose
/// search move has not been appended yet cannot be used, which stops the
/// repair early. Unused rebalancing moves are appended at the end in their
/// execution order.
pub fn interleave(
    graph: &Graph,
    initial_weights: &[Weight],
    max_block_weight: Weight,
    search: &[Move],
    by_origin: &[Vec<Move>],
    execution_order: &[Move],
) -> Vec<Move> {
    let k = initial_weights.len();
    let mut weights = initial_weights.to_vec();
    let mut pending_search = vec![false; graph.n()];
    for m in search {
        pending_search[m.node as usize] = true;
    }
    // index of every rebalancing move in execution order, for the leftovers
    let mut consumed = vec![false; execution_order.len()];
    let mut index_of = std::collections::HashMap::with_capacity(execution_order.len());
    for (i, m) in execution_order.iter().enumerate() {
        index_of.insert((m.node, m.from), i);
    }
    let mut next = vec![0usize; k];
    let mut out = Vec::with_capacity(search.len() + execution_order.len());
    let apply = |weights: &mut Vec<Weight>, m: &Move| {
        let c = graph.node_weight(m.node);
        weights[m.from as usize] -= c;
        weights[m.to as usize] += c;
    };

    for m in search {
        out.push(*m);
        apply(&mut weights, m);
        pending_search[m.node as usize] = false;
        loop {
            let mut progressed = false;
            for b in 0..k {
                while weights[b] > max_block_weight && next[b] < by_origin[b].len() {
                    let r = by_origin[b][next[b]];
                    if pending_search[r.node as usize] {
                        break;
                    }
                    out.push(r);
                    apply(&mut weights, &r);
                    next[b] += 1;
                    if let Some(&i) = index_of.get(&(r.node, r.from)) {
                        consumed[i] = true;
                    }
                    progressed = true;
                }
            }
            if !progressed || weights.iter().all(|&w| w <= max_block_weight) {
                break;
            }
        }
    }
    for (i, r) in execution_order.iter().enumerate() {
        if !consumed[i] {
            out.push(*r);
        }
    }
    out
}

/// Combines the two moves of a node into one at the first position; a pair
/// that returns the node to its origin is removed. Nodes moved more than
/// twice are rejected.
pub fn fuse_duplicate_moves(n: usize, sequence: &[Move]) -> Result<Vec<Move>> {
    let mut first = vec![UNMOVED; n];
    let mut count = vec![0u8; n];
    let mut out: Vec<Option<Move>> = Vec::with_capacity(sequence.len());
    for m in sequence {
        let v = m.node as usize;
        count[v] += 1;
        if count[v] > 2 {
            return Err(Error::DuplicateMoves {
                node: m.node,
                count: sequence.iter().filter(|x| x.node == m.node).count(),
                limit: 2,
            });
        }
        if first[v] == UNMOVED {
            first[v] = out.len();
            out.push(Some(*m));
            continue;
        }
        let slot = &mut out[first[v]];
        let prev = slot.expect("first move of a node is present");
        debug_assert_eq!(prev.to, m.from);
        *slot = if prev.from == m.to {
            None
        } else {
            Some(Move {
                node: m.node,
                from: prev.from,
                to: m.to,
                gain: prev.gain + m.gain,
            })
        };
    }
    Ok(out.into_iter().flatten().collect())
}

fn positions(n: usize, sequence: &[Move]) -> Result<Vec<usize>> {
    let mut pos = vec![UNMOVED; n];
    for (i, m) in sequence.iter().enumerate() {
        if pos[m.node as usize] != UNMOVED {
            return Err(Error::DuplicateMoves {
                node: m.node,
                count: 2,
                limit: 1,
            });
        }
        pos[m.node as usize] = i;
    }
    Ok(pos)
}

/// Exact gain of every move when the sequence is applied in order to
/// `initial`. Each move looks at its neighbors' positions in the sequence to
/// know which block they are in at that time, so all moves are evaluated
/// independently and in parallel.
pub fn recalculate_gains(
    graph: &Graph,
    initial: &[BlockId],
    sequence: &[Move],
    runtime: &Runtime,
) -> Result<Vec<Weight>> {
    let pos = positions(graph.n(), sequence)?;
    let gain_at = |p: usize| {
        let m = &sequence[p];
        let mut gain = 0;
        for (u, w) in graph.neighbors(m.node) {
            let q = pos[u as usize];
            let block = if q < p { sequence[q].to } else { initial[u as usize] };
            if block == m.to {
                gain += w;
            } else if block == m.from {
                gain -= w;
            }
        }
        gain
    };
    Ok(runtime.install(|| (0..sequence.len()).into_par_iter().map(gain_at).collect()))
}

/// Reference for [`recalculate_gains`]: applies the moves one at a time.
pub fn replay_gains(graph: &Graph, initial: &[BlockId], sequence: &[Move]) -> Vec<Weight> {
    let mut blocks = initial.to_vec();
    sequence
        .iter()
        .map(|m| {
            debug_assert_eq!(blocks[m.node as usize], m.from);
            let mut gain = 0;
            for (u, w) in graph.neighbors(m.node) {
                let b = blocks[u as usize];
                if b == m.to {
                    gain += w;
                } else if b == m.from {
                    gain -= w;
                }
            }
            blocks[m.node as usize] = m.to;
            gain
        })
        .collect()
}

/// Length and cumulative gain of the best prefix that ends in a balanced
/// state. Earlier prefixes win ties. `None` if no prefix is balanced.
pub fn best_balanced_prefix(
    graph: &Graph,
    initial_weights: &[Weight],
    max_block_weight: Weight,
    sequence: &[Move],
    gains: &[Weight],
) -> Option<(usize, Weight)> {
    let mut weights = initial_weights.to_vec();
    let mut overloaded = weights.iter().filter(|&&w| w > max_block_weight).count();
    let mut best = (overloaded == 0).then_some((0, 0));
    let mut total = 0;
    for (i, (m, &g)) in sequence.iter().zip(gains).enumerate() {
        let c = graph.node_weight(m.node);
        for (b, delta) in [(m.from, -c), (m.to, c)] {
            let w = &mut weights[b as usize];
            let before = *w > max_block_weight;
            *w += delta;
            let after = *w > max_block_weight;
            match (before, after) {
                (false, true) => overloaded += 1,
                (true, false) => overloaded -= 1,
                _ => {}
            }
        }
        total += g;
        if overloaded == 0 && best.is_none_or(|(_, b)| total > b) {
            best = Some((i + 1, total));
        }
    }
    best
}

/// Undoes the moves after the best balanced prefix. `state` must currently
/// reflect the whole sequence and `initial_cut` is the cut before it.
/// Returns `(prefix length, improvement)`.
pub fn revert_to_best_balanced_prefix(
    graph: &Graph,
    state: &PartitionState,
    table: &GainTable,
    initial_weights: &[Weight],
    initial_cut: Weight,
    sequence: &[Move],
    gains: &[Weight],
) -> (usize, Weight) {
    let (len, improvement) =
        best_balanced_prefix(graph, initial_weights, state.max_block_weight(), sequence, gains).unwrap_or((0, 0));
    for m in sequence[len..].iter().rev() {
        debug_assert_eq!(state.block(m.node), m.to);
        table.apply_move(graph, state, m.node, m.from);
    }
    state.set_cut(initial_cut - improvement);
    (len, improvement)
}

/// Nodes that occur in `sequence`, for audits.
pub fn moved_nodes(sequence: &[Move]) -> Vec<NodeId> {
    let mut nodes: Vec<NodeId> = sequence.iter().map(|m| m.node).collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::cut_from_scratch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mv(node: NodeId, from: BlockId, to: BlockId) -> Move {
        Move::new(node, from, to)
    }

    #[test]
    fn repair_follows_the_overloading_move() {
        // unit nodes, limit 2: m1 overloads block 1, r1 repairs it
        let g = Graph::unit(5, []).unwrap();
        let weights = vec![2, 2, 1];
        let m1 = mv(0, 0, 1);
        let m2 = mv(1, 0, 2);
        let r1 = mv(2, 1, 0);
        let out = interleave(&g, &weights, 2, &[m1, m2], &[vec![], vec![r1], vec![]], &[r1]);
        assert_eq!(out, vec![m1, r1, m2]);
    }

    #[test]
    fn balanced_search_moves_keep_leftovers_last() {
        let g = Graph::unit(4, []).unwrap();
        let m1 = mv(0, 0, 1);
        let r1 = mv(1, 1, 0);
        let out = interleave(&g, &[2, 1], 3, &[m1], &[vec![], vec![r1]], &[r1]);
        assert_eq!(out, vec![m1, r1]);
    }

    #[test]
    fn repairs_come_from_the_matching_block() {
        let g = Graph::unit(8, []).unwrap();
        // limit 2, weights [2, 2, 0]
        let m1 = mv(0, 2, 0);
        let m2 = mv(1, 2, 1);
        let r0 = mv(2, 0, 2);
        let r1 = mv(3, 1, 2);
        let weights = vec![2, 2, 2];
        let out = interleave(&g, &weights, 2, &[m1, m2], &[vec![r0], vec![r1], vec![]], &[r1, r0]);
        assert_eq!(out, vec![m1, r0, m2, r1]);
    }

    #[test]
    fn repair_waits_for_the_search_move_of_the_same_node() {
        let g = Graph::unit(4, []).unwrap();
        // limit 2, blocks {0,1} and {2,3}. The first rebalancing move of
        // block 1 belongs to node 0, which only gets there with the second
        // search move, so the overload after the first one stays unrepaired.
        let m1 = mv(1, 0, 1);
        let m2 = mv(0, 0, 1);
        let r = mv(0, 1, 2);
        let r2 = mv(2, 1, 2);
        let out = interleave(&g, &[2, 2, 0], 2, &[m1, m2], &[vec![], vec![r, r2], vec![]], &[r, r2]);
        assert_eq!(out, vec![m1, m2, r, r2]);
    }

    #[test]
    fn fusion() {
        let a = mv(0, 0, 1);
        assert_eq!(fuse_duplicate_moves(2, &[a, mv(0, 1, 2)]).unwrap(), vec![mv(0, 0, 2)]);
        assert!(fuse_duplicate_moves(2, &[a, mv(0, 1, 0)]).unwrap().is_empty());
        let seq = vec![a, mv(1, 0, 1)];
        assert_eq!(fuse_duplicate_moves(2, &seq).unwrap(), seq);
        let err = fuse_duplicate_moves(1, &[a, mv(0, 1, 0), a]).unwrap_err();
        assert!(matches!(err, Error::DuplicateMoves { node: 0, .. }));
    }

    #[test]
    fn fused_move_takes_the_first_position() {
        let seq = [mv(0, 0, 1), mv(1, 0, 1), mv(0, 1, 2)];
        assert_eq!(fuse_duplicate_moves(2, &seq).unwrap(), vec![mv(0, 0, 2), mv(1, 0, 1)]);
    }

    #[test]
    fn edge_gains_in_order() {
        let g = Graph::unit(2, [(0, 1)]).unwrap();
        let seq = [mv(0, 0, 1), mv(1, 0, 1)];
        let rt = Runtime::sequential();
        assert_eq!(recalculate_gains(&g, &[0, 0], &seq, &rt).unwrap(), vec![-1, 1]);
        assert_eq!(replay_gains(&g, &[0, 0], &seq), vec![-1, 1]);
    }

    #[test]
    fn recalculation_matches_replay_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rt = Runtime::new(2);
        for _ in 0..50 {
            let n = rng.random_range(2..100u32);
            let edges: Vec<_> = (0..3 * n)
                .map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(1..4)))
                .collect();
            let g = Graph::from_edges(vec![1; n as usize], edges).unwrap();
            let k = rng.random_range(2..5u32);
            let initial: Vec<BlockId> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let mut nodes: Vec<NodeId> = (0..n).collect();
            nodes.retain(|_| rng.random_bool(0.6));
            let seq: Vec<Move> = nodes
                .iter()
                .map(|&v| {
                    let from = initial[v as usize];
                    mv(v, from, (from + rng.random_range(1..k)) % k)
                })
                .collect();
            let gains = recalculate_gains(&g, &initial, &seq, &rt).unwrap();
            assert_eq!(gains, replay_gains(&g, &initial, &seq));
            let mut after = initial.clone();
            for m in &seq {
                after[m.node as usize] = m.to;
            }
            assert_eq!(
                cut_from_scratch(&g, &initial) - gains.iter().sum::<Weight>(),
                cut_from_scratch(&g, &after)
            );
        }
    }

    #[test]
    fn prefix_selection() {
        let g = Graph::unit(3, []).unwrap();
        let seq = [mv(0, 0, 1), mv(1, 0, 1), mv(2, 0, 1)];
        assert_eq!(best_balanced_prefix(&g, &[3, 0], 10, &seq, &[-1, -2, -1]), Some((0, 0)));
        assert_eq!(best_balanced_prefix(&g, &[3, 0], 10, &seq, &[2, -3, 4]), Some((3, 3)));
        // best raw prefix is length 1 but that state is overloaded (limit 2)
        let seq = [mv(0, 0, 1), mv(1, 1, 0)];
        assert_eq!(best_balanced_prefix(&g, &[1, 2], 2, &seq, &[5, -1]), Some((2, 4)));
    }

    #[test]
    fn revert_restores_prefix_state() {
        let g = Graph::from_edges(vec![1; 4], [(0, 1, 1), (1, 2, 2), (2, 3, 1)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.5, vec![0, 0, 1, 1]).unwrap();
        let t = GainTable::build(&g, &s);
        let initial_weights = s.block_weights();
        let initial_cut = s.cut();
        let seq = vec![mv(2, 1, 0), mv(3, 1, 0)];
        let rt = Runtime::sequential();
        let gains = recalculate_gains(&g, &s.blocks(), &seq, &rt).unwrap();
        for m in &seq {
            t.apply_move(&g, &s, m.node, m.to);
        }
        // gains [1, 1], but the full prefix puts all four nodes into block 0
        // (limit 3), so the best balanced prefix is the first move alone
        assert_eq!(gains, vec![1, 1]);
        let (len, imp) = revert_to_best_balanced_prefix(&g, &s, &t, &initial_weights, initial_cut, &seq, &gains);
        assert_eq!((len, imp), (1, 1));
        assert_eq!(s.cut(), 1);
        assert_eq!(s.blocks(), vec![0, 0, 0, 1]);
        s.check_consistency(&g).unwrap();
        t.check_against(&g, &s).unwrap();
    }
}
