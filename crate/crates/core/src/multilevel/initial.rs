//! Initial partitioning of the coarsest graph by recursive greedy growing.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::{cut_from_scratch, BalanceLimit, PartitionState};
use crate::rebalance::{rebalance, RebalanceConfig};
use crate::runtime::Runtime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitialConfig {
    pub repetitions: usize,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { repetitions: 8 }
    }
}

/// Grows one region inside `nodes` from a random seed until it reaches
/// `target` weight. The next node is always the one with the most edge
/// weight into the region relative to the rest of `nodes`.
fn grow_region<R: Rng>(
    graph: &Graph,
    nodes: &[NodeId],
    in_subset: &[bool],
    target: Weight,
    rng: &mut R,
) -> Vec<NodeId> {
    // nodes in the region or skipped for overshooting the target
    let mut visited = vec![false; graph.n()];
    let mut conn = vec![0 as Weight; graph.n()];
    let mut heap: BinaryHeap<(Weight, Reverse<NodeId>)> = BinaryHeap::new();
    let mut region = Vec::new();
    let mut weight = 0;
    let mut remaining: Vec<NodeId> = nodes.to_vec();
    while weight < target {
        let next = loop {
            match heap.pop() {
                Some((key, Reverse(v))) => {
                    let current = 2 * conn[v as usize] - graph.weighted_degree(v);
                    if visited[v as usize] || key != current {
                        continue;
                    }
                    break Some(v);
                }
                None => break None,
            }
        };
        let v = match next {
            Some(v) => v,
            None => {
                remaining.retain(|&u| !visited[u as usize]);
                if remaining.is_empty() {
                    break;
                }
                remaining[rng.random_range(0..remaining.len())]
            }
        };
        let c = graph.node_weight(v);
        if weight > 0 && weight + c > target && weight + c - target > target - weight {
            // overshooting more than stopping short; try lighter nodes
            visited[v as usize] = true;
            continue;
        }
        visited[v as usize] = true;
        region.push(v);
        weight += c;
        for (u, w) in graph.neighbors(v) {
            if in_subset[u as usize] && !visited[u as usize] {
                conn[u as usize] += w;
                heap.push((2 * conn[u as usize] - graph.weighted_degree(u), Reverse(u)));
            }
        }
    }
    region
}

fn recursive_bisect<R: Rng>(
    graph: &Graph,
    nodes: Vec<NodeId>,
    first_block: BlockId,
    k: usize,
    blocks: &mut [BlockId],
    in_subset: &mut [bool],
    rng: &mut R,
) {
    if k == 1 {
        for &v in &nodes {
            blocks[v as usize] = first_block;
        }
        return;
    }
    let k1 = k / 2;
    let total: Weight = nodes.iter().map(|&v| graph.node_weight(v)).sum();
    let target = (total * k1 as Weight + k as Weight - 1) / k as Weight;
    for &v in &nodes {
        in_subset[v as usize] = true;
    }
    let region = grow_region(graph, &nodes, in_subset, target, rng);
    for &v in &nodes {
        in_subset[v as usize] = false;
    }
    let mut in_region = vec![false; graph.n()];
    for &v in &region {
        in_region[v as usize] = true;
    }
    let rest: Vec<NodeId> = nodes.into_iter().filter(|&v| !in_region[v as usize]).collect();
    recursive_bisect(graph, region, first_block, k1, blocks, in_subset, rng);
    recursive_bisect(graph, rest, first_block + k1 as BlockId, k - k1, blocks, in_subset, rng);
}

/// Heaviest node first into the currently lightest block.
pub fn lpt_assignment(graph: &Graph, k: usize) -> Vec<BlockId> {
    let mut order: Vec<NodeId> = graph.nodes().collect();
    order.sort_by_key(|&v| (Reverse(graph.node_weight(v)), v));
    let mut heap: BinaryHeap<Reverse<(Weight, BlockId)>> = (0..k as BlockId).map(|b| Reverse((0, b))).collect();
    let mut blocks = vec![0; graph.n()];
    for v in order {
        let Reverse((w, b)) = heap.pop().expect("k >= 1");
        blocks[v as usize] = b;
        heap.push(Reverse((w + graph.node_weight(v), b)));
    }
    blocks
}

/// One growing attempt, repaired by the rebalancer if needed.
fn attempt(graph: &Graph, k: usize, limit: BalanceLimit, seed: u64) -> Option<Vec<BlockId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = vec![0; graph.n()];
    let mut in_subset = vec![false; graph.n()];
    recursive_bisect(
        graph,
        graph.nodes().collect(),
        0,
        k,
        &mut blocks,
        &mut in_subset,
        &mut rng,
    );
    let state = PartitionState::with_limit(graph, k, limit, blocks).ok()?;
    if !state.is_balanced() {
        let table = GainTable::build(graph, &state);
        let config = RebalanceConfig {
            seed,
            ..Default::default()
        };
        rebalance(graph, &state, &table, &Runtime::sequential(), &config).ok()?;
    }
    Some(state.blocks())
}

/// Balanced `k`-way partition of a (small) graph: the best of several
/// recursive growing attempts, falling back to a greedy weight-based
/// assignment.
pub fn initial_partition(
    graph: &Graph,
    k: usize,
    epsilon: f64,
    seed: u64,
    config: &InitialConfig,
    runtime: &Runtime,
) -> Result<PartitionState> {
    let limit = BalanceLimit::new(graph.total_node_weight(), k, epsilon)?;
    if graph.max_node_weight() > limit.max_block_weight() {
        return Err(Error::Infeasible(format!(
            "a node of weight {} exceeds the maximum block weight {}",
            graph.max_node_weight(),
            limit.max_block_weight()
        )));
    }
    if k == 1 {
        return PartitionState::with_limit(graph, k, limit, vec![0; graph.n()]);
    }
    let reps: Vec<u64> = (0..config.repetitions.max(1) as u64).collect();
    let results = Mutex::new(Vec::new());
    runtime.for_each(&reps, |&rep| {
        let attempt_seed = seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(rep);
        if let Some(blocks) = attempt(graph, k, limit, attempt_seed) {
            let cut = cut_from_scratch(graph, &blocks);
            results.lock().push((cut, rep, blocks));
        }
    });
    let best = results
        .into_inner()
        .into_iter()
        .min_by_key(|(cut, rep, _)| (*cut, *rep));
    let blocks = match best {
        Some((_, _, blocks)) => blocks,
        None => {
            let blocks = lpt_assignment(graph, k);
            let state = PartitionState::with_limit(graph, k, limit, blocks)?;
            if !state.is_balanced() {
                return Err(Error::Infeasible(format!(
                    "no balanced assignment found (block weights {:?}, limit {})",
                    state.block_weights(),
                    limit.max_block_weight()
                )));
            }
            return Ok(state);
        }
    };
    PartitionState::with_limit(graph, k, limit, blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edgeless_graph_is_spread_evenly() {
        for k in [2, 3, 4] {
            let g = Graph::unit(2 * k, []).unwrap();
            let s = initial_partition(&g, k, 0.03, 1, &InitialConfig::default(), &Runtime::sequential()).unwrap();
            assert!(s.block_weights().iter().all(|&w| w == 2), "{:?}", s.block_weights());
        }
    }

    #[test]
    fn path_is_cut_once() {
        let g = Graph::unit(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = initial_partition(&g, 2, 0.03, 3, &InitialConfig::default(), &Runtime::sequential()).unwrap();
        assert_eq!(s.cut(), 1);
        assert!(s.is_balanced());
    }

    #[test]
    fn overweight_node_is_infeasible() {
        let g = Graph::from_edges(vec![10, 1, 1], [(0, 1, 1)]).unwrap();
        let err = initial_partition(&g, 2, 0.03, 0, &InitialConfig::default(), &Runtime::sequential()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn weighted_nodes_end_up_balanced() {
        let weights = vec![5, 4, 3, 3, 2, 2, 1, 1, 1, 1, 1];
        let edges: Vec<_> = (0..10).map(|v| (v, v + 1, 1)).collect();
        let g = Graph::from_edges(weights, edges).unwrap();
        let s = initial_partition(&g, 3, 0.1, 7, &InitialConfig::default(), &Runtime::new(2)).unwrap();
        assert!(s.is_balanced(), "{:?}", s.block_weights());
    }

    #[test]
    fn lpt_is_balanced_for_unit_weights() {
        let g = Graph::unit(10, []).unwrap();
        let blocks = lpt_assignment(&g, 3);
        let mut w = [0; 3];
        for b in blocks {
            w[b as usize] += 1;
        }
        assert_eq!(w, [4, 3, 3]);
    }
}
