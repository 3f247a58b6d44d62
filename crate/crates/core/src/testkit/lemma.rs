//! Checks the penalty bound on rebalancing cost.
//!
//! Scenario: unit node weights, a balanced partition, and a list of nodes
//! moved one after another into a single target block, none of which started
//! there. Each arrival is charged the penalty the buckets assign at that
//! moment. Rebalancing then moves, for every unit of overload, the remaining
//! candidate of the target block with the smallest slot to the lightest other
//! block. The measured cut increase must not exceed the penalty sum divided
//! by the candidate threshold.

use crate::error::{Error, Result};
use crate::fm::{Penalty, PenaltyBuckets};
use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::{Move, PartitionState};

const T_DEN: i128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyBoundReport {
    pub penalties: Vec<Penalty>,
    /// Nodes moved out of the target block, in order.
    pub rebalancing_nodes: Vec<NodeId>,
    /// Cut increase caused by the rebalancing moves.
    pub cost: Weight,
    /// Total incident edge weight of the rebalancing nodes.
    pub incident_weight: Weight,
    /// Penalty sum divided by the candidate threshold.
    pub bound: f64,
    pub holds: bool,
    pub balanced_after: bool,
}

impl PenaltyBoundReport {
    pub fn slack(&self) -> f64 {
        self.bound - self.cost as f64
    }
}

/// Runs the scenario described in the module docs. Fails if the scenario's
/// preconditions do not hold, including when some arrival's penalty is
/// forbidden.
pub fn verify_penalty_bound(
    graph: &Graph,
    blocks: &[BlockId],
    k: usize,
    epsilon: f64,
    target: BlockId,
    arrivals: &[NodeId],
    t: f64,
) -> Result<PenaltyBoundReport> {
    if !graph.has_unit_node_weights() {
        return Err(Error::InvalidArgument("node weights must all be 1".into()));
    }
    if !(0.0..=1.0).contains(&t) || t == 0.0 {
        return Err(Error::InvalidArgument(format!("threshold must be in (0, 1], got {t}")));
    }
    let state = PartitionState::new(graph, k, epsilon, blocks.to_vec())?;
    if !state.is_balanced() {
        return Err(Error::InvalidArgument("initial partition is not balanced".into()));
    }
    let mut seen = vec![false; graph.n()];
    for &u in arrivals {
        if blocks[u as usize] == target {
            return Err(Error::InvalidArgument(format!(
                "node {u} already is in the target block"
            )));
        }
        if std::mem::replace(&mut seen[u as usize], true) {
            return Err(Error::InvalidArgument(format!("node {u} arrives twice")));
        }
    }
    let table = GainTable::build(graph, &state);
    let buckets = PenaltyBuckets::new(graph, &state, &table, t);
    let max = state.max_block_weight();
    let base = state.block_weight(target);

    let mut penalties = Vec::with_capacity(arrivals.len());
    let mut scaled_sum: i128 = 0;
    for (i, &u) in arrivals.iter().enumerate() {
        let p = buckets.estimate(1, target, base + i as Weight, max);
        match p.scaled() {
            Some(s) => scaled_sum += s,
            None => {
                return Err(Error::InvalidArgument(format!(
                    "penalty of arrival {i} (node {u}) is forbidden"
                )))
            }
        }
        penalties.push(p);
    }

    for &u in arrivals {
        state.apply_move(graph, Move::new(u, blocks[u as usize], target));
    }
    let before = state.cut();
    let mut candidates: Vec<(usize, NodeId)> = graph
        .nodes()
        .filter(|&v| blocks[v as usize] == target)
        .filter_map(|v| buckets.slot_of(v).map(|s| (s, v)))
        .collect();
    candidates.sort_unstable();
    let overload = (state.block_weight(target) - max).max(0) as usize;
    let mut rebalancing_nodes = Vec::with_capacity(overload);
    let mut incident_weight = 0;
    for &(_, b) in candidates.iter().take(overload) {
        let to = (0..k as BlockId)
            .filter(|&x| x != target)
            .min_by_key(|&x| (state.block_weight(x), x))
            .expect("k >= 2 when arrivals exist");
        state.apply_move(graph, Move::new(b, target, to));
        rebalancing_nodes.push(b);
        incident_weight += graph.weighted_degree(b);
    }
    let cost = state.cut() - before;
    let t_scaled = (t * T_DEN as f64).round() as i128;
    let scale = crate::fm::penalty::KEY_SCALE / T_DEN;
    let holds = cost as i128 * scale * t_scaled <= scaled_sum * T_DEN;
    let bound = penalties.iter().map(Penalty::as_f64).sum::<f64>() / (t_scaled as f64 / T_DEN as f64);
    Ok(PenaltyBoundReport {
        penalties,
        rebalancing_nodes,
        cost,
        incident_weight,
        bound,
        holds,
        balanced_after: state.is_balanced(),
    })
}
