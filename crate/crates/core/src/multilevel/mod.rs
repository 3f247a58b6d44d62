//! Multilevel scheme: coarsen, partition the coarsest graph, then project the
//! partition back level by level and refine it on each.

mod coarsen;
mod initial;

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::fm::{run_fm, FmConfig};
use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph};
use crate::lp::{run_lp, LpConfig};
use crate::partition::{BalanceLimit, PartitionState};
use crate::rebalance::{rebalance, RebalanceConfig};
use crate::runtime::Runtime;

pub use coarsen::{cluster, coarsen, contract, project, CoarseningConfig, Hierarchy, Level};
pub use initial::{initial_partition, lpt_assignment, InitialConfig};

/// Refinement applied on every level. `None` disables a refiner.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Refiners {
    pub lp: Option<LpConfig>,
    pub fm: Option<FmConfig>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefineStats {
    pub lp_time: Duration,
    pub fm_time: Duration,
    pub rebalance_time: Duration,
    pub lp_moves: usize,
    pub lp_rollbacks: usize,
    pub fm_rounds: usize,
    pub cut_per_level: Vec<i64>,
}

impl RefineStats {
    fn merge(&mut self, other: RefineStats) {
        self.lp_time += other.lp_time;
        self.fm_time += other.fm_time;
        self.rebalance_time += other.rebalance_time;
        self.lp_moves += other.lp_moves;
        self.lp_rollbacks += other.lp_rollbacks;
        self.fm_rounds += other.fm_rounds;
        self.cut_per_level.extend(other.cut_per_level);
    }
}

/// Runs the refiners (label propagation first, then FM) on one partition.
pub fn refine(
    graph: &Graph,
    state: &PartitionState,
    table: &GainTable,
    refiners: &Refiners,
    runtime: &Runtime,
    seed: u64,
) -> Result<RefineStats> {
    let mut stats = RefineStats::default();
    if !state.is_balanced() {
        let started = Instant::now();
        let config = RebalanceConfig {
            seed,
            ..Default::default()
        };
        rebalance(graph, state, table, runtime, &config)?;
        stats.rebalance_time += started.elapsed();
    }
    if let Some(lp) = &refiners.lp {
        let started = Instant::now();
        let config = LpConfig {
            rebalance: RebalanceConfig { seed, ..lp.rebalance },
            ..*lp
        };
        let report = run_lp(graph, state, table, runtime, &config)?;
        stats.lp_time += started.elapsed();
        stats.lp_moves += report.moves;
        stats.lp_rollbacks += report.rollbacks;
        stats.rebalance_time += report.rebalance_time;
    }
    if let Some(fm) = &refiners.fm {
        let started = Instant::now();
        let config = FmConfig { seed, ..*fm };
        let report = run_fm(graph, state, table, runtime, &config)?;
        stats.fm_time += started.elapsed();
        stats.rebalance_time += report.rebalance_time;
        stats.fm_rounds += report.rounds.len();
    }
    stats.cut_per_level.push(state.cut());
    Ok(stats)
}

/// Projects `coarse_blocks` from the coarsest level to the finest, refining
/// on every level including the coarsest.
#[allow(clippy::too_many_arguments)]
pub fn uncoarsen_and_refine(
    finest: &Graph,
    hierarchy: &Hierarchy,
    coarse_blocks: Vec<BlockId>,
    k: usize,
    limit: BalanceLimit,
    refiners: &Refiners,
    runtime: &Runtime,
    seed: u64,
) -> Result<(PartitionState, RefineStats)> {
    let mut stats = RefineStats::default();
    let mut blocks = coarse_blocks;
    for depth in (0..hierarchy.depth()).rev() {
        let graph = hierarchy.graph(finest, depth);
        let state = PartitionState::with_limit(graph, k, limit, blocks)?;
        let table = GainTable::build(graph, &state);
        let level_seed = seed.wrapping_add(depth as u64 * 0x1000_0000_01B3);
        stats.merge(refine(graph, &state, &table, refiners, runtime, level_seed)?);
        if depth == 0 {
            return Ok((state, stats));
        }
        blocks = project(&hierarchy.levels[depth - 1].mapping, &state.blocks());
    }
    unreachable!("the hierarchy always contains the finest graph")
}
