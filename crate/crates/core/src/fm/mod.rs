//! Parallel k-way FM refinement with unconstrained rounds.
//!
//! A round runs localized searches whose moves may overload blocks (paying a
//! penalty), rebalances, interleaves the rebalancing moves into the search
//! sequence, fuses duplicate moves, recomputes exact gains and finally keeps
//! the best balanced prefix. The driver starts with unconstrained rounds at a
//! small penalty factor, raises it linearly, and switches for good to
//! constrained rounds once the relative improvement gets small.

pub mod penalty;
pub mod search;
pub mod sequence;

use std::time::{Duration, Instant};

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gain_table::GainTable;
use crate::graph::{Graph, NodeId, Weight};
use crate::partition::PartitionState;
use crate::rebalance::{rebalance, RebalanceConfig};
use crate::runtime::Runtime;

pub use penalty::{penalized_key, slot, Penalty, PenaltyBuckets, Tau, MAX_SLOT};
pub use search::{MovePolicy, SearchConfig, SearchContext, SearchStats};
pub use sequence::{
    best_balanced_prefix, fuse_duplicate_moves, interleave, recalculate_gains, replay_gains,
    revert_to_best_balanced_prefix,
};

/// How unconstrained rounds treat balance-violating moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Penalty estimated from the rebalancing buckets, scaled by the round's
    /// penalty factor.
    #[default]
    Penalized,
    /// No penalty at all.
    FullyUnconstrained,
    /// Penalty with a fixed factor.
    ConstantPenalty,
    /// No penalty, but blocks may not exceed a shrinking multiple of the limit.
    LimitedImbalance,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalized" => Ok(Variant::Penalized),
            "fully-unconstrained" | "fully_unconstrained" => Ok(Variant::FullyUnconstrained),
            "constant-penalty" | "constant_penalty" => Ok(Variant::ConstantPenalty),
            "limited-imbalance" | "limited_imbalance" => Ok(Variant::LimitedImbalance),
            _ => Err(Error::InvalidArgument(format!("unknown FM variant '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmConfig {
    pub total_rounds: usize,
    pub tau_first: f64,
    pub tau_final: f64,
    /// Relative improvement below which unconstrained rounds stop for good.
    pub switch_threshold: f64,
    /// Share of its edge weight a node needs inside its block to count as a
    /// rebalancing candidate.
    pub candidate_threshold: f64,
    pub variant: Variant,
    pub constant_tau: f64,
    pub alpha_first: f64,
    pub alpha_final: f64,
    /// Probe one constrained and one unconstrained round first and keep the
    /// mode that did better.
    pub dynamic_activation: bool,
    /// Run constrained rounds only.
    pub constrained_only: bool,
    pub search: SearchConfig,
    pub rebalance: RebalanceConfig,
    pub seed: u64,
}

impl Default for FmConfig {
    fn default() -> Self {
        FmConfig {
            total_rounds: 10,
            tau_first: 0.25,
            tau_final: 1.0,
            switch_threshold: 0.002,
            candidate_threshold: 0.7,
            variant: Variant::Penalized,
            constant_tau: 0.5,
            alpha_first: 2.0,
            alpha_final: 1.1,
            dynamic_activation: false,
            constrained_only: false,
            search: SearchConfig::default(),
            rebalance: RebalanceConfig::default(),
            seed: 0,
        }
    }
}

impl FmConfig {
    pub fn constrained() -> Self {
        FmConfig {
            constrained_only: true,
            ..Default::default()
        }
    }
}

/// What a single round does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundPlan {
    /// Zero-based round number.
    pub index: usize,
    pub constrained: bool,
    pub tau: f64,
    pub alpha: f64,
}

/// Decides the mode and parameters of every round from the improvements of
/// the previous ones.
#[derive(Debug, Clone)]
pub struct RoundScheduler {
    total: usize,
    budget: usize,
    tau: (f64, f64),
    alpha: (f64, f64),
    threshold: f64,
    dynamic: bool,
    started: usize,
    unconstrained_started: usize,
    constrained_mode: bool,
    finished: bool,
    last: Option<RoundPlan>,
    probe_constrained: Option<Weight>,
    switch_count: usize,
    switched_at: Option<usize>,
}

impl RoundScheduler {
    pub fn new(config: &FmConfig) -> Self {
        let total = config.total_rounds;
        RoundScheduler {
            total,
            budget: if config.constrained_only {
                0
            } else {
                total.saturating_sub(1)
            },
            tau: (config.tau_first, config.tau_final),
            alpha: (config.alpha_first, config.alpha_final),
            threshold: config.switch_threshold,
            dynamic: config.dynamic_activation && !config.constrained_only,
            started: 0,
            unconstrained_started: 0,
            constrained_mode: config.constrained_only,
            finished: false,
            last: None,
            probe_constrained: None,
            switch_count: 0,
            switched_at: None,
        }
    }

    fn interpolate(&self, (first, last): (f64, f64), i: usize) -> f64 {
        if self.budget <= 1 {
            return first;
        }
        first + i as f64 * (last - first) / (self.budget - 1) as f64
    }

    /// Penalty factor of the `i`-th unconstrained round (zero-based).
    pub fn tau_of(&self, i: usize) -> f64 {
        self.interpolate(self.tau, i)
    }

    pub fn alpha_of(&self, i: usize) -> f64 {
        self.interpolate(self.alpha, i)
    }

    /// Number of times the scheduler went from unconstrained to constrained.
    pub fn switch_count(&self) -> usize {
        self.switch_count
    }

    /// Round after which the scheduler switched to constrained rounds.
    pub fn switched_at(&self) -> Option<usize> {
        self.switched_at
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained_mode
    }

    fn switch(&mut self, after: usize) {
        if !self.constrained_mode {
            self.constrained_mode = true;
            self.switch_count += 1;
            self.switched_at = Some(after);
        }
    }

    pub fn next_round(&mut self) -> Option<RoundPlan> {
        if self.finished || self.started >= self.total {
            return None;
        }
        let index = self.started;
        let constrained_plan = RoundPlan {
            index,
            constrained: true,
            tau: f64::INFINITY,
            alpha: 1.0,
        };
        let plan = if self.dynamic && index == 0 {
            constrained_plan
        } else if self.dynamic && index == 1 && index + 1 < self.total {
            RoundPlan {
                index,
                constrained: false,
                tau: 0.5,
                alpha: self.alpha_of(0),
            }
        } else if !self.constrained_mode && self.unconstrained_started < self.budget && index + 1 < self.total {
            let i = self.unconstrained_started;
            RoundPlan {
                index,
                constrained: false,
                tau: self.tau_of(i),
                alpha: self.alpha_of(i),
            }
        } else {
            if let Some(prev) = self.last {
                self.switch(prev.index);
            }
            self.constrained_mode = true;
            constrained_plan
        };
        if !plan.constrained {
            self.unconstrained_started += 1;
        }
        self.started += 1;
        self.last = Some(plan);
        Some(plan)
    }

    /// Reports the improvement of the round last handed out and the cut it
    /// started from.
    pub fn record(&mut self, improvement: Weight, cut_before: Weight) {
        let Some(plan) = self.last else {
            return;
        };
        if self.dynamic && plan.index == 0 {
            self.probe_constrained = Some(improvement);
            return;
        }
        if self.dynamic && plan.index == 1 {
            if improvement <= self.probe_constrained.unwrap_or(0) {
                self.switch(plan.index);
            }
            return;
        }
        if plan.constrained {
            if improvement <= 0 {
                self.finished = true;
            }
            return;
        }
        let relative = if cut_before > 0 {
            improvement as f64 / cut_before as f64
        } else {
            0.0
        };
        if relative < self.threshold {
            self.switch(plan.index);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundReport {
    pub index: usize,
    pub constrained: bool,
    pub tau: f64,
    pub cut_before: Weight,
    pub improvement: Weight,
    pub search: SearchStats,
    pub search_moves: usize,
    pub rebalance_moves: usize,
    pub sequence_len: usize,
    pub prefix_len: usize,
    /// Largest number of search moves of a single node (ownership audit).
    pub max_search_moves_per_node: usize,
    pub rebalance_failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FmReport {
    pub initial_cut: Weight,
    pub final_cut: Weight,
    pub rounds: Vec<RoundReport>,
    pub switched_at: Option<usize>,
    pub rebalance_time: Duration,
}

fn policy_for(plan: &RoundPlan, config: &FmConfig, state: &PartitionState) -> MovePolicy {
    if plan.constrained {
        return MovePolicy::Capped(state.max_block_weight());
    }
    match config.variant {
        Variant::Penalized => MovePolicy::Penalized(Tau::new(plan.tau)),
        Variant::ConstantPenalty => MovePolicy::Penalized(Tau::new(config.constant_tau)),
        Variant::FullyUnconstrained => MovePolicy::Unlimited,
        Variant::LimitedImbalance => MovePolicy::Capped(state.limit().scaled_max(plan.alpha)),
    }
}

/// Boundary nodes in a seeded random order.
fn shuffled_boundary(graph: &Graph, state: &PartitionState, table: &GainTable, seed: u64) -> Vec<NodeId> {
    let mut seeds: Vec<NodeId> = graph.nodes().filter(|&v| table.is_boundary(graph, state, v)).collect();
    seeds.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    seeds
}

/// One FM round. On return the partition is balanced and its cut is at most
/// the cut it started with.
pub fn run_round(
    graph: &Graph,
    state: &PartitionState,
    table: &GainTable,
    runtime: &Runtime,
    config: &FmConfig,
    plan: &RoundPlan,
    rebalance_time: &mut Duration,
) -> Result<RoundReport> {
    let round_seed = config
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(plan.index as u64);
    let mut report = RoundReport {
        index: plan.index,
        constrained: plan.constrained,
        tau: plan.tau,
        cut_before: state.cut(),
        ..Default::default()
    };
    let initial = state.snapshot();
    let policy = policy_for(plan, config, state);
    let buckets = match policy {
        MovePolicy::Penalized(_) => PenaltyBuckets::new(graph, state, table, config.candidate_threshold),
        _ => PenaltyBuckets::from_buckets(state.k(), &[]),
    };
    let seeds = shuffled_boundary(graph, state, table, round_seed);
    let ctx = SearchContext::new(graph, state, table, &buckets, policy, config.search, seeds);
    let (search_moves, stats) = ctx.run(runtime);
    report.search = stats;
    report.search_moves = search_moves.len();
    let mut per_node = vec![0u8; graph.n()];
    for m in &search_moves {
        per_node[m.node as usize] += 1;
        report.max_search_moves_per_node = report.max_search_moves_per_node.max(per_node[m.node as usize] as usize);
    }
    if search_moves.is_empty() {
        return Ok(report);
    }
    if !runtime.is_sequential() {
        state.resync_cut(graph);
    }

    let mut by_origin = vec![Vec::new(); state.k()];
    let mut rebalancing = Vec::new();
    if !state.is_balanced() {
        let started = Instant::now();
        let rb = RebalanceConfig {
            seed: round_seed,
            ..config.rebalance
        };
        let outcome = rebalance(graph, state, table, runtime, &rb);
        *rebalance_time += started.elapsed();
        match outcome {
            Ok(outcome) => {
                by_origin = outcome.moves_by_origin;
                rebalancing = outcome.moves;
            }
            Err(Error::Infeasible(msg)) => {
                debug!("fm round {}: rebalancing failed ({msg}), rolling back", plan.index);
                table.restore(graph, state, &initial);
                report.rebalance_failed = true;
                return Ok(report);
            }
            Err(e) => return Err(e),
        }
    }
    report.rebalance_moves = rebalancing.len();

    let limit = state.max_block_weight();
    let interleaved = interleave(
        graph,
        &initial.block_weights,
        limit,
        &search_moves,
        &by_origin,
        &rebalancing,
    );
    let fused = fuse_duplicate_moves(graph.n(), &interleaved)?;
    let gains = recalculate_gains(graph, &initial.blocks, &fused, runtime)?;
    report.sequence_len = fused.len();
    let (len, improvement) =
        revert_to_best_balanced_prefix(graph, state, table, &initial.block_weights, initial.cut, &fused, &gains);
    report.prefix_len = len;
    report.improvement = improvement;
    debug_assert_eq!(state.cut(), crate::partition::cut_from_scratch(graph, &state.blocks()));
    debug!(
        "fm round {} ({}): {} search moves, {} rebalancing, prefix {}/{}, improvement {}",
        plan.index,
        if plan.constrained {
            "constrained"
        } else {
            "unconstrained"
        },
        report.search_moves,
        report.rebalance_moves,
        len,
        fused.len(),
        improvement
    );
    Ok(report)
}

/// Runs the FM rounds on a balanced partition. The result is balanced and
/// its cut is at most the input cut.
pub fn run_fm(
    graph: &Graph,
    state: &PartitionState,
    table: &GainTable,
    runtime: &Runtime,
    config: &FmConfig,
) -> Result<FmReport> {
    let mut report = FmReport {
        initial_cut: state.cut(),
        final_cut: state.cut(),
        ..Default::default()
    };
    if state.k() < 2 || !state.is_balanced() {
        return Ok(report);
    }
    let mut scheduler = RoundScheduler::new(config);
    while let Some(plan) = scheduler.next_round() {
        let before = state.cut();
        let round = run_round(graph, state, table, runtime, config, &plan, &mut report.rebalance_time)?;
        scheduler.record(round.improvement, before);
        report.rounds.push(round);
    }
    report.switched_at = scheduler.switched_at();
    report.final_cut = state.cut();
    Ok(report)
}
