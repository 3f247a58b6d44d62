//! End-to-end partitioning: coarsening, initial partitioning, and refinement
//! on every level while uncoarsening.

use std::time::{Duration, Instant};

use log::info;

use crate::error::{Error, Result};
use crate::fm::{FmConfig, Variant};
use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph, Weight};
use crate::lp::LpConfig;
use crate::multilevel::{
    coarsen, initial_partition, uncoarsen_and_refine, CoarseningConfig, InitialConfig, RefineStats, Refiners,
};
use crate::partition::{BalanceLimit, PartitionState};
use crate::runtime::Runtime;

/// Refinement preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    /// Label propagation and FM that may overload blocks and rebalance.
    #[default]
    Unconstrained,
    /// Both refiners only make moves that keep every block within the limit.
    Constrained,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconstrained" | "default" => Ok(Preset::Unconstrained),
            "constrained" => Ok(Preset::Constrained),
            _ => Err(Error::InvalidArgument(format!("unknown preset '{s}'"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Unconstrained => "unconstrained",
            Preset::Constrained => "constrained",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionConfig {
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub coarsening: CoarseningConfig,
    pub initial: InitialConfig,
    pub lp: Option<LpConfig>,
    pub fm: Option<FmConfig>,
}

impl PartitionConfig {
    pub fn new(k: usize, epsilon: f64) -> Self {
        Self::with_preset(k, epsilon, Preset::Unconstrained)
    }

    pub fn with_preset(k: usize, epsilon: f64, preset: Preset) -> Self {
        let constrained = preset == Preset::Constrained;
        PartitionConfig {
            k,
            epsilon,
            seed: 0,
            coarsening: CoarseningConfig::default(),
            initial: InitialConfig::default(),
            lp: Some(LpConfig {
                constrained,
                ..Default::default()
            }),
            fm: Some(FmConfig {
                constrained_only: constrained,
                ..Default::default()
            }),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Selects the FM variant used in unconstrained rounds.
    pub fn variant(mut self, variant: Variant) -> Self {
        if let Some(fm) = &mut self.fm {
            fm.variant = variant;
        }
        self
    }

    fn refiners(&self) -> Refiners {
        Refiners {
            lp: self.lp,
            fm: self.fm,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseTimings {
    pub coarsen: Duration,
    pub initial: Duration,
    pub lp: Duration,
    pub fm: Duration,
    /// Time spent rebalancing; part of the LP and FM times.
    pub rebalance: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    pub blocks: Vec<BlockId>,
    pub cut: Weight,
    pub imbalance: f64,
    pub balanced: bool,
    pub block_weights: Vec<Weight>,
    pub max_block_weight: Weight,
    /// Number of graphs in the hierarchy including the input.
    pub levels: usize,
    /// Cut of the initial partition of the coarsest graph.
    pub initial_cut: Weight,
    pub timings: PhaseTimings,
    pub refine: RefineStats,
}

/// Partitions `graph` into `config.k` blocks.
pub fn partition(graph: &Graph, config: &PartitionConfig, runtime: &Runtime) -> Result<PartitionResult> {
    let started = Instant::now();
    let k = config.k;
    let limit = BalanceLimit::new(graph.total_node_weight(), k, config.epsilon)?;
    if graph.max_node_weight() > limit.max_block_weight() {
        return Err(Error::Infeasible(format!(
            "a node of weight {} exceeds the maximum block weight {}",
            graph.max_node_weight(),
            limit.max_block_weight()
        )));
    }
    let mut timings = PhaseTimings::default();

    let phase = Instant::now();
    let contraction_limit = (k * config.coarsening.nodes_per_block).max(2);
    let max_cluster_weight = config.coarsening.max_cluster_weight.unwrap_or(limit.max_block_weight());
    let hierarchy = coarsen(
        graph,
        contraction_limit,
        max_cluster_weight,
        &config.coarsening,
        runtime,
    );
    timings.coarsen = phase.elapsed();

    let phase = Instant::now();
    let coarsest = hierarchy.coarsest(graph);
    let initial = initial_partition(coarsest, k, config.epsilon, config.seed, &config.initial, runtime)?;
    let initial_cut = initial.cut();
    timings.initial = phase.elapsed();
    info!(
        "{} levels, coarsest graph {} nodes, initial cut {initial_cut}",
        hierarchy.depth(),
        coarsest.n()
    );

    let (state, refine) = uncoarsen_and_refine(
        graph,
        &hierarchy,
        initial.blocks(),
        k,
        limit,
        &config.refiners(),
        runtime,
        config.seed,
    )?;
    timings.lp = refine.lp_time;
    timings.fm = refine.fm_time;
    timings.rebalance = refine.rebalance_time;
    timings.total = started.elapsed();
    Ok(PartitionResult {
        cut: state.cut(),
        imbalance: state.imbalance(),
        balanced: state.is_balanced(),
        block_weights: state.block_weights(),
        max_block_weight: state.max_block_weight(),
        blocks: state.blocks(),
        levels: hierarchy.depth(),
        initial_cut,
        timings,
        refine,
    })
}

/// Runs the configured refiners on an existing partition of `graph`.
pub fn refine_partition(
    graph: &Graph,
    blocks: Vec<BlockId>,
    config: &PartitionConfig,
    runtime: &Runtime,
) -> Result<(PartitionState, RefineStats)> {
    let state = PartitionState::new(graph, config.k, config.epsilon, blocks)?;
    let table = GainTable::build(graph, &state);
    let stats = crate::multilevel::refine(graph, &state, &table, &config.refiners(), runtime, config.seed)?;
    Ok((state, stats))
}
