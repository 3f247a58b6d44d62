//! Penalty estimation for balance-violating moves.
//!
//! Nodes with a large share of their edge weight inside their own block are
//! cheap to move out again and are kept as rebalancing candidates. They are
//! sorted by internal edge weight over node weight into buckets of width 3/2
//! per block.
//! The penalty of a move that overloads block `j` is the cost of the smallest
//! bucket prefix able to absorb the overload, scaled by the mover's weight.
//!
//! All arithmetic is exact: penalties are `3^l * node_weight / 2^l` and are carried as
//! integers scaled by `2^MAX_SLOT`.

use std::sync::atomic::{AtomicI64, Ordering};

use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::PartitionState;

pub const MAX_SLOT: usize = 40;
const SLOTS: usize = MAX_SLOT + 1;
const NOT_CANDIDATE: u8 = u8::MAX;
const TAU_DEN: i128 = 1_000_000;

const fn powers(base: i128) -> [i128; SLOTS] {
    let mut out = [1i128; SLOTS];
    let mut i = 1;
    while i < SLOTS {
        out[i] = out[i - 1] * base;
        i += 1;
    }
    out
}

const POW2: [i128; SLOTS] = powers(2);
const POW3: [i128; SLOTS] = powers(3);

/// Scale of [`penalized_key`] values: one unit of gain.
pub const KEY_SCALE: i128 = POW2[MAX_SLOT] * TAU_DEN;

/// `ceil(log_{3/2}(internal / node_weight))`, clamped to `[0, MAX_SLOT]`.
///
/// Computed as the smallest `s` with `internal * 2^s <= node_weight * 3^s`.
pub fn slot(internal: Weight, node_weight: Weight) -> usize {
    debug_assert!(node_weight > 0 && internal >= 0);
    let (a, c) = (internal as i128, node_weight as i128);
    (0..SLOTS).find(|&s| a * POW2[s] <= c * POW3[s]).unwrap_or(MAX_SLOT)
}

/// Estimated cost of a move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    /// The target stays within the limit.
    Zero,
    /// `(3/2)^slot * node_weight`.
    Slot { slot: u32, node_weight: Weight },
    /// No bucket prefix can absorb the overload.
    Forbidden,
}

impl Penalty {
    /// Penalty times `2^MAX_SLOT`, or `None` when forbidden.
    pub fn scaled(&self) -> Option<i128> {
        match *self {
            Penalty::Zero => Some(0),
            Penalty::Slot { slot, node_weight } => {
                let s = slot as usize;
                Some(POW3[s] * node_weight as i128 * POW2[MAX_SLOT - s])
            }
            Penalty::Forbidden => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Penalty::Zero => 0.0,
            Penalty::Slot { slot, node_weight } => 1.5f64.powi(slot as i32) * node_weight as f64,
            Penalty::Forbidden => f64::INFINITY,
        }
    }
}

/// Penalty factor, kept as a multiple of `1e-6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tau(i128);

impl Tau {
    pub fn new(tau: f64) -> Self {
        Tau((tau.max(0.0) * TAU_DEN as f64).round() as i128)
    }

    pub fn as_f64(&self) -> f64 {
        self.0 as f64 / TAU_DEN as f64
    }
}

/// `(gain - tau * penalty) * KEY_SCALE`, or `None` for forbidden moves.
pub fn penalized_key(gain: Weight, penalty: Penalty, tau: Tau) -> Option<i128> {
    Some(gain as i128 * KEY_SCALE - tau.0 * penalty.scaled()?)
}

/// Rebalancing candidates bucketed per block and slot, plus the per-block
/// virtual weight deltas for candidates that already left their block.
#[derive(Debug)]
pub struct PenaltyBuckets {
    k: usize,
    slot_of: Vec<u8>,
    origin: Vec<BlockId>,
    /// `prefix[j * SLOTS + i]` is the total weight of slots `0..=i` of block `j`.
    prefix: Vec<Weight>,
    virtual_delta: Vec<AtomicI64>,
}

impl PenaltyBuckets {
    /// Collects the candidates `v` whose edge weight into their own block is at
    /// least `t` times their weighted degree.
    pub fn new(graph: &Graph, state: &PartitionState, table: &GainTable, t: f64) -> Self {
        let t_scaled = (t * TAU_DEN as f64).round() as i128;
        let k = state.k();
        let mut weights = vec![0 as Weight; k * SLOTS];
        let mut slot_of = vec![NOT_CANDIDATE; graph.n()];
        let origin = state.blocks();
        for v in graph.nodes() {
            let b = origin[v as usize];
            let internal = table.weight_to(v, b);
            if internal as i128 * TAU_DEN >= t_scaled * graph.weighted_degree(v) as i128 {
                let s = slot(internal, graph.node_weight(v));
                slot_of[v as usize] = s as u8;
                weights[b as usize * SLOTS + s] += graph.node_weight(v);
            }
        }
        Self::from_bucket_weights(k, weights, slot_of, origin)
    }

    /// Buckets with explicit contents: `(block, slot, weight)` triples.
    pub fn from_buckets(k: usize, entries: &[(BlockId, usize, Weight)]) -> Self {
        let mut weights = vec![0 as Weight; k * SLOTS];
        for &(b, s, w) in entries {
            weights[b as usize * SLOTS + s.min(MAX_SLOT)] += w;
        }
        Self::from_bucket_weights(k, weights, Vec::new(), Vec::new())
    }

    fn from_bucket_weights(k: usize, mut weights: Vec<Weight>, slot_of: Vec<u8>, origin: Vec<BlockId>) -> Self {
        for row in weights.chunks_mut(SLOTS) {
            for i in 1..SLOTS {
                row[i] += row[i - 1];
            }
        }
        PenaltyBuckets {
            k,
            slot_of,
            origin,
            prefix: weights,
            virtual_delta: (0..k).map(|_| AtomicI64::new(0)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_candidate(&self, v: NodeId) -> bool {
        self.slot_of.get(v as usize).is_some_and(|&s| s != NOT_CANDIDATE)
    }

    pub fn slot_of(&self, v: NodeId) -> Option<usize> {
        self.is_candidate(v).then(|| self.slot_of[v as usize] as usize)
    }

    /// Block of `v` when the buckets were built.
    pub fn origin(&self, v: NodeId) -> BlockId {
        self.origin[v as usize]
    }

    pub fn prefix_weight(&self, block: BlockId, slot: usize) -> Weight {
        self.prefix[block as usize * SLOTS + slot.min(MAX_SLOT)]
    }

    pub fn bucket_weight(&self, block: BlockId, slot: usize) -> Weight {
        let here = self.prefix_weight(block, slot);
        if slot == 0 {
            here
        } else {
            here - self.prefix_weight(block, slot - 1)
        }
    }

    /// Total candidate weight of `block`.
    pub fn candidate_weight(&self, block: BlockId) -> Weight {
        self.prefix_weight(block, MAX_SLOT)
    }

    pub fn virtual_delta(&self, block: BlockId) -> Weight {
        self.virtual_delta[block as usize].load(Ordering::Relaxed)
    }

    /// A candidate of weight `weight` left `origin`.
    pub fn on_candidate_left(&self, origin: BlockId, weight: Weight) {
        self.virtual_delta[origin as usize].fetch_add(weight, Ordering::Relaxed);
    }

    /// Undoes [`Self::on_candidate_left`] for a move that was discarded.
    pub fn on_candidate_returned(&self, origin: BlockId, weight: Weight) {
        self.virtual_delta[origin as usize].fetch_sub(weight, Ordering::Relaxed);
    }

    /// Penalty of moving a node of weight `node_weight` into `block`, whose
    /// current weight is `block_weight` (without the virtual delta).
    pub fn estimate(
        &self,
        node_weight: Weight,
        block: BlockId,
        block_weight: Weight,
        max_block_weight: Weight,
    ) -> Penalty {
        let effective = block_weight + self.virtual_delta(block);
        let overload = effective + node_weight - max_block_weight;
        if overload <= 0 {
            return Penalty::Zero;
        }
        let base = block as usize * SLOTS;
        let row = &self.prefix[base..base + SLOTS];
        // prefix sums are nondecreasing
        let l = row.partition_point(|&w| w < overload);
        if l == SLOTS {
            Penalty::Forbidden
        } else {
            Penalty::Slot {
                slot: l as u32,
                node_weight,
            }
        }
    }
}
