//! Parallel priority-driven rebalancing.
//!
//! All nodes of overloaded blocks are inserted into a multi-queue keyed by
//! [`Priority`]. Workers then repeatedly extract a relaxed maximum, move it to
//! its preferred target block and refresh the priorities of its queued
//! neighbors. Only moves into blocks that stay within the limit are made;
//! target weights are reserved with an atomic read-modify-write. Nodes
//! extracted after their block stopped being overloaded are skipped.
//!
//! Insertion and moving are separate phases, which is what makes the simple
//! emptiness check of the multi-queue sound.

mod multiqueue;
mod priority;

use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU32, AtomicU64, AtomicUsize, Ordering};

use parking_lot::Mutex;
use rand::Rng;

pub use multiqueue::{Inspect, MultiQueue, QueueKey, NOT_QUEUED};
pub use priority::Priority;

use crate::error::{Error, Result};
use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::{Move, PartitionState};
use crate::runtime::{worker_rng, Runtime};

const NO_TARGET: BlockId = BlockId::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RebalanceConfig {
    /// Sequential queues per worker.
    pub queue_factor: usize,
    pub seed: u64,
    /// Upper bound on insertion/moving passes; a second pass only happens
    /// when the first one drains the queue with blocks still overloaded.
    pub max_passes: usize,
}

impl Default for RebalanceConfig {
    fn default() -> Self {
        RebalanceConfig {
            queue_factor: 2,
            seed: 0,
            max_passes: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RebalanceStats {
    pub passes: usize,
    pub inserted: usize,
    pub moved: usize,
    pub skipped: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RebalanceOutcome {
    /// Performed moves grouped by origin block, in execution order.
    pub moves_by_origin: Vec<Vec<Move>>,
    /// All moves in execution order.
    pub moves: Vec<Move>,
    pub stats: RebalanceStats,
}

impl RebalanceOutcome {
    fn empty(k: usize) -> Self {
        RebalanceOutcome {
            moves_by_origin: vec![Vec::new(); k],
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    /// Sum of the gains of all rebalancing moves.
    pub fn total_gain(&self) -> Weight {
        self.moves.iter().map(|m| m.gain).sum()
    }
}

/// Preferred move of a node: target block and its gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preferred {
    pub target: Option<BlockId>,
    pub gain: Weight,
}

/// Shared state of one rebalancing pass.
pub struct RebalanceContext<'a> {
    graph: &'a Graph,
    state: &'a PartitionState,
    table: &'a GainTable,
    queue: MultiQueue<Priority>,
    node_locks: Vec<AtomicBool>,
    preferred_target: Vec<AtomicU32>,
    preferred_gain: Vec<AtomicI64>,
    overloaded: AtomicUsize,
    ticket: AtomicU64,
    inserted: AtomicUsize,
    moved: AtomicUsize,
    skipped: AtomicUsize,
}

impl<'a> RebalanceContext<'a> {
    pub fn new(graph: &'a Graph, state: &'a PartitionState, table: &'a GainTable, num_queues: usize) -> Self {
        let n = graph.n();
        RebalanceContext {
            graph,
            state,
            table,
            queue: MultiQueue::new(n, num_queues),
            node_locks: (0..n).map(|_| AtomicBool::new(false)).collect(),
            preferred_target: (0..n).map(|_| AtomicU32::new(NO_TARGET)).collect(),
            preferred_gain: (0..n).map(|_| AtomicI64::new(0)).collect(),
            overloaded: AtomicUsize::new(state.overloaded_blocks().len()),
            ticket: AtomicU64::new(0),
            inserted: AtomicUsize::new(0),
            moved: AtomicUsize::new(0),
            skipped: AtomicUsize::new(0),
        }
    }

    pub fn queue(&self) -> &MultiQueue<Priority> {
        &self.queue
    }

    #[inline]
    fn try_lock_node(&self, v: NodeId) -> bool {
        self.node_locks[v as usize]
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .is_ok()
    }

    #[inline]
    fn unlock_node(&self, v: NodeId) {
        self.node_locks[v as usize].store(false, Ordering::Release);
    }

    /// Best-gain move of `v` into a block that can take it without exceeding
    /// the limit. Adjacent blocks are preferred; ties go to the lighter block,
    /// then the smaller id. Without an adjacent candidate, the lightest block
    /// is used if it fits.
    pub fn preferred_move(&self, v: NodeId) -> Preferred {
        let state = self.state;
        let from = state.block(v);
        let c = self.graph.node_weight(v);
        let limit = state.max_block_weight();
        let internal = self.table.weight_to(v, from);
        let mut best: Option<(Weight, Weight, BlockId)> = None;
        let mut lightest: Option<(Weight, BlockId)> = None;
        for b in 0..state.k() as BlockId {
            if b == from {
                continue;
            }
            let w = state.block_weight(b);
            if lightest.is_none_or(|(lw, _)| w < lw) {
                lightest = Some((w, b));
            }
            let to = self.table.weight_to(v, b);
            if to == 0 || w + c > limit {
                continue;
            }
            let gain = to - internal;
            let better = match best {
                None => true,
                Some((bg, bw, _)) => gain > bg || (gain == bg && w < bw),
            };
            if better {
                best = Some((gain, w, b));
            }
        }
        if let Some((gain, _, b)) = best {
            return Preferred { target: Some(b), gain };
        }
        match lightest {
            Some((w, b)) if w + c <= limit => Preferred {
                target: Some(b),
                gain: self.table.weight_to(v, b) - internal,
            },
            _ => Preferred {
                target: None,
                gain: -internal,
            },
        }
    }

    pub fn priority_of(&self, v: NodeId, preferred: Preferred) -> Priority {
        match preferred.target {
            Some(_) => Priority::new(preferred.gain, self.graph.node_weight(v)),
            None => Priority::lowest(),
        }
    }

    fn store_preferred(&self, v: NodeId, p: Preferred) {
        self.preferred_target[v as usize].store(p.target.unwrap_or(NO_TARGET), Ordering::Relaxed);
        self.preferred_gain[v as usize].store(p.gain, Ordering::Relaxed);
    }

    /// Cached preferred move of `v`, as of its last evaluation.
    pub fn cached_preferred(&self, v: NodeId) -> Preferred {
        let t = self.preferred_target[v as usize].load(Ordering::Relaxed);
        Preferred {
            target: (t != NO_TARGET).then_some(t),
            gain: self.preferred_gain[v as usize].load(Ordering::Relaxed),
        }
    }

    /// Evaluates and queues `v`.
    pub fn insert<R: Rng>(&self, v: NodeId, rng: &mut R) {
        let p = self.preferred_move(v);
        self.store_preferred(v, p);
        self.queue.insert(v, self.priority_of(v, p), rng);
        self.inserted.fetch_add(1, Ordering::Relaxed);
    }

    /// Insertion phase: every node of an overloaded block.
    pub fn insert_candidates(&self, runtime: &Runtime, seed: u64) {
        let overloaded: Vec<bool> = (0..self.state.k() as BlockId)
            .map(|b| self.state.is_overloaded(b))
            .collect();
        let candidates: Vec<NodeId> = self
            .graph
            .nodes()
            .filter(|&v| overloaded[self.state.block(v) as usize])
            .collect();
        let workers = runtime.workers();
        runtime.run_workers(|w| {
            let mut rng = worker_rng(seed, w);
            for &v in candidates.iter().skip(w).step_by(workers) {
                self.insert(v, &mut rng);
            }
        });
    }

    /// Fused relaxed delete-max, node locking and gain double-check.
    ///
    /// On success the node is removed from the queue and returned with its
    /// node lock held. A node whose lock is busy is left in place; a node
    /// whose priority got worse is re-keyed in place. Both cases redraw.
    /// Nodes of blocks that are no longer overloaded are returned as well so
    /// the caller can skip them.
    pub fn try_delete_max_checked<R: Rng>(&self, rng: &mut R) -> Option<NodeId> {
        self.queue
            .try_delete_max_with(rng, |v, key| {
                if !self.try_lock_node(v) {
                    return Inspect::Retry;
                }
                if !self.state.is_overloaded(self.state.block(v)) {
                    return Inspect::Accept;
                }
                let p = self.preferred_move(v);
                self.store_preferred(v, p);
                let fresh = self.priority_of(v, p);
                if fresh < key {
                    self.unlock_node(v);
                    Inspect::Rekey(fresh)
                } else {
                    Inspect::Accept
                }
            })
            .map(|(v, _)| v)
    }

    /// Re-evaluates the queued neighbors of `moved`. Neighbors whose lock is
    /// held elsewhere are skipped. Updates are grouped per sequential queue
    /// and each queue is updated in one batch; node locks are released only
    /// after their queue has been updated.
    pub fn update_neighbors_bulk(&self, moved: NodeId) {
        let mut groups: Vec<Vec<(NodeId, Priority)>> = vec![Vec::new(); self.queue.num_queues()];
        let mut pending = 0usize;
        for (u, _) in self.graph.neighbors(moved) {
            if self.queue.queue_of(u).is_none() || !self.try_lock_node(u) {
                continue;
            }
            match self.queue.queue_of(u) {
                Some(q) => {
                    let p = self.preferred_move(u);
                    self.store_preferred(u, p);
                    if groups[q].is_empty() {
                        pending += 1;
                    }
                    groups[q].push((u, self.priority_of(u, p)));
                }
                None => self.unlock_node(u),
            }
        }
        let mut failures = 0u32;
        while pending > 0 {
            for (q, group) in groups.iter_mut().enumerate() {
                if group.is_empty() || !self.queue.try_update_batch(q, group) {
                    continue;
                }
                for &(u, _) in group.iter() {
                    self.unlock_node(u);
                }
                group.clear();
                pending -= 1;
            }
            if pending > 0 {
                multiqueue::backoff(&mut failures);
            }
        }
    }

    /// One worker of the moving phase. Returns `(ticket, move)` pairs.
    fn move_nodes<R: Rng>(&self, rng: &mut R) -> Vec<(u64, Move)> {
        let state = self.state;
        let limit = state.max_block_weight();
        let mut log = Vec::new();
        while self.overloaded.load(Ordering::Acquire) > 0 {
            let Some(v) = self.try_delete_max_checked(rng) else {
                break;
            };
            let from = state.block(v);
            let c = self.graph.node_weight(v);
            if !state.is_overloaded(from) {
                self.skipped.fetch_add(1, Ordering::Relaxed);
                self.unlock_node(v);
                continue;
            }
            let mut reserved = self
                .cached_preferred(v)
                .target
                .filter(|&t| state.try_reserve(t, c, limit));
            if reserved.is_none() {
                let p = self.preferred_move(v);
                self.store_preferred(v, p);
                reserved = p.target.filter(|&t| state.try_reserve(t, c, limit));
            }
            let Some(to) = reserved else {
                self.skipped.fetch_add(1, Ordering::Relaxed);
                self.unlock_node(v);
                continue;
            };
            let (gain, origin_weight) = self.table.apply_reserved_move(self.graph, state, v, from, to);
            let ticket = self.ticket.fetch_add(1, Ordering::Relaxed);
            log.push((
                ticket,
                Move {
                    node: v,
                    from,
                    to,
                    gain,
                },
            ));
            self.moved.fetch_add(1, Ordering::Relaxed);
            if origin_weight + c > limit && origin_weight <= limit {
                self.overloaded.fetch_sub(1, Ordering::AcqRel);
            }
            self.update_neighbors_bulk(v);
            self.unlock_node(v);
        }
        log
    }

    pub fn stats(&self) -> RebalanceStats {
        RebalanceStats {
            passes: 1,
            inserted: self.inserted.load(Ordering::Relaxed),
            moved: self.moved.load(Ordering::Relaxed),
            skipped: self.skipped.load(Ordering::Relaxed),
            remaining: self.queue.len(),
        }
    }
}

/// Rebalances `state` in place.
///
/// Fails with [`Error::Infeasible`] if the blocks cannot be brought within
/// the limit; in that case every move made here is undone.
pub fn rebalance(
    graph: &Graph,
    state: &PartitionState,
    table: &GainTable,
    runtime: &Runtime,
    config: &RebalanceConfig,
) -> Result<RebalanceOutcome> {
    let k = state.k();
    let mut outcome = RebalanceOutcome::empty(k);
    if state.is_balanced() {
        return Ok(outcome);
    }
    let limit = state.max_block_weight();
    if graph.total_node_weight() > limit * k as Weight {
        return Err(Error::Infeasible(format!(
            "total weight {} exceeds k times the block limit = {}",
            graph.total_node_weight(),
            limit * k as Weight
        )));
    }
    let num_queues = if runtime.is_sequential() {
        1
    } else {
        config.queue_factor.max(1) * runtime.workers()
    };

    for pass in 0..config.max_passes.max(1) {
        if state.is_balanced() {
            break;
        }
        let ctx = RebalanceContext::new(graph, state, table, num_queues);
        let pass_seed = config.seed.wrapping_add(pass as u64 * 0x9E37_79B9);
        ctx.insert_candidates(runtime, pass_seed);
        let logs = Mutex::new(Vec::new());
        runtime.run_workers(|w| {
            let mut rng = worker_rng(pass_seed ^ 0x5bd1_e995, w);
            let log = ctx.move_nodes(&mut rng);
            logs.lock().extend(log);
        });
        let mut log = logs.into_inner();
        log.sort_unstable_by_key(|&(t, _)| t);
        let stats = ctx.stats();
        outcome.stats.passes += 1;
        outcome.stats.inserted += stats.inserted;
        outcome.stats.moved += stats.moved;
        outcome.stats.skipped += stats.skipped;
        outcome.stats.remaining += stats.remaining;
        let progressed = !log.is_empty();
        outcome.moves.extend(log.into_iter().map(|(_, m)| m));
        if !progressed {
            break;
        }
    }
    if !runtime.is_sequential() {
        state.resync_cut(graph);
    }

    if !state.is_balanced() {
        for mv in outcome.moves.iter().rev() {
            table.apply_move(graph, state, mv.node, mv.from);
        }
        if !runtime.is_sequential() {
            state.resync_cut(graph);
        }
        return Err(Error::Infeasible(format!(
            "could not rebalance: blocks {:?} still exceed {limit}",
            state.overloaded_blocks()
        )));
    }
    for mv in &outcome.moves {
        outcome.moves_by_origin[mv.from as usize].push(*mv);
    }
    Ok(outcome)
}
