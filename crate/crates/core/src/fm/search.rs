//! Localized FM searches.
//!
//! Each worker repeatedly claims a few boundary nodes as seeds and grows a
//! search around them, taking exclusive ownership of every node it touches.
//! Moves are first made in a private view layered over the shared partition
//! and gain table. As soon as the penalized cumulative gain of the private
//! moves is positive they are published to the shared state; the published
//! moves of all searches, in publication order, form the round's sequence.

use std::cmp::{Ordering as CmpOrdering, Reverse};
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};

use parking_lot::Mutex;

use super::penalty::{penalized_key, PenaltyBuckets, Tau, KEY_SCALE};
use crate::gain_table::GainTable;
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::{Move, PartitionState};
use crate::runtime::Runtime;

const FREE: u32 = u32::MAX;
const NO_BLOCK: BlockId = BlockId::MAX;

/// How moves that push a block above the limit are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MovePolicy {
    /// Overloading moves pay `tau` times their estimated penalty.
    Penalized(Tau),
    /// Block weights are ignored.
    Unlimited,
    /// Moves may not push a block above the given weight. Publications that
    /// would do so are rejected.
    Capped(Weight),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub seeds_per_search: usize,
    /// A search ends after this many moves without publishing.
    pub max_moves_without_improvement: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seeds_per_search: 25,
            max_moves_without_improvement: 350,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub searches: usize,
    pub local_moves: usize,
    pub published_moves: usize,
    pub publications: usize,
    pub rejected_publications: usize,
}

impl SearchStats {
    fn add(&mut self, other: &SearchStats) {
        self.searches += other.searches;
        self.local_moves += other.local_moves;
        self.published_moves += other.published_moves;
        self.publications += other.publications;
        self.rejected_publications += other.rejected_publications;
    }
}

/// State shared by all searches of one round.
pub struct SearchContext<'a> {
    graph: &'a Graph,
    state: &'a PartitionState,
    table: &'a GainTable,
    buckets: &'a PenaltyBuckets,
    policy: MovePolicy,
    config: SearchConfig,
    owner: Vec<AtomicU32>,
    published_flag: Vec<AtomicBool>,
    seeds: Vec<NodeId>,
    next_seed: AtomicUsize,
    next_search: AtomicU32,
    published: Mutex<Vec<Move>>,
}

impl<'a> SearchContext<'a> {
    pub fn new(
        graph: &'a Graph,
        state: &'a PartitionState,
        table: &'a GainTable,
        buckets: &'a PenaltyBuckets,
        policy: MovePolicy,
        config: SearchConfig,
        seeds: Vec<NodeId>,
    ) -> Self {
        let n = graph.n();
        SearchContext {
            graph,
            state,
            table,
            buckets,
            policy,
            config,
            owner: (0..n).map(|_| AtomicU32::new(FREE)).collect(),
            published_flag: (0..n).map(|_| AtomicBool::new(false)).collect(),
            seeds,
            next_seed: AtomicUsize::new(0),
            next_search: AtomicU32::new(0),
            published: Mutex::new(Vec::new()),
        }
    }

    fn try_claim(&self, v: NodeId, search: u32) -> bool {
        self.owner[v as usize]
            .compare_exchange(FREE, search, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok()
    }

    fn release(&self, v: NodeId) {
        self.owner[v as usize].store(FREE, Ordering::Release);
    }

    fn owner_of(&self, v: NodeId) -> u32 {
        self.owner[v as usize].load(Ordering::Acquire)
    }

    /// Runs searches on every worker until the seeds are exhausted and
    /// returns the published moves in publication order.
    pub fn run(self, runtime: &Runtime) -> (Vec<Move>, SearchStats) {
        let stats = Mutex::new(SearchStats::default());
        runtime.run_workers(|_| {
            let mut worker = Worker::new(self.graph.n(), self.state.k());
            worker.run(&self);
            stats.lock().add(&worker.stats);
        });
        (self.published.into_inner(), stats.into_inner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    key: i128,
    node: NodeId,
    target: BlockId,
    stamp: u32,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        self.key
            .cmp(&other.key)
            .then(Reverse(self.node).cmp(&Reverse(other.node)))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct LocalMove {
    mv: Move,
    candidate_left: bool,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    key: i128,
    target: BlockId,
    gain: Weight,
}

/// Per-worker scratch space reused across searches.
struct Worker {
    k: usize,
    block: Vec<BlockId>,
    touched: Vec<NodeId>,
    /// Private changes to the gain table rows, indexed like the table.
    delta: Vec<Weight>,
    delta_touched: Vec<usize>,
    weight_delta: Vec<Weight>,
    stamp: Vec<u32>,
    moved: Vec<bool>,
    claimed: Vec<NodeId>,
    heap: BinaryHeap<Entry>,
    local: Vec<LocalMove>,
    stats: SearchStats,
}

impl Worker {
    fn new(n: usize, k: usize) -> Self {
        Worker {
            k,
            block: vec![NO_BLOCK; n],
            touched: Vec::new(),
            delta: vec![0; n * k],
            delta_touched: Vec::new(),
            weight_delta: vec![0; k],
            stamp: vec![0; n],
            moved: vec![false; n],
            claimed: Vec::new(),
            heap: BinaryHeap::new(),
            local: Vec::new(),
            stats: SearchStats::default(),
        }
    }

    fn run(&mut self, ctx: &SearchContext) {
        loop {
            let id = ctx.next_search.fetch_add(1, Ordering::Relaxed);
            let mut seeds = Vec::with_capacity(ctx.config.seeds_per_search);
            while seeds.len() < ctx.config.seeds_per_search {
                let i = ctx.next_seed.fetch_add(1, Ordering::Relaxed);
                let Some(&v) = ctx.seeds.get(i) else {
                    break;
                };
                if ctx.try_claim(v, id) {
                    seeds.push(v);
                }
            }
            if seeds.is_empty() {
                return;
            }
            self.search(ctx, id, &seeds);
        }
    }

    fn local_block(&self, ctx: &SearchContext, v: NodeId) -> BlockId {
        match self.block[v as usize] {
            NO_BLOCK => ctx.state.block(v),
            b => b,
        }
    }

    fn weight_to(&self, ctx: &SearchContext, v: NodeId, b: BlockId) -> Weight {
        ctx.table.weight_to(v, b) + self.delta[v as usize * self.k + b as usize]
    }

    fn block_weight(&self, ctx: &SearchContext, b: BlockId) -> Weight {
        ctx.state.block_weight(b) + self.weight_delta[b as usize]
    }

    /// Best move of `v` in the private view.
    fn evaluate(&self, ctx: &SearchContext, v: NodeId) -> Option<Candidate> {
        let from = self.local_block(ctx, v);
        let internal = self.weight_to(ctx, v, from);
        let c = ctx.graph.node_weight(v);
        let limit = ctx.state.max_block_weight();
        let mut best: Option<(Candidate, Weight)> = None;
        for b in 0..self.k as BlockId {
            if b == from {
                continue;
            }
            let to = self.weight_to(ctx, v, b);
            if to <= 0 {
                continue;
            }
            let gain = to - internal;
            let bw = self.block_weight(ctx, b);
            let key = match ctx.policy {
                MovePolicy::Unlimited => gain as i128 * KEY_SCALE,
                MovePolicy::Capped(cap) => {
                    if bw + c > cap {
                        continue;
                    }
                    gain as i128 * KEY_SCALE
                }
                MovePolicy::Penalized(tau) => {
                    let penalty = ctx.buckets.estimate(c, b, bw, limit);
                    match penalized_key(gain, penalty, tau) {
                        Some(key) => key,
                        None => continue,
                    }
                }
            };
            let better = match best {
                None => true,
                Some((cand, w)) => key > cand.key || (key == cand.key && bw < w),
            };
            if better {
                best = Some((Candidate { key, target: b, gain }, bw));
            }
        }
        best.map(|(cand, _)| cand)
    }

    fn push(&mut self, ctx: &SearchContext, v: NodeId) {
        self.stamp[v as usize] = self.stamp[v as usize].wrapping_add(1);
        if let Some(c) = self.evaluate(ctx, v) {
            self.heap.push(Entry {
                key: c.key,
                node: v,
                target: c.target,
                stamp: self.stamp[v as usize],
            });
        }
    }

    fn move_locally(&mut self, ctx: &SearchContext, v: NodeId, to: BlockId, gain: Weight) -> LocalMove {
        let from = self.local_block(ctx, v);
        for (u, w) in ctx.graph.neighbors(v) {
            let base = u as usize * self.k;
            self.delta[base + from as usize] -= w;
            self.delta[base + to as usize] += w;
            self.delta_touched.push(base);
        }
        let c = ctx.graph.node_weight(v);
        self.weight_delta[from as usize] -= c;
        self.weight_delta[to as usize] += c;
        if self.block[v as usize] == NO_BLOCK {
            self.touched.push(v);
        }
        self.block[v as usize] = to;
        self.moved[v as usize] = true;
        let candidate_left = ctx.buckets.is_candidate(v) && ctx.buckets.origin(v) == from;
        if candidate_left {
            ctx.buckets.on_candidate_left(from, c);
        }
        LocalMove {
            mv: Move {
                node: v,
                from,
                to,
                gain,
            },
            candidate_left,
        }
    }

    fn clear_view(&mut self) {
        for &v in &self.touched {
            self.block[v as usize] = NO_BLOCK;
        }
        self.touched.clear();
        for &base in &self.delta_touched {
            self.delta[base..base + self.k].fill(0);
        }
        self.delta_touched.clear();
        self.weight_delta.iter_mut().for_each(|w| *w = 0);
        self.local.clear();
    }

    /// Publishes the private moves. Returns false if a capped policy rejects
    /// them, in which case nothing is published.
    fn publish(&mut self, ctx: &SearchContext) -> bool {
        let mut log = ctx.published.lock();
        if let MovePolicy::Capped(cap) = ctx.policy {
            let over = (0..self.k as BlockId).any(|b| {
                self.weight_delta[b as usize] > 0 && ctx.state.block_weight(b) + self.weight_delta[b as usize] > cap
            });
            if over {
                self.stats.rejected_publications += 1;
                return false;
            }
        }
        for lm in &self.local {
            let m = lm.mv;
            let gain = ctx.table.apply_move(ctx.graph, ctx.state, m.node, m.to);
            ctx.published_flag[m.node as usize].store(true, Ordering::Relaxed);
            log.push(Move { gain, ..m });
        }
        drop(log);
        self.stats.publications += 1;
        self.stats.published_moves += self.local.len();
        self.clear_view();
        true
    }

    fn discard(&mut self, ctx: &SearchContext) {
        for lm in &self.local {
            if lm.candidate_left {
                ctx.buckets
                    .on_candidate_returned(lm.mv.from, ctx.graph.node_weight(lm.mv.node));
            }
        }
        self.clear_view();
    }

    fn search(&mut self, ctx: &SearchContext, id: u32, seeds: &[NodeId]) {
        self.stats.searches += 1;
        self.claimed.extend_from_slice(seeds);
        for &v in seeds {
            self.push(ctx, v);
        }
        let mut score: i128 = 0;
        let mut since_publish = 0usize;
        while let Some(entry) = self.heap.pop() {
            let v = entry.node;
            if self.moved[v as usize] || entry.stamp != self.stamp[v as usize] {
                continue;
            }
            let Some(cand) = self.evaluate(ctx, v) else {
                continue;
            };
            if cand.key != entry.key || cand.target != entry.target {
                self.stamp[v as usize] = self.stamp[v as usize].wrapping_add(1);
                self.heap.push(Entry {
                    key: cand.key,
                    node: v,
                    target: cand.target,
                    stamp: self.stamp[v as usize],
                });
                continue;
            }
            let lm = self.move_locally(ctx, v, cand.target, cand.gain);
            self.local.push(lm);
            self.stats.local_moves += 1;
            score += cand.key;
            if score > 0 {
                if !self.publish(ctx) {
                    break;
                }
                score = 0;
                since_publish = 0;
            } else {
                since_publish += 1;
                if since_publish >= ctx.config.max_moves_without_improvement {
                    break;
                }
            }
            for (u, _) in ctx.graph.neighbors(v) {
                if self.moved[u as usize] {
                    continue;
                }
                let owner = ctx.owner_of(u);
                if owner == id {
                    self.push(ctx, u);
                } else if owner == FREE && ctx.try_claim(u, id) {
                    self.claimed.push(u);
                    self.push(ctx, u);
                }
            }
        }
        self.discard(ctx);
        self.heap.clear();
        for &v in &self.claimed {
            self.moved[v as usize] = false;
            if !ctx.published_flag[v as usize].load(Ordering::Relaxed) {
                ctx.release(v);
            }
        }
        self.claimed.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm::penalty::Penalty;

    fn run_single(
        g: &Graph,
        s: &PartitionState,
        t: &GainTable,
        b: &PenaltyBuckets,
        policy: MovePolicy,
    ) -> (Vec<Move>, SearchStats) {
        let seeds = g.nodes().filter(|&v| t.is_boundary(g, s, v)).collect();
        SearchContext::new(g, s, t, b, policy, SearchConfig::default(), seeds).run(&Runtime::sequential())
    }

    #[test]
    fn no_boundary_no_moves() {
        let g = Graph::unit(3, [(0, 1), (1, 2)]).unwrap();
        let s = PartitionState::new(&g, 2, 0.03, vec![0, 0, 0]).unwrap();
        let t = GainTable::build(&g, &s);
        let b = PenaltyBuckets::new(&g, &s, &t, 0.7);
        let (moves, stats) = run_single(&g, &s, &t, &b, MovePolicy::Penalized(Tau::new(1.0)));
        assert!(moves.is_empty());
        assert_eq!(stats.searches, 0);
    }

    /// Node 0 sits in block 0 with five edges into block 1, which is full.
    /// Those five leaves are tied to hub 1 by heavy edges, so they are
    /// expensive to move. Nodes 7 and 8 form a cheap pair in block 1.
    fn overloading_instance() -> (Graph, PartitionState) {
        let mut edges = vec![(7, 8, 1), (9, 10, 1), (0, 9, 1)];
        for l in 2..=6 {
            edges.push((0, l, 1));
            edges.push((1, l, 10));
        }
        let g = Graph::from_edges(vec![1; 11], edges).unwrap();
        let blocks = vec![0, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0];
        // total 11, k = 2, eps 0.4: limit = 1.4 * 6 = 8.4, so 8 is the limit
        let s = PartitionState::new(&g, 2, 0.4, blocks).unwrap();
        (g, s)
    }

    #[test]
    fn penalized_move_published_when_gain_exceeds_penalty() {
        let (g, s) = overloading_instance();
        assert_eq!(s.block_weight(1), 8);
        let t = GainTable::build(&g, &s);
        let b = PenaltyBuckets::new(&g, &s, &t, 0.7);
        // gain of node 0 is 5 - 1 = 4; the overload of 1 is covered by slot 0
        // (nodes 7 and 8), so the penalty is 1
        assert_eq!(b.bucket_weight(1, 0), 2);
        assert_eq!(
            b.estimate(1, 1, 8, 8),
            Penalty::Slot {
                slot: 0,
                node_weight: 1
            }
        );
        let (moves, _) = run_single(&g, &s, &t, &b, MovePolicy::Penalized(Tau::new(1.0)));
        assert_eq!(
            moves[0],
            Move {
                node: 0,
                from: 0,
                to: 1,
                gain: 4
            }
        );
        assert!(s.block_weight(1) > s.max_block_weight());
    }

    #[test]
    fn capped_policy_keeps_every_publication_balanced() {
        let (g, s) = overloading_instance();
        let before = s.clone();
        let t = GainTable::build(&g, &s);
        let b = PenaltyBuckets::from_buckets(2, &[]);
        let (moves, stats) = run_single(&g, &s, &t, &b, MovePolicy::Capped(s.max_block_weight()));
        assert!(moves.is_empty(), "{moves:?}");
        assert!(stats.local_moves > 0);
        assert_eq!(s, before);
    }

    #[test]
    fn forbidden_without_candidates() {
        let (g, s) = overloading_instance();
        let before = s.clone();
        let t = GainTable::build(&g, &s);
        let b = PenaltyBuckets::from_buckets(2, &[]);
        let (moves, stats) = run_single(&g, &s, &t, &b, MovePolicy::Penalized(Tau::new(1.0)));
        assert!(moves.is_empty(), "{moves:?}");
        assert!(stats.searches > 0);
        assert_eq!(s, before);
    }

    #[test]
    fn discarded_candidate_departures_are_returned() {
        let (g, s) = overloading_instance();
        let t = GainTable::build(&g, &s);
        let b = PenaltyBuckets::new(&g, &s, &t, 0.7);
        assert!(b.is_candidate(2));
        let (moves, stats) = run_single(&g, &s, &t, &b, MovePolicy::Penalized(Tau::new(1000.0)));
        assert!(moves.is_empty(), "{moves:?}");
        assert!(stats.local_moves > 0);
        assert_eq!(b.virtual_delta(0), 0);
        assert_eq!(b.virtual_delta(1), 0);
    }

    #[test]
    fn each_node_published_at_most_once() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 120u32;
        let edges: Vec<_> = (0..500)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .collect();
        let g = Graph::unit(n as usize, edges).unwrap();
        let blocks = (0..n).map(|_| rng.random_range(0..4)).collect();
        let s = PartitionState::new(&g, 4, 0.03, blocks).unwrap();
        let t = GainTable::build(&g, &s);
        let b = PenaltyBuckets::new(&g, &s, &t, 0.4);
        let seeds = g.nodes().filter(|&v| t.is_boundary(&g, &s, v)).collect();
        let ctx = SearchContext::new(&g, &s, &t, &b, MovePolicy::Unlimited, SearchConfig::default(), seeds);
        let (moves, stats) = ctx.run(&Runtime::new(3));
        let mut nodes: Vec<_> = moves.iter().map(|m| m.node).collect();
        nodes.sort_unstable();
        let len = nodes.len();
        nodes.dedup();
        assert_eq!(nodes.len(), len);
        assert_eq!(stats.published_moves, len);
        s.resync_cut(&g);
        t.check_against(&g, &s).unwrap();
    }
}
