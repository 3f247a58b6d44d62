//! Size-constrained label propagation clustering and contraction.

use std::sync::atomic::{AtomicI64, AtomicU32, Ordering};

use log::debug;

use crate::graph::{Graph, NodeId, Weight};
use crate::runtime::Runtime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseningConfig {
    /// Coarsening stops once the graph has at most `k` times this many nodes.
    pub nodes_per_block: usize,
    /// Coarsening stops when a level shrinks the node count by less than this
    /// factor.
    pub min_shrink: f64,
    pub clustering_rounds: usize,
    /// Cluster weight cap; `None` uses the maximum block weight.
    pub max_cluster_weight: Option<Weight>,
}

impl Default for CoarseningConfig {
    fn default() -> Self {
        CoarseningConfig {
            nodes_per_block: 160,
            min_shrink: 1.05,
            clustering_rounds: 5,
            max_cluster_weight: None,
        }
    }
}

/// One contraction step: the coarse graph and where every finer node went.
#[derive(Debug, Clone)]
pub struct Level {
    pub graph: Graph,
    pub mapping: Vec<NodeId>,
}

/// Successively coarser graphs. The finest graph is owned by the caller.
#[derive(Debug, Clone, Default)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
    pub contraction_limit: usize,
}

impl Hierarchy {
    /// Number of graphs including the finest.
    pub fn depth(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn coarsest<'a>(&'a self, finest: &'a Graph) -> &'a Graph {
        self.levels.last().map_or(finest, |l| &l.graph)
    }

    /// Graph at `depth` (0 is the finest).
    pub fn graph<'a>(&'a self, finest: &'a Graph, depth: usize) -> &'a Graph {
        if depth == 0 {
            finest
        } else {
            &self.levels[depth - 1].graph
        }
    }

    /// Maps a partition of the coarsest graph down to the finest one.
    pub fn project_to_finest(&self, coarse_blocks: &[u32]) -> Vec<u32> {
        let mut blocks = coarse_blocks.to_vec();
        for level in self.levels.iter().rev() {
            blocks = project(&level.mapping, &blocks);
        }
        blocks
    }
}

/// Block of every finer node from the block of its coarse node.
pub fn project(mapping: &[NodeId], coarse_blocks: &[u32]) -> Vec<u32> {
    mapping.iter().map(|&c| coarse_blocks[c as usize]).collect()
}

/// Label propagation clustering where no cluster grows beyond
/// `max_cluster_weight`. Every node joins the neighboring cluster it is most
/// strongly connected to; ties go to the lighter cluster, then the smaller
/// id. Returns a cluster id per node.
pub fn cluster(graph: &Graph, max_cluster_weight: Weight, rounds: usize, runtime: &Runtime) -> Vec<NodeId> {
    let n = graph.n();
    let clusters: Vec<AtomicU32> = (0..n as NodeId).map(AtomicU32::new).collect();
    let weights: Vec<AtomicI64> = graph.node_weights().iter().map(|&w| AtomicI64::new(w)).collect();
    for round in 0..rounds {
        let moved = AtomicI64::new(0);
        runtime.for_each_chunk(
            n,
            1024,
            || (vec![0 as Weight; n], Vec::<NodeId>::new()),
            |(rating, touched), range| {
                let mut local_moves = 0;
                for v in range {
                    let v = v as NodeId;
                    let own = clusters[v as usize].load(Ordering::Relaxed);
                    let c = graph.node_weight(v);
                    for (u, w) in graph.neighbors(v) {
                        let cu = clusters[u as usize].load(Ordering::Relaxed);
                        if rating[cu as usize] == 0 {
                            touched.push(cu);
                        }
                        rating[cu as usize] += w;
                    }
                    let own_rating = rating[own as usize];
                    let mut best: Option<(Weight, Weight, NodeId)> = None;
                    for &cu in touched.iter() {
                        if cu == own {
                            continue;
                        }
                        let r = rating[cu as usize];
                        let w = weights[cu as usize].load(Ordering::Relaxed);
                        if r <= own_rating || w + c > max_cluster_weight {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((br, bw, bid)) => r > br || (r == br && (w < bw || (w == bw && cu < bid))),
                        };
                        if better {
                            best = Some((r, w, cu));
                        }
                    }
                    for &cu in touched.iter() {
                        rating[cu as usize] = 0;
                    }
                    touched.clear();
                    let Some((_, _, target)) = best else {
                        continue;
                    };
                    let reserved = weights[target as usize]
                        .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |w| {
                            (w + c <= max_cluster_weight).then_some(w + c)
                        })
                        .is_ok();
                    if reserved {
                        weights[own as usize].fetch_sub(c, Ordering::Relaxed);
                        clusters[v as usize].store(target, Ordering::Relaxed);
                        local_moves += 1;
                    }
                }
                moved.fetch_add(local_moves, Ordering::Relaxed);
            },
        );
        let moved = moved.into_inner();
        debug!("clustering round {round}: {moved} moves");
        if moved == 0 {
            break;
        }
    }
    clusters.into_iter().map(AtomicU32::into_inner).collect()
}

/// Contracts every cluster into one node. Coarse ids follow the first
/// occurrence of each cluster in node order; edges inside a cluster vanish
/// and parallel edges are summed.
pub fn contract(graph: &Graph, clusters: &[NodeId]) -> Level {
    let n = graph.n();
    let mut id = vec![NodeId::MAX; n];
    let mut mapping = Vec::with_capacity(n);
    let mut weights = Vec::new();
    for v in graph.nodes() {
        let c = clusters[v as usize] as usize;
        if id[c] == NodeId::MAX {
            id[c] = weights.len() as NodeId;
            weights.push(0);
        }
        mapping.push(id[c]);
        weights[id[c] as usize] += graph.node_weight(v);
    }
    let mut arcs = Vec::with_capacity(graph.m() * 2);
    for v in graph.nodes() {
        let cv = mapping[v as usize];
        for (u, w) in graph.neighbors(v) {
            let cu = mapping[u as usize];
            if cu != cv {
                arcs.push((cv, cu, w));
            }
        }
    }
    Level {
        graph: Graph::from_arcs(weights, arcs),
        mapping,
    }
}

/// Builds the hierarchy down to `contraction_limit` nodes.
pub fn coarsen(
    graph: &Graph,
    contraction_limit: usize,
    max_cluster_weight: Weight,
    config: &CoarseningConfig,
    runtime: &Runtime,
) -> Hierarchy {
    let mut hierarchy = Hierarchy {
        levels: Vec::new(),
        contraction_limit,
    };
    loop {
        let current = hierarchy.coarsest(graph);
        if current.n() <= contraction_limit {
            break;
        }
        let clusters = cluster(current, max_cluster_weight, config.clustering_rounds, runtime);
        let level = contract(current, &clusters);
        let (fine, coarse) = (current.n(), level.graph.n());
        debug!("coarsening: {fine} -> {coarse} nodes");
        if coarse >= fine {
            break;
        }
        hierarchy.levels.push(level);
        if (fine as f64) < config.min_shrink * coarse as f64 {
            break;
        }
    }
    hierarchy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::cut_from_scratch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn heavy_edge_pair_collapses() {
        let g = Graph::from_edges(vec![2, 3], [(0, 1, 10)]).unwrap();
        let h = coarsen(&g, 1, 5, &CoarseningConfig::default(), &Runtime::sequential());
        assert_eq!(h.depth(), 2);
        let c = h.coarsest(&g);
        assert_eq!(c.n(), 1);
        assert_eq!(c.node_weights(), &[5]);
        assert_eq!(c.m(), 0);
    }

    #[test]
    fn small_graph_is_not_coarsened() {
        let g = Graph::unit(4, [(0, 1), (2, 3)]).unwrap();
        let h = coarsen(&g, 10, 100, &CoarseningConfig::default(), &Runtime::sequential());
        assert_eq!(h.depth(), 1);
    }

    #[test]
    fn cluster_weights_respect_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 300u32;
        let edges: Vec<_> = (0..1200)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .collect();
        let g = Graph::unit(n as usize, edges).unwrap();
        let clusters = cluster(&g, 7, 5, &Runtime::new(2));
        let mut weight = vec![0; n as usize];
        for &c in &clusters {
            weight[c as usize] += 1;
        }
        assert!(weight.iter().all(|&w| w <= 7));
        let level = contract(&g, &clusters);
        assert_eq!(level.graph.total_node_weight(), g.total_node_weight());
        level.graph.validate().unwrap();
    }

    #[test]
    fn projection_preserves_the_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 400u32;
        let edges: Vec<_> = (0..1600)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(1..5)))
            .collect();
        let g = Graph::from_edges(vec![1; n as usize], edges).unwrap();
        let h = coarsen(&g, 40, 20, &CoarseningConfig::default(), &Runtime::sequential());
        assert!(h.depth() > 1);
        for _ in 0..20 {
            let coarse = h.coarsest(&g);
            let blocks: Vec<u32> = (0..coarse.n()).map(|_| rng.random_range(0..3)).collect();
            let fine = h.project_to_finest(&blocks);
            assert_eq!(cut_from_scratch(&g, &fine), cut_from_scratch(coarse, &blocks));
        }
    }
}
