//! Exhaustive oracles for tiny instances.

use crate::error::{Error, Result};
use crate::graph::{BlockId, Graph, NodeId, Weight};
use crate::partition::{cut_from_scratch, BalanceLimit};

/// Largest search space the exhaustive oracles accept.
pub const MAX_ASSIGNMENTS: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BestCut {
    pub cut: Weight,
    /// Canonical labeling: blocks are numbered by first occurrence.
    pub blocks: Vec<BlockId>,
}

/// Relabels blocks in order of first occurrence.
pub fn canonicalize(blocks: &[BlockId]) -> Vec<BlockId> {
    let mut label = std::collections::HashMap::new();
    blocks
        .iter()
        .map(|&b| {
            let next = label.len() as BlockId;
            *label.entry(b).or_insert(next)
        })
        .collect()
}

struct Search<'a> {
    graph: &'a Graph,
    k: usize,
    max: Weight,
    blocks: Vec<BlockId>,
    weights: Vec<Weight>,
    best: Option<BestCut>,
}

impl Search<'_> {
    fn go(&mut self, v: usize, used: usize, cut: Weight) {
        if self.best.as_ref().is_some_and(|b| cut >= b.cut) {
            return;
        }
        if v == self.graph.n() {
            self.best = Some(BestCut {
                cut,
                blocks: self.blocks.clone(),
            });
            return;
        }
        let c = self.graph.node_weight(v as NodeId);
        // blocks beyond the first unused one are symmetric to it
        for b in 0..(used + 1).min(self.k) {
            if self.weights[b] + c > self.max {
                continue;
            }
            let added: Weight = self
                .graph
                .neighbors(v as NodeId)
                .filter(|&(u, _)| (u as usize) < v && self.blocks[u as usize] != b as BlockId)
                .map(|(_, w)| w)
                .sum();
            self.blocks[v] = b as BlockId;
            self.weights[b] += c;
            self.go(v + 1, used.max(b + 1), cut + added);
            self.weights[b] -= c;
        }
    }
}

/// Minimum cut over all balanced `k`-way assignments.
pub fn brute_force_best_cut(graph: &Graph, k: usize, epsilon: f64) -> Result<BestCut> {
    let limit = BalanceLimit::new(graph.total_node_weight(), k, epsilon)?;
    if (k as f64).powi(graph.n() as i32) > MAX_ASSIGNMENTS {
        return Err(Error::TooLarge(format!("{k}^{} assignments", graph.n())));
    }
    let mut search = Search {
        graph,
        k,
        max: limit.max_block_weight(),
        blocks: vec![0; graph.n()],
        weights: vec![0; k],
        best: None,
    };
    search.go(0, 0, 0);
    search
        .best
        .ok_or_else(|| Error::Infeasible(format!("no balanced {k}-way assignment exists")))
}

/// Smallest cut increase that balances `blocks` by moving nodes out of
/// overloaded blocks into blocks that were not overloaded.
pub fn brute_force_min_rebalance_cost(
    graph: &Graph,
    blocks: &[BlockId],
    k: usize,
    limit: BalanceLimit,
) -> Result<Weight> {
    let mut weights = vec![0 as Weight; k];
    for v in graph.nodes() {
        weights[blocks[v as usize] as usize] += graph.node_weight(v);
    }
    let max = limit.max_block_weight();
    let sources: Vec<NodeId> = graph
        .nodes()
        .filter(|&v| weights[blocks[v as usize] as usize] > max)
        .collect();
    let targets: Vec<BlockId> = (0..k as BlockId).filter(|&b| weights[b as usize] <= max).collect();
    let choices = targets.len() + 1;
    if (choices as f64).powi(sources.len() as i32) > MAX_ASSIGNMENTS {
        return Err(Error::TooLarge(format!("{choices}^{} move subsets", sources.len())));
    }
    let before = cut_from_scratch(graph, blocks);
    let mut current = blocks.to_vec();
    let mut digits = vec![0usize; sources.len()];
    let mut best: Option<Weight> = None;
    loop {
        let mut w = weights.clone();
        for (i, &v) in sources.iter().enumerate() {
            let b = if digits[i] == 0 {
                blocks[v as usize]
            } else {
                targets[digits[i] - 1]
            };
            w[blocks[v as usize] as usize] -= graph.node_weight(v);
            w[b as usize] += graph.node_weight(v);
            current[v as usize] = b;
        }
        if w.iter().all(|&x| x <= max) {
            let cost = cut_from_scratch(graph, &current) - before;
            best = Some(best.map_or(cost, |b| b.min(cost)));
        }
        // next digit vector
        let mut i = 0;
        loop {
            if i == digits.len() {
                return best.ok_or_else(|| Error::Infeasible("no balancing move subset exists".into()));
            }
            digits[i] += 1;
            if digits[i] < choices {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_clique_and_edgeless() {
        let p4 = Graph::unit(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let best = brute_force_best_cut(&p4, 2, 0.03).unwrap();
        assert_eq!(best.cut, 1);
        assert_eq!(best.blocks, vec![0, 0, 1, 1]);

        let k4 = Graph::unit(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(brute_force_best_cut(&k4, 2, 0.03).unwrap().cut, 4);

        let empty = Graph::unit(5, []).unwrap();
        assert_eq!(brute_force_best_cut(&empty, 3, 0.03).unwrap().cut, 0);
    }

    #[test]
    fn output_is_canonical() {
        let g = Graph::unit(6, [(0, 1), (2, 3), (4, 5), (1, 2)]).unwrap();
        let best = brute_force_best_cut(&g, 3, 0.0).unwrap();
        assert_eq!(best.blocks, canonicalize(&best.blocks));
        assert_eq!(best.cut, cut_from_scratch(&g, &best.blocks));
    }

    #[test]
    fn too_large_and_infeasible() {
        let g = Graph::unit(30, []).unwrap();
        assert!(matches!(brute_force_best_cut(&g, 2, 0.03), Err(Error::TooLarge(_))));
        let heavy = Graph::from_edges(vec![5, 1], []).unwrap();
        assert!(matches!(
            brute_force_best_cut(&heavy, 2, 0.03),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn star_rebalance_minimum() {
        let g = Graph::unit(11, (1..11).map(|l| (0, l))).unwrap();
        let limit = BalanceLimit::new(11, 2, 0.03).unwrap();
        assert_eq!(brute_force_min_rebalance_cost(&g, &[0; 11], 2, limit).unwrap(), 5);
        let balanced: Vec<BlockId> = (0..11).map(|v| (v > 5) as BlockId).collect();
        assert_eq!(brute_force_min_rebalance_cost(&g, &balanced, 2, limit).unwrap(), 0);
    }

    #[test]
    fn canonical_relabeling() {
        assert_eq!(canonicalize(&[2, 2, 0, 1, 0]), vec![0, 0, 1, 2, 1]);
    }
}
