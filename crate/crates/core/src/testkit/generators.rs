//! Deterministic synthetic graphs.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{BlockId, Graph, NodeId, Weight};

/// A dense cluster of heavy hubs, each with its own unit-degree leaves.
/// Hubs are nodes `0..hubs`; the leaves of hub `i` follow in one run after
/// all hubs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubClusterSpec {
    pub hubs: usize,
    pub leaves_per_hub: usize,
    /// Probability of an edge between two hubs that are not consecutive.
    /// Consecutive hubs are always adjacent.
    pub density: f64,
    pub hub_weight: Weight,
    pub hub_edge_weight: Weight,
}

impl HubClusterSpec {
    pub fn new(hubs: usize, leaves_per_hub: usize) -> Self {
        HubClusterSpec {
            hubs,
            leaves_per_hub,
            density: 0.9,
            hub_weight: 30,
            hub_edge_weight: 10,
        }
    }

    pub fn hub_of_leaf(&self, leaf: NodeId) -> NodeId {
        ((leaf as usize - self.hubs) / self.leaves_per_hub) as NodeId
    }

    /// The first half of the hubs and their leaves in block 0, the rest in
    /// block 1.
    pub fn natural_split(&self) -> Vec<BlockId> {
        let half = self.hubs / 2;
        let n = self.hubs * (1 + self.leaves_per_hub);
        (0..n as NodeId)
            .map(|v| {
                let hub = if (v as usize) < self.hubs {
                    v
                } else {
                    self.hub_of_leaf(v)
                };
                ((hub as usize) >= half) as BlockId
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    HubCluster(HubClusterSpec),
    /// Chung-Lu graph with expected degrees following a power law.
    PowerLaw {
        n: usize,
        exponent: f64,
        avg_degree: f64,
    },
    Grid {
        rows: usize,
        cols: usize,
    },
    /// `m` distinct uniform edges; with `connected`, the first `n - 1` of
    /// them form a random spanning tree.
    Random {
        n: usize,
        m: usize,
        connected: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        GeneratorSpec { family, seed }
    }

    pub fn generate(&self) -> Result<Graph> {
        match self.family {
            Family::HubCluster(spec) => Ok(hub_cluster(&spec, self.seed)),
            Family::PowerLaw {
                n,
                exponent,
                avg_degree,
            } => power_law(n, exponent, avg_degree, self.seed),
            Family::Grid { rows, cols } => Ok(grid(rows, cols)),
            Family::Random { n, m, connected } => random(n, m, connected, self.seed),
        }
    }
}

pub fn hub_cluster(spec: &HubClusterSpec, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = spec.hubs;
    let n = h * (1 + spec.leaves_per_hub);
    let mut weights = vec![1; n];
    weights[..h].fill(spec.hub_weight);
    let mut edges = Vec::new();
    for a in 0..h {
        for b in a + 1..h {
            if b == a + 1 || rng.random_bool(spec.density.clamp(0.0, 1.0)) {
                edges.push((a as NodeId, b as NodeId, spec.hub_edge_weight));
            }
        }
    }
    for hub in 0..h {
        for j in 0..spec.leaves_per_hub {
            let leaf = h + hub * spec.leaves_per_hub + j;
            edges.push((hub as NodeId, leaf as NodeId, 1));
        }
    }
    Graph::from_edges(weights, edges).expect("generated edges are valid")
}

pub fn grid(rows: usize, cols: usize) -> Graph {
    let id = |r: usize, c: usize| (r * cols + c) as NodeId;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Graph::unit(rows * cols, edges).expect("generated edges are valid")
}

fn normalized(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    (u.min(v), u.max(v))
}

pub fn random(n: usize, m: usize, connected: bool, seed: u64) -> Result<Graph> {
    let max_edges = n * n.saturating_sub(1) / 2;
    if m > max_edges || (connected && n > 0 && m + 1 < n) {
        return Err(Error::InvalidArgument(format!("cannot place {m} edges on {n} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m);
    let mut seen = HashSet::with_capacity(m);
    if connected && n > 1 {
        let mut order: Vec<NodeId> = (0..n as NodeId).collect();
        order.shuffle(&mut rng);
        for i in 1..n {
            let parent = order[rng.random_range(0..i)];
            let e = normalized(order[i], parent);
            seen.insert(e);
            edges.push(e);
        }
    }
    while edges.len() < m {
        let u = rng.random_range(0..n as NodeId);
        let v = rng.random_range(0..n as NodeId);
        if u != v && seen.insert(normalized(u, v)) {
            edges.push(normalized(u, v));
        }
    }
    Graph::unit(n, edges)
}

/// Irregularity of power-law graphs must reach this value.
pub const MIN_POWER_LAW_IRREGULARITY: f64 = 1.21;

/// Chung-Lu graph whose expected degree of node `i` is proportional to
/// `(i + 1)^(-1 / (exponent - 1))`. Draws again with a derived seed while
/// the degree irregularity is below [`MIN_POWER_LAW_IRREGULARITY`].
pub fn power_law(n: usize, exponent: f64, avg_degree: f64, seed: u64) -> Result<Graph> {
    if n < 2 || exponent <= 1.0 || avg_degree <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "power law needs n >= 2, exponent > 1 and a positive degree (got {n}, {exponent}, {avg_degree})"
        )));
    }
    let mut last = None;
    for attempt in 0..8u64 {
        let g = chung_lu(
            n,
            exponent,
            avg_degree,
            seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        if g.degree_irregularity() > MIN_POWER_LAW_IRREGULARITY {
            return Ok(g);
        }
        last = Some(g);
    }
    Ok(last.expect("at least one attempt"))
}

fn chung_lu(n: usize, exponent: f64, avg_degree: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = 1.0 / (exponent - 1.0);
    let mut cumulative = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        total += ((i + 1) as f64).powf(-beta);
        cumulative.push(total);
    }
    let draw = |rng: &mut ChaCha8Rng| {
        let x = rng.random::<f64>() * total;
        cumulative.partition_point(|&c| c < x).min(n - 1) as NodeId
    };
    let target = ((n as f64 * avg_degree) / 2.0).round() as usize;
    let target = target.min(n * (n - 1) / 2);
    let mut seen = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    // duplicate draws are dropped, so cap the attempts
    for _ in 0..target.saturating_mul(4) {
        if edges.len() == target {
            break;
        }
        let (u, v) = (draw(&mut rng), draw(&mut rng));
        if u != v && seen.insert(normalized(u, v)) {
            edges.push(normalized(u, v));
        }
    }
    Graph::unit(n, edges).expect("generated edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hub_cluster_shape() {
        let spec = HubClusterSpec::new(2, 3);
        let g = hub_cluster(&spec, 1);
        assert_eq!(g.n(), 8);
        assert_eq!(g.edge_weight(0, 1), Some(10));
        assert_eq!(g.m(), 7);
        for leaf in 2..8 {
            assert_eq!(g.degree(leaf), 1);
            assert_eq!(g.edge_weight(leaf, spec.hub_of_leaf(leaf)), Some(1));
        }
        assert_eq!(spec.natural_split(), vec![0, 1, 0, 0, 0, 1, 1, 1]);
        g.validate().unwrap();
    }

    #[test]
    fn same_spec_same_graph() {
        let specs = [
            GeneratorSpec::new(
                Family::HubCluster(HubClusterSpec {
                    density: 0.5,
                    ..HubClusterSpec::new(10, 4)
                }),
                3,
            ),
            GeneratorSpec::new(
                Family::PowerLaw {
                    n: 500,
                    exponent: 2.5,
                    avg_degree: 6.0,
                },
                3,
            ),
            GeneratorSpec::new(
                Family::Random {
                    n: 100,
                    m: 300,
                    connected: true,
                },
                3,
            ),
        ];
        for spec in specs {
            let a = spec.generate().unwrap();
            let b = spec.generate().unwrap();
            assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
            a.validate().unwrap();
        }
    }

    #[test]
    fn grid_counts() {
        let g = grid(4, 4);
        assert_eq!(g.m(), 24);
        assert!(grid(30, 30).degree_irregularity() < 0.2);
    }

    #[test]
    fn power_law_is_irregular() {
        let g = power_law(10_000, 2.5, 8.0, 1).unwrap();
        assert!(
            g.degree_irregularity() > MIN_POWER_LAW_IRREGULARITY,
            "{}",
            g.degree_irregularity()
        );
        g.validate().unwrap();
    }

    #[test]
    fn random_connected() {
        let g = random(50, 60, true, 7).unwrap();
        assert_eq!(g.m(), 60);
        let mut seen = [false; 50];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for (u, _) in g.neighbors(v) {
                if !std::mem::replace(&mut seen[u as usize], true) {
                    stack.push(u);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert!(random(4, 7, false, 0).is_err());
    }
}
