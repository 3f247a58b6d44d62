//! Python module `upart`.

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use upart_core::fm::Variant;
use upart_core::pipeline::{self, PartitionConfig, Preset};
use upart_core::rebalance::{self, RebalanceConfig};
use upart_core::testkit::{self, HubClusterSpec};
use upart_core::{io, BlockId, Error, GainTable, NodeId, PartitionState, Runtime, Weight};

create_exception!(
    upart,
    InfeasibleError,
    PyValueError,
    "No balanced partition could be produced."
);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Infeasible(_) => InfeasibleError::new_err(err.to_string()),
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// Undirected graph with positive integer node and edge weights.
#[pyclass(name = "Graph", frozen, module = "upart")]
struct PyGraph {
    inner: upart_core::Graph,
}

#[pymethods]
impl PyGraph {
    /// `edges` holds `(u, v)` or `(u, v, weight)` tuples; parallel edges are
    /// merged and self-loops dropped.
    #[new]
    #[pyo3(signature = (n, edges, node_weights=None))]
    fn new(n: usize, edges: Vec<Bound<'_, PyAny>>, node_weights: Option<Vec<Weight>>) -> PyResult<Self> {
        let weights = node_weights.unwrap_or_else(|| vec![1; n]);
        if weights.len() != n {
            return Err(PyValueError::new_err(format!(
                "{} node weights for {n} nodes",
                weights.len()
            )));
        }
        let mut list = Vec::with_capacity(edges.len());
        for e in edges {
            let edge = match e.extract::<(NodeId, NodeId, Weight)>() {
                Ok(t) => t,
                Err(_) => {
                    let (u, v) = e.extract::<(NodeId, NodeId)>()?;
                    (u, v, 1)
                }
            };
            list.push(edge);
        }
        let inner = upart_core::Graph::from_edges(weights, list).map_err(to_py)?;
        Ok(PyGraph { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, symmetrize=false))]
    fn read_metis(path: &str, symmetrize: bool) -> PyResult<Self> {
        let symmetry = if symmetrize {
            io::Symmetry::Symmetrize
        } else {
            io::Symmetry::Strict
        };
        Ok(PyGraph {
            inner: io::read_metis(path, symmetry).map_err(to_py)?,
        })
    }

    fn write_metis(&self, path: &str) -> PyResult<()> {
        io::write_metis(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn total_node_weight(&self) -> Weight {
        self.inner.total_node_weight()
    }

    fn node_weights(&self) -> Vec<Weight> {
        self.inner.node_weights().to_vec()
    }

    fn edges(&self) -> Vec<(NodeId, NodeId, Weight)> {
        self.inner.edges().collect()
    }

    fn neighbors(&self, v: NodeId) -> PyResult<Vec<(NodeId, Weight)>> {
        if v as usize >= self.inner.n() {
            return Err(PyValueError::new_err(format!("node {v} out of range")));
        }
        Ok(self.inner.neighbors(v).collect())
    }

    fn degree_irregularity(&self) -> f64 {
        self.inner.degree_irregularity()
    }

    /// Total weight of edges between different blocks.
    fn cut(&self, blocks: Vec<BlockId>) -> PyResult<Weight> {
        check_blocks(&self.inner, &blocks, None)?;
        Ok(upart_core::cut_from_scratch(&self.inner, &blocks))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

fn check_blocks(graph: &upart_core::Graph, blocks: &[BlockId], k: Option<usize>) -> PyResult<()> {
    if blocks.len() != graph.n() {
        return Err(PyValueError::new_err(format!(
            "{} blocks for {} nodes",
            blocks.len(),
            graph.n()
        )));
    }
    if let Some(k) = k {
        if let Some(b) = blocks.iter().find(|&&b| b as usize >= k) {
            return Err(PyValueError::new_err(format!("block {b} out of range for k = {k}")));
        }
    }
    Ok(())
}

#[pyclass(name = "PartitionResult", frozen, get_all, module = "upart")]
struct PyPartitionResult {
    blocks: Vec<BlockId>,
    cut: Weight,
    imbalance: f64,
    balanced: bool,
    block_weights: Vec<Weight>,
    max_block_weight: Weight,
    levels: usize,
    seconds: f64,
}

#[pymethods]
impl PyPartitionResult {
    fn __repr__(&self) -> String {
        format!(
            "PartitionResult(cut={}, imbalance={:.4}, balanced={})",
            self.cut,
            self.imbalance,
            if self.balanced { "True" } else { "False" }
        )
    }
}

fn config(k: usize, epsilon: f64, seed: u64, preset: &str, variant: &str) -> PyResult<PartitionConfig> {
    let preset: Preset = preset.parse().map_err(to_py)?;
    let variant: Variant = variant.parse().map_err(to_py)?;
    Ok(PartitionConfig::with_preset(k, epsilon, preset)
        .variant(variant)
        .seed(seed))
}

/// Multilevel k-way partition of `graph`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (graph, k, epsilon=0.03, seed=0, workers=1, preset="unconstrained", variant="penalized"))]
fn partition(
    py: Python<'_>,
    graph: &PyGraph,
    k: usize,
    epsilon: f64,
    seed: u64,
    workers: usize,
    preset: &str,
    variant: &str,
) -> PyResult<PyPartitionResult> {
    let config = config(k, epsilon, seed, preset, variant)?;
    let g = &graph.inner;
    let r = py
        .detach(|| pipeline::partition(g, &config, &Runtime::new(workers)))
        .map_err(to_py)?;
    Ok(PyPartitionResult {
        blocks: r.blocks,
        cut: r.cut,
        imbalance: r.imbalance,
        balanced: r.balanced,
        block_weights: r.block_weights,
        max_block_weight: r.max_block_weight,
        levels: r.levels,
        seconds: r.timings.total.as_secs_f64(),
    })
}

/// Refines an existing partition on the input graph only; an imbalanced
/// input is rebalanced first. Returns `(blocks, cut)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (graph, blocks, k, epsilon=0.03, seed=0, workers=1, preset="unconstrained", variant="penalized"))]
fn refine(
    py: Python<'_>,
    graph: &PyGraph,
    blocks: Vec<BlockId>,
    k: usize,
    epsilon: f64,
    seed: u64,
    workers: usize,
    preset: &str,
    variant: &str,
) -> PyResult<(Vec<BlockId>, Weight)> {
    check_blocks(&graph.inner, &blocks, Some(k))?;
    let config = config(k, epsilon, seed, preset, variant)?;
    let g = &graph.inner;
    let (state, _) = py
        .detach(|| pipeline::refine_partition(g, blocks, &config, &Runtime::new(workers)))
        .map_err(to_py)?;
    Ok((state.blocks(), state.cut()))
}

/// Moves nodes out of overloaded blocks until every block fits.
/// Returns `(blocks, cut, moves)`.
#[pyfunction(name = "rebalance")]
#[pyo3(signature = (graph, blocks, k, epsilon=0.03, seed=0, workers=1))]
fn rebalance_py(
    py: Python<'_>,
    graph: &PyGraph,
    blocks: Vec<BlockId>,
    k: usize,
    epsilon: f64,
    seed: u64,
    workers: usize,
) -> PyResult<(Vec<BlockId>, Weight, usize)> {
    check_blocks(&graph.inner, &blocks, Some(k))?;
    let g = &graph.inner;
    py.detach(|| {
        let state = PartitionState::new(g, k, epsilon, blocks)?;
        let table = GainTable::build(g, &state);
        let out = rebalance::rebalance(
            g,
            &state,
            &table,
            &Runtime::new(workers),
            &RebalanceConfig {
                seed,
                ..Default::default()
            },
        )?;
        Ok((state.blocks(), state.cut(), out.moves.len()))
    })
    .map_err(to_py)
}

/// Exhaustive minimum cut over balanced assignments; small graphs only.
/// Returns `(cut, blocks)`.
#[pyfunction]
#[pyo3(signature = (graph, k, epsilon=0.03))]
fn best_cut(graph: &PyGraph, k: usize, epsilon: f64) -> PyResult<(Weight, Vec<BlockId>)> {
    let best = testkit::brute_force_best_cut(&graph.inner, k, epsilon).map_err(to_py)?;
    Ok((best.cut, best.blocks))
}

#[pyfunction]
#[pyo3(signature = (hubs, leaves_per_hub, seed=0, density=0.9))]
fn hub_cluster(hubs: usize, leaves_per_hub: usize, seed: u64, density: f64) -> PyGraph {
    let spec = HubClusterSpec {
        density,
        ..HubClusterSpec::new(hubs, leaves_per_hub)
    };
    PyGraph {
        inner: testkit::hub_cluster(&spec, seed),
    }
}

#[pyfunction]
#[pyo3(signature = (n, exponent=2.5, avg_degree=8.0, seed=0))]
fn power_law(n: usize, exponent: f64, avg_degree: f64, seed: u64) -> PyResult<PyGraph> {
    Ok(PyGraph {
        inner: testkit::power_law(n, exponent, avg_degree, seed).map_err(to_py)?,
    })
}

#[pyfunction]
fn grid(rows: usize, cols: usize) -> PyGraph {
    PyGraph {
        inner: testkit::grid(rows, cols),
    }
}

#[pyfunction]
#[pyo3(signature = (n, m, seed=0, connected=false))]
fn random_graph(n: usize, m: usize, seed: u64, connected: bool) -> PyResult<PyGraph> {
    Ok(PyGraph {
        inner: testkit::random(n, m, connected, seed).map_err(to_py)?,
    })
}

#[pymodule]
fn upart(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyPartitionResult>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(rebalance_py, m)?)?;
    m.add_function(wrap_pyfunction!(best_cut, m)?)?;
    m.add_function(wrap_pyfunction!(hub_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(power_law, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    m.add_function(wrap_pyfunction!(random_graph, m)?)?;
    Ok(())
}
