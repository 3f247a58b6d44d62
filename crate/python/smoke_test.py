"""Smoke test for the `upart` extension module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/upart-*.whl

Then run `python python/smoke_test.py` or `pytest python/smoke_test.py`.
"""

import os
import tempfile

import upart


def test_path_of_four():
    g = upart.Graph(4, [(0, 1), (1, 2), (2, 3)])
    r = upart.partition(g, 2, epsilon=0.0)
    assert r.cut == 1 and r.balanced
    assert r.blocks[0] == r.blocks[1] != r.blocks[2] == r.blocks[3]
    assert g.cut(r.blocks) == 1


def test_weighted_edges_and_metis_round_trip():
    g = upart.Graph(3, [(0, 1, 5), (1, 2)], node_weights=[2, 1, 1])
    assert g.m == 2 and g.total_node_weight == 4
    assert sorted(g.neighbors(1)) == [(0, 5), (2, 1)]
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "g.graph")
        g.write_metis(path)
        h = upart.Graph.read_metis(path)
    assert h.edges() == g.edges() and h.node_weights() == g.node_weights()


def test_presets_are_deterministic_and_balanced():
    g = upart.power_law(3000, seed=2)
    for preset in ("unconstrained", "constrained"):
        a = upart.partition(g, 4, seed=7, preset=preset)
        b = upart.partition(g, 4, seed=7, preset=preset)
        assert a.balanced and a.blocks == b.blocks
        assert a.cut == g.cut(a.blocks)
        assert max(a.block_weights) <= a.max_block_weight


def test_rebalance_and_refine():
    g = upart.grid(20, 20)
    blocks = [0] * g.n
    balanced, cut, moves = upart.rebalance(g, blocks, 2)
    assert moves > 0 and cut == g.cut(balanced)
    assert max(balanced.count(0), balanced.count(1)) <= 206
    refined, refined_cut = upart.refine(g, balanced, 2)
    assert refined_cut <= cut and refined_cut == g.cut(refined)


def test_small_graph_matches_exhaustive_search():
    g = upart.random_graph(10, 18, seed=3, connected=True)
    best, _ = upart.best_cut(g, 2)
    assert upart.partition(g, 2).cut >= best


def test_hub_cluster_refinement_gap():
    g = upart.hub_cluster(20, 50, seed=1)
    start = [0 if v < 10 or (v >= 20 and (v - 20) // 50 < 10) else 1 for v in range(g.n)]
    _, free = upart.refine(g, start, 2, seed=1)
    _, strict = upart.refine(g, start, 2, seed=1, preset="constrained")
    assert free < strict


def test_errors():
    heavy = upart.Graph(3, [(0, 1)], node_weights=[10, 1, 1])
    try:
        upart.partition(heavy, 2)
    except upart.InfeasibleError:
        pass
    else:
        raise AssertionError("expected InfeasibleError")
    for bad in (lambda: upart.partition(heavy, 2, preset="fast"), lambda: heavy.cut([0, 1])):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")


if __name__ == "__main__":
    tests = [f for name, f in sorted(globals().items()) if name.startswith("test_")]
    for t in tests:
        t()
        print("ok", t.__name__)
    print(f"{len(tests)} passed")
