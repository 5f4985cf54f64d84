from __future__ import annotations

import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from sklearn.cluster import HDBSCAN
from sklearn.cluster._hdbscan._tree import HIERARCHY_dtype, tree_to_labels

from levelscope._geometry import pairwise_distances, prim_mst
from levelscope.clustering import (
    NOISE,
    MultiplexGraph,
    Partition,
    bootstrap_stability,
    build_layer,
    grid_cells,
    hdbscan,
    hdbscan_grid_search,
    leiden,
    leiden_labels,
    modularity,
    multiplex_leiden,
    rescale_weights,
    tune_resolution,
)
from levelscope.clustering.hdbscan import condense_tree, core_distances, hdbscan_labels, label_points, mutual_reachability, select_clusters, single_linkage
from levelscope.evaluation.metrics import ari
from levelscope.ownership import WeightedGraph, knn_graph
from oracles import cosine
from synthetic import clique_ring, planted_graph


def _mixture(seed):
    r = np.random.default_rng(seed)
    parts = [r.normal(r.uniform(-10, 10, 2), r.uniform(0.3, 2), (int(r.integers(15, 40)), 2)) for _ in range(int(r.integers(2, 5)))]
    return np.vstack(parts + [r.uniform(-12, 12, (10, 2))]), r


def _same_partition(a, b) -> bool:
    return ari(a, b) == 1.0 and np.array_equal(np.asarray(a) == NOISE, np.asarray(b) == NOISE)


@pytest.mark.parametrize("seed", range(20))
def test_hdbscan_matches_sklearn_without_ties(seed):
    # min_samples=1 makes mutual reachability equal the raw distance, so the MST is unique
    x, r = _mixture(seed)
    mcs = int(r.integers(4, 12))
    ref = HDBSCAN(min_cluster_size=mcs, min_samples=1, algorithm="brute").fit(x).labels_
    assert _same_partition(hdbscan_labels(x, mcs, 1), ref)


@pytest.mark.parametrize("seed", range(20))
def test_condensed_tree_selection_matches_sklearn(seed):
    x, r = _mixture(seed)
    mcs = int(r.integers(4, 12))
    ms = int(r.integers(1, mcs + 1))
    d = pairwise_distances(x)
    mr = mutual_reachability(d, core_distances(d, ms))
    eu, ev, ew = prim_mst(mr)
    assert ew.sum() == pytest.approx(minimum_spanning_tree(mr).sum(), rel=1e-12)
    link = single_linkage(len(x), eu, ev, ew)
    ref = tree_to_labels(np.array([tuple(row) for row in link], dtype=HIERARCHY_dtype), mcs, "eom", False, 0.0, None)[0]
    tree = condense_tree(link, mcs)
    assert _same_partition(label_points(tree, select_clusters(tree)), ref)


def test_core_distance_counts_the_point_itself():
    d = pairwise_distances(np.array([[0.0], [1.0], [3.0]]))
    assert core_distances(d, 1).tolist() == [0.0, 0.0, 0.0]
    assert core_distances(d, 2).tolist() == [1.0, 1.0, 2.0]


def test_two_blobs_and_scatter():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(0, 0.3, (30, 2)), rng.normal(20, 0.3, (30, 2))])
    labels = hdbscan_labels(x, 10, 10)
    assert len(set(labels.tolist())) == 2 and (labels != NOISE).all()
    # scatter far from both blobs relative to their separation
    x = np.vstack([rng.normal(0, 0.3, (30, 2)), rng.normal(3, 0.3, (30, 2))])
    scatter = rng.uniform(-10, 13, (20, 2))
    labels = hdbscan_labels(np.vstack([x, scatter]), 10, 10)
    ref = HDBSCAN(min_cluster_size=10, min_samples=10).fit(np.vstack([x, scatter])).labels_
    assert _same_partition(labels, ref)
    assert (labels[60:] == NOISE).mean() >= 0.8


def test_identical_points_single_cluster():
    labels = hdbscan_labels(np.ones((12, 3)), 5, 3)
    assert (labels == 0).all()
    p = hdbscan(np.ones((12, 3)), 5, 3)
    assert p.n_clusters == 1 and p.quality.coverage == 1.0


def test_hdbscan_preconditions():
    with pytest.raises(ValueError):
        hdbscan_labels(np.zeros((5, 2)), 1)
    assert (hdbscan_labels(np.random.default_rng(0).normal(size=(3, 2)), 5) == NOISE).all()


def test_grid_cells_size():
    assert len(grid_cells(3000, dedup=False)) == 16
    assert grid_cells(3000)[:2] == [(10, 3), (10, 5)]
    cells = grid_cells(30)
    assert all(mcs >= 2 and 1 <= ms <= mcs for mcs, ms in cells)
    assert len(cells) == len(set(cells))


def test_grid_degenerate_single_blob():
    g = hdbscan_grid_search(np.ones((40, 2)))
    assert g.degenerate
    assert all(r["silhouette"] == -1.0 for r in g.report)
    assert g.best_params["min_cluster_size"] == min(r["min_cluster_size"] for r in g.report)
    assert g.partition.quality.silhouette is None


@pytest.mark.xfail(strict=True, reason="spurious density clusters on uniform data are partly reproducible "
                   "under resampling; see the decisions ledger")
def test_bootstrap_pure_noise_is_unstable():
    means = []
    for seed in range(3):
        x = np.random.default_rng(seed).uniform(size=(200, 2))
        grid = hdbscan_grid_search(x)
        means.append(bootstrap_stability(x, grid.best_params, iterations=30, seed=seed).mean)
    assert max(means) <= 0.1


def test_bootstrap_all_noise_iteration_scores_zero():
    x = np.random.default_rng(0).uniform(size=(40, 10))
    summary = bootstrap_stability(x, {"min_cluster_size": 30, "min_samples": 15}, iterations=5, seed=0)
    assert summary.values == [0.0] * 5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_ari_invariant_under_cluster_relabeling(seed):
    x, r = _mixture(seed % 1000)
    labels = hdbscan_labels(x, 6, 3)
    ref = r.integers(0, 3, len(x))
    ids = sorted(set(labels.tolist()) - {NOISE})
    perm = dict(zip(ids, r.permutation(len(ids)) + 100))
    relabeled = np.array([perm.get(v, NOISE) for v in labels])
    assert ari(relabeled, ref) == pytest.approx(ari(labels, ref), abs=1e-12)


# -- Leiden -----------------------------------------------------------------

def two_cliques():
    edges = [(i, j, 1.0) for i in range(5) for j in range(i + 1, 5)]
    edges += [(i + 5, j + 5, 1.0) for i in range(5) for j in range(i + 1, 5)]
    edges.append((4, 5, 1.0))
    return WeightedGraph.from_edges([f"n{i}" for i in range(10)], edges)


def test_two_cliques_is_brute_force_optimum():
    g = two_cliques()
    labels = leiden_labels(g)
    assert labels.tolist() == [0] * 5 + [1] * 5
    best = max(
        modularity(g, [int(b) for b in bits])
        for bits in itertools.product((0, 1), repeat=10)
    )
    assert modularity(g, labels) == pytest.approx(best, abs=1e-12)


def test_modularity_matches_networkx():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = 15
        edges = [(i, j, float(rng.uniform(0.1, 2))) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3]
        g = WeightedGraph.from_edges([str(i) for i in range(n)], edges)
        labels = rng.integers(0, 4, n)
        G = nx.Graph()
        G.add_nodes_from(range(n))
        G.add_weighted_edges_from(edges)
        comms = [set(np.nonzero(labels == c)[0].tolist()) for c in range(4) if (labels == c).any()]
        for gamma in (0.5, 1.0, 2.0):
            assert modularity(g, labels, gamma) == pytest.approx(nx.community.modularity(G, comms, resolution=gamma), abs=1e-12)


def test_edgeless_graph_singletons():
    g = WeightedGraph([f"n{i}" for i in range(6)])
    assert leiden_labels(g).tolist() == list(range(6))
    p = leiden(g)
    assert p.n_clusters == 6


def test_ring_of_cliques():
    g, truth = clique_ring(4, 5)
    labels = leiden_labels(g)
    assert ari(labels, truth) == 1.0
    assert modularity(g, labels) > 0.6


def test_tune_resolution_examples():
    ring, truth = clique_ring(4, 12)
    res = tune_resolution(ring, min_community_size=10)
    assert res.target_met and res.resolution == 0.5
    assert ari(res.partition.labels, truth) == 1.0

    rng = np.random.default_rng(0)
    n = 60
    er = WeightedGraph.from_edges([str(i) for i in range(n)],
                                  [(i, j, 1.0) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.2])
    res = tune_resolution(er)
    assert not res.target_met and not res.partition.params["target_met"]
    assert res.modularity == max(r["modularity"] for r in res.runs)

    # a 6-node community is pruned to NOISE under the 10-file minimum
    edges = [(i, j, 1.0) for i in range(12) for j in range(i + 1, 12)]
    edges += [(12 + i, 12 + j, 1.0) for i in range(6) for j in range(i + 1, 6)]
    edges.append((0, 12, 1.0))
    g = WeightedGraph.from_edges([str(i) for i in range(18)], edges)
    res = tune_resolution(g, min_community_size=10)
    assert (res.partition.labels[12:] == NOISE).all() and (res.partition.labels[:12] == 0).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.3, 2.0))
def test_leiden_properties(seed, gamma):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 40))
    p = rng.uniform(0.05, 0.5)
    edges = [(i, j, float(rng.uniform(0.1, 1))) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    g = WeightedGraph.from_edges([str(i) for i in range(n)], edges)
    labels = leiden_labels(g, gamma, seed=seed % 100)
    assert modularity(g, labels, gamma) >= modularity(g, np.arange(n), gamma) - 1e-12
    adj = np.zeros((n, n))
    for i, j, w in edges:
        adj[i, j] = adj[j, i] = w
    for c in np.unique(labels):
        members = np.nonzero(labels == c)[0]
        k, _ = connected_components(adj[np.ix_(members, members)], directed=False)
        assert k == 1
    assert np.array_equal(labels, leiden_labels(g, gamma, seed=seed % 100))


def test_build_layer_rescale():
    g = WeightedGraph.from_edges(["a", "b", "c", "d"], [(0, 1, 0.2), (1, 2, 0.6), (2, 3, 1.0)])
    assert rescale_weights(g).weight.tolist() == pytest.approx([0.0, 0.5, 1.0])
    g = WeightedGraph.from_edges(["a", "b", "c"], [(0, 1, 0.3), (1, 2, 0.3)])
    assert rescale_weights(g).weight.tolist() == [1.0, 1.0]


def test_build_layer_matches_brute_force():
    x = np.random.default_rng(4).normal(size=(50, 6))
    nodes = [str(i) for i in range(50)]
    layer = build_layer(x, nodes, k=20)
    sims = np.array([[cosine(x[i], x[j]) for j in range(50)] for i in range(50)])
    edges = {}
    for i in range(50):
        for j in sorted((j for j in range(50) if j != i), key=lambda j: (-sims[i, j], j))[:20]:
            if sims[i, j] > 0:
                edges[(min(i, j), max(i, j))] = sims[i, j]
    lo, hi = min(edges.values()), max(edges.values())
    got = layer.edge_dict()
    assert set(got) == set(edges)
    for e, w in edges.items():
        assert got[e] == pytest.approx((w - lo) / (hi - lo), abs=1e-12)


def test_multiplex_examples():
    rng = np.random.default_rng(2)
    blocks = np.repeat(np.arange(4), 15)
    nodes = [str(i) for i in range(60)]
    a = planted_graph(nodes, blocks, 0.5, 0.05, rng)
    same = multiplex_leiden(MultiplexGraph(a, a), seed=3, min_community_size=1)
    single = leiden(a, seed=3)
    assert np.array_equal(same.labels, single.labels)

    empty = WeightedGraph(nodes)
    p = multiplex_leiden(MultiplexGraph(a, empty), seed=1, min_community_size=1)
    assert ari(p.labels, blocks) == 1.0

    b = planted_graph(nodes, rng.permutation(blocks), 0.5, 0.05, rng)
    p10 = multiplex_leiden(MultiplexGraph(a, b), layer_weights=(1.0, 0.0), seed=5, min_community_size=1)
    assert ari(p10.labels, leiden(a, seed=5).labels) == 1.0


def test_multiplex_isolated_nodes_are_noise():
    nodes = [str(i) for i in range(12)]
    edges = [(i, j, 1.0) for i in range(10) for j in range(i + 1, 10)]
    g = WeightedGraph.from_edges(nodes, edges)
    p = multiplex_leiden(MultiplexGraph(g, WeightedGraph(nodes)), min_community_size=1)
    assert p.labels[10] == NOISE and p.labels[11] == NOISE
    with pytest.raises(ValueError):
        MultiplexGraph(g, WeightedGraph(nodes[:5]))


def test_partition_json_roundtrip(tmp_path):
    p = Partition(["a", "b", "c", "d"], np.array([5, NOISE, 5, 2]), "ownership", params={"resolution": 1.0}, seed=3,
                  corpus_hash="h")
    assert p.labels.tolist() == [0, NOISE, 0, 1]
    assert p.quality.coverage == 0.75
    assert p.to_json()["assignment"] == {"a": 0, "b": "NOISE", "c": 0, "d": 1}
    p.save(tmp_path / "p.json")
    back = Partition.load(tmp_path / "p.json")
    assert back.assignment == p.assignment and back.corpus_hash == "h" and back.seed == 3
    assert back.label_of("zzz") == NOISE
    with pytest.raises(ValueError):
        Partition(["a"], np.array([0, 1]), "semantic")


def test_knn_graph_feeds_leiden():
    rng = np.random.default_rng(9)
    centers = rng.normal(size=(3, 16)) * 5
    x = np.vstack([c + rng.normal(size=(20, 16)) for c in centers])
    g = knn_graph(x, [str(i) for i in range(60)], k=10)
    assert ari(leiden_labels(g), np.repeat(np.arange(3), 20)) >= 0.9
