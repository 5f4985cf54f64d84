"""Graph-based partitions: kNN layers, resolution tuning, multiplex Leiden."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..ownership import WeightedGraph, knn_graph
from .leiden import leiden_multiplex_labels, modularity, multiplex_modularity
from .partition import NOISE, Partition, PartitionQuality

log = logging.getLogger(__name__)

DEFAULT_RESOLUTIONS = (0.5, 0.8, 1.0, 1.2, 1.5, 2.0)
MIN_COMMUNITY_SIZE = 10


def rescale_weights(g: WeightedGraph) -> WeightedGraph:
    """Min-max rescale edge weights to [0, 1]; a constant layer becomes all ones."""
    if g.n_edges == 0:
        return g
    lo, hi = float(g.weight.min()), float(g.weight.max())
    if hi == lo:
        w = np.ones_like(g.weight)
    else:
        w = (g.weight - lo) / (hi - lo)
    return WeightedGraph(list(g.nodes), g.src.copy(), g.dst.copy(), w)


def build_layer(vectors, nodes: Sequence[str], k: int = 20) -> WeightedGraph:
    return rescale_weights(knn_graph(np.asarray(vectors, dtype=float), nodes, k))


@dataclass
class MultiplexGraph:
    semantic: WeightedGraph
    ownership: WeightedGraph

    def __post_init__(self) -> None:
        if self.semantic.nodes != self.ownership.nodes:
            raise ValueError("multiplex layers must share an identical node set")

    @property
    def nodes(self) -> list[str]:
        return self.semantic.nodes

    @property
    def layers(self) -> list[WeightedGraph]:
        return [self.semantic, self.ownership]


def isolated_nodes(graphs: Sequence[WeightedGraph]) -> np.ndarray:
    n = graphs[0].n
    deg = np.zeros(n)
    for g in graphs:
        keep = g.weight > 0
        np.add.at(deg, g.src[keep], 1)
        np.add.at(deg, g.dst[keep], 1)
    return deg == 0


def drop_small(labels: np.ndarray, min_size: int) -> np.ndarray:
    out = labels.copy()
    ids, counts = np.unique(labels[labels != NOISE], return_counts=True)
    for c, cnt in zip(ids, counts):
        if cnt < min_size:
            out[labels == c] = NOISE
    return out


def leiden(
    graph: WeightedGraph, resolution: float = 1.0, seed: int = 0, mode: str = "ownership"
) -> Partition:
    """Single-layer Leiden; no small-community pruning."""
    labels = leiden_multiplex_labels([graph], [1.0], resolution, seed)
    q = PartitionQuality(modularity=modularity(graph, labels))
    return Partition(list(graph.nodes), labels, mode, q, {"resolution": resolution}, seed)


@dataclass
class TuneResult:
    resolution: float
    partition: Partition
    modularity: float
    target_met: bool
    runs: list[dict] = field(default_factory=list)


def tune_resolution(
    graphs: WeightedGraph | Sequence[WeightedGraph],
    resolutions: Sequence[float] = DEFAULT_RESOLUTIONS,
    target_modularity: float = 0.7,
    seed: int = 0,
    *,
    layer_weights: Sequence[float] | None = None,
    min_community_size: int = MIN_COMMUNITY_SIZE,
    mode: str = "ownership",
) -> TuneResult:
    """Smallest resolution reaching ``target_modularity``, else the best run.

    Modularity is judged at resolution 1 on the raw Leiden output; communities
    smaller than ``min_community_size`` then become NOISE.
    """
    layers = [graphs] if isinstance(graphs, WeightedGraph) else list(graphs)
    weights = [1.0] * len(layers) if layer_weights is None else list(layer_weights)
    if not resolutions:
        raise ValueError("resolution list must not be empty")
    runs = []
    chosen = None
    for gamma in sorted(resolutions):
        labels = leiden_multiplex_labels(layers, weights, gamma, seed)
        q = multiplex_modularity(layers, labels, weights)
        runs.append({"resolution": gamma, "modularity": q, "n_communities": int(labels.max() + 1)})
        if chosen is None and q >= target_modularity:
            chosen = (gamma, labels, q)
    target_met = chosen is not None
    if chosen is None:
        best = max(range(len(runs)), key=lambda i: (runs[i]["modularity"], -i))
        gamma = runs[best]["resolution"]
        labels = leiden_multiplex_labels(layers, weights, gamma, seed)
        chosen = (gamma, labels, runs[best]["modularity"])
        log.info("target modularity %.2f not reached; best %.3f at resolution %s", target_modularity, chosen[2], gamma)
    gamma, labels, q = chosen
    labels = labels.copy()
    labels[isolated_nodes(layers)] = NOISE
    labels = drop_small(labels, min_community_size)
    params = {
        "resolution": gamma,
        "target_modularity": target_modularity,
        "target_met": target_met,
        "min_community_size": min_community_size,
        "layer_weights": weights,
    }
    part = Partition(list(layers[0].nodes), labels, mode, PartitionQuality(modularity=q), params, seed)
    return TuneResult(gamma, part, q, target_met, runs)


def multiplex_leiden(
    layers: MultiplexGraph,
    layer_weights: tuple[float, float] = (1.0, 1.0),
    resolution: float = 1.0,
    seed: int = 0,
    min_community_size: int = MIN_COMMUNITY_SIZE,
) -> Partition:
    graphs = layers.layers
    labels = leiden_multiplex_labels(graphs, layer_weights, resolution, seed)
    q = multiplex_modularity(graphs, labels, layer_weights)
    labels = labels.copy()
    labels[isolated_nodes(graphs)] = NOISE
    labels = drop_small(labels, min_community_size)
    params = {
        "resolution": resolution,
        "layer_weights": list(layer_weights),
        "min_community_size": min_community_size,
    }
    return Partition(list(layers.nodes), labels, "multiplex", PartitionQuality(modularity=q), params, seed)
