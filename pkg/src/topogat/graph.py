"""Undirected graphs in CSR form, plus degree / clustering features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised when a graph cannot be built from the given inputs."""


@dataclass(frozen=True, eq=False)
class Graph:
    """One undirected, unweighted graph with a node feature matrix and a label.

    ``csr_neighbors[csr_offsets[v]:csr_offsets[v + 1]]`` lists the neighbors of
    ``v`` in ascending order.  Self-loops and duplicate entries never appear.
    """

    num_nodes: int
    csr_offsets: np.ndarray
    csr_neighbors: np.ndarray
    features: np.ndarray
    label: int

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_neighbors[self.csr_offsets[v]:self.csr_offsets[v + 1]]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges (each stored pair counted once)."""
        return len(self.csr_neighbors) // 2

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edge_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Both directions of every edge as ``(src, dst)`` index arrays."""
        src = np.repeat(np.arange(self.num_nodes), np.diff(self.csr_offsets))
        return src, self.csr_neighbors.copy()

    def with_features(self, features: np.ndarray) -> "Graph":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != self.num_nodes:
            raise GraphError(
                f"expected {self.num_nodes} feature rows, got shape {features.shape}"
            )
        return Graph(self.num_nodes, self.csr_offsets, self.csr_neighbors, features, self.label)


@dataclass(frozen=True)
class TopoFeatures:
    degree: np.ndarray
    clustering: np.ndarray


def build_graph(
    edge_list: Iterable[tuple[int, int]] | np.ndarray,
    num_nodes: int,
    features: np.ndarray | Sequence[Sequence[float]],
    label: int,
) -> Graph:
    """Build a :class:`Graph` from an edge list given in one or both directions.

    Self-loops are dropped and duplicate edges collapsed.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1 and num_nodes == 0:
        features = features.reshape(0, 0)
    if features.ndim != 2 or features.shape[0] != num_nodes:
        raise GraphError(f"expected {num_nodes} feature rows, got shape {features.shape}")

    edges = np.asarray(list(edge_list) if not isinstance(edge_list, np.ndarray) else edge_list,
                       dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise GraphError(f"edge endpoint out of range for a graph with {num_nodes} nodes")

    edges = edges[edges[:, 0] != edges[:, 1]]
    both = np.concatenate([edges, edges[:, ::-1]])
    # unique() sorts lexicographically, which gives CSR order for free
    both = np.unique(both, axis=0) if len(both) else both.reshape(0, 2)

    counts = np.bincount(both[:, 0], minlength=num_nodes) if len(both) else np.zeros(num_nodes, np.int64)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    neighbors = both[:, 1].astype(np.int64)

    for arr in (offsets, neighbors, features):
        arr.setflags(write=False)
    return Graph(int(num_nodes), offsets, neighbors, features, int(label))


def node_degrees(g: Graph) -> np.ndarray:
    return np.diff(g.csr_offsets).astype(np.float64)


def clustering_coefficients(g: Graph) -> np.ndarray:
    """Local clustering coefficient of every node.

    Uses sorted-neighbor intersection to count the edges among ``N(v)``.
    Nodes with fewer than two neighbors get 0.
    """
    out = np.zeros(g.num_nodes, dtype=np.float64)
    for v in range(g.num_nodes):
        nbrs = g.neighbors(v)
        d = len(nbrs)
        if d < 2:
            continue
        # each edge among N(v) is seen once from each endpoint
        links = sum(len(np.intersect1d(g.neighbors(u), nbrs, assume_unique=True)) for u in nbrs)
        out[v] = links / (d * (d - 1))
    return out


def topo_features(g: Graph) -> TopoFeatures:
    return TopoFeatures(degree=node_degrees(g), clustering=clustering_coefficients(g))


def augment_features(g: Graph, topo: TopoFeatures | None = None, normalize: bool = False) -> Graph:
    """Append degree and clustering columns (in that order) to the node features.

    With ``normalize`` the two appended columns are min-max scaled per graph;
    constant columns become zeros.  Off by default: values go in raw.
    """
    if topo is None:
        topo = topo_features(g)
    extra = np.column_stack([topo.degree, topo.clustering]).astype(np.float64)
    if normalize and g.num_nodes:
        lo, hi = extra.min(axis=0), extra.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        extra = np.where(hi > lo, (extra - lo) / span, 0.0)
    return g.with_features(np.hstack([g.features, extra]))


def graph_stats(graphs: Sequence[Graph]) -> tuple[int, float, float]:
    """``(count, mean nodes, mean undirected edges)`` over a list of graphs."""
    if not graphs:
        raise GraphError("graph_stats needs at least one graph")
    nodes = np.array([g.num_nodes for g in graphs], dtype=np.float64)
    edges = np.array([g.num_edges for g in graphs], dtype=np.float64)
    return len(graphs), float(nodes.mean()), float(edges.mean())
