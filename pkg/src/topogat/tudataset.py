"""Reader/writer for the TU Dortmund graph-kernel text format, and mini-batching.

A dataset ``DS`` lives in one directory as::

    DS_A.txt                one "i, j" pair per line, 1-based global node ids
    DS_graph_indicator.txt  graph id (1-based) of every node
    DS_graph_labels.txt     raw integer label of every graph
    DS_node_labels.txt      integer label of every node

Node labels become one-hot features; any ``DS_node_attributes.txt`` is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import Graph, build_graph


class TUFormatError(ValueError):
    """Malformed or missing TU dataset files."""


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    graphs: list[Graph]
    num_classes: int
    feature_dim: int
    label_map: dict[int, int] = field(default_factory=dict)
    # raw node labels per graph, kept so a dataset can be written back out
    node_labels: list[np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.graphs)

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def with_graphs(self, graphs: list[Graph]) -> "Dataset":
        return Dataset(self.name, graphs, self.num_classes, graphs[0].feature_dim,
                       self.label_map, self.node_labels)


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Several graphs packed block-diagonally into one disconnected graph."""

    features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    graph_id: np.ndarray
    num_graphs: int
    labels: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def _read_int_rows(path: Path, width: int) -> np.ndarray:
    if not path.is_file():
        raise TUFormatError(f"missing file: {path}")
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            tokens = [t.strip() for t in line.split(",")]
            if len(tokens) != width:
                raise TUFormatError(f"{path.name}:{lineno}: expected {width} value(s), got {len(tokens)}")
            try:
                rows.append([int(t) for t in tokens])
            except ValueError:
                raise TUFormatError(f"{path.name}:{lineno}: non-integer token in {line!r}") from None
    return np.array(rows, dtype=np.int64).reshape(-1, width)


def one_hot_node_labels(raw: Sequence[int] | np.ndarray, vocabulary: np.ndarray | None = None) -> np.ndarray:
    """One-hot encode integer labels; column k is the k-th smallest distinct label."""
    raw = np.asarray(raw, dtype=np.int64)
    if vocabulary is None:
        vocabulary = np.unique(raw)
    cols = np.searchsorted(vocabulary, raw)
    out = np.zeros((len(raw), len(vocabulary)), dtype=np.float64)
    out[np.arange(len(raw)), cols] = 1.0
    return out


def parse_tu_dataset(directory: str | Path, name: str) -> Dataset:
    directory = Path(directory)
    edges = _read_int_rows(directory / f"{name}_A.txt", 2)
    indicator = _read_int_rows(directory / f"{name}_graph_indicator.txt", 1)[:, 0]
    graph_labels = _read_int_rows(directory / f"{name}_graph_labels.txt", 1)[:, 0]
    node_labels = _read_int_rows(directory / f"{name}_node_labels.txt", 1)[:, 0]

    n_nodes, n_graphs = len(indicator), len(graph_labels)
    if len(node_labels) != n_nodes:
        raise TUFormatError(f"{len(node_labels)} node labels for {n_nodes} nodes")
    if n_nodes and (indicator.min() < 1 or indicator.max() > n_graphs):
        raise TUFormatError("graph indicator refers to a graph id out of range")
    if np.any(np.diff(indicator) < 0):
        raise TUFormatError("graph indicator is not grouped by graph")
    if edges.size and (edges.min() < 1 or edges.max() > n_nodes):
        raise TUFormatError("edge refers to a node id out of range")

    edges = edges - 1
    gid = indicator - 1
    edge_graph = gid[edges[:, 0]]
    if np.any(edge_graph != gid[edges[:, 1]]):
        bad = int(np.argmax(edge_graph != gid[edges[:, 1]]))
        raise TUFormatError(f"edge on line {bad + 1} of {name}_A.txt joins two graphs")

    label_values = np.unique(graph_labels)
    label_map = {int(raw): k for k, raw in enumerate(label_values)}
    vocabulary = np.unique(node_labels)
    features = one_hot_node_labels(node_labels, vocabulary)

    starts = np.searchsorted(gid, np.arange(n_graphs + 1))
    order = np.argsort(edge_graph, kind="stable")
    edges, edge_graph = edges[order], edge_graph[order]
    edge_starts = np.searchsorted(edge_graph, np.arange(n_graphs + 1))

    graphs, per_graph_labels = [], []
    for i in range(n_graphs):
        lo, hi = starts[i], starts[i + 1]
        local = edges[edge_starts[i]:edge_starts[i + 1]] - lo
        graphs.append(build_graph(local, hi - lo, features[lo:hi], label_map[int(graph_labels[i])]))
        per_graph_labels.append(node_labels[lo:hi].copy())

    return Dataset(name, graphs, len(label_values), features.shape[1], label_map, per_graph_labels)


def write_tu_dataset(dataset: Dataset, directory: str | Path) -> None:
    """Write ``dataset`` in TU format (the inverse of :func:`parse_tu_dataset`)."""
    if dataset.node_labels is None:
        raise TUFormatError("dataset carries no raw node labels to write")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    inverse = {k: raw for raw, k in dataset.label_map.items()}
    a_lines, ind_lines, node_lines, graph_lines = [], [], [], []
    offset = 0
    for i, (g, raw_nodes) in enumerate(zip(dataset.graphs, dataset.node_labels)):
        src, dst = g.edge_pairs()
        a_lines += [f"{s + offset + 1}, {d + offset + 1}" for s, d in zip(src, dst)]
        ind_lines += [str(i + 1)] * g.num_nodes
        node_lines += [str(int(x)) for x in raw_nodes]
        graph_lines.append(str(inverse[g.label]))
        offset += g.num_nodes
    for suffix, lines in (("A", a_lines), ("graph_indicator", ind_lines),
                          ("node_labels", node_lines), ("graph_labels", graph_lines)):
        (directory / f"{dataset.name}_{suffix}.txt").write_text("".join(line + "\n" for line in lines))


def batch_graphs(graphs: Sequence[Graph], order: Sequence[int] | None = None) -> GraphBatch:
    """Pack ``graphs[order]`` into one block-diagonal :class:`GraphBatch`."""
    if order is not None:
        graphs = [graphs[i] for i in order]
    if not graphs:
        raise ValueError("cannot batch zero graphs")
    dims = {g.feature_dim for g in graphs}
    if len(dims) != 1:
        raise ValueError(f"graphs disagree on feature dimension: {sorted(dims)}")

    sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    src, dst = [], []
    for g, off in zip(graphs, offsets):
        s, d = g.edge_pairs()
        src.append(s + off)
        dst.append(d + off)
    return GraphBatch(
        features=np.vstack([g.features for g in graphs]),
        edge_src=np.concatenate(src),
        edge_dst=np.concatenate(dst),
        graph_id=np.repeat(np.arange(len(graphs)), sizes),
        num_graphs=len(graphs),
        labels=np.array([g.label for g in graphs], dtype=np.int64),
    )


def unbatch(batch: GraphBatch) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a batch back into per-graph ``(features, local edge array)`` pairs."""
    starts = np.searchsorted(batch.graph_id, np.arange(batch.num_graphs + 1))
    edge_graph = batch.graph_id[batch.edge_src]
    out = []
    for i in range(batch.num_graphs):
        mask = edge_graph == i
        local = np.column_stack([batch.edge_src[mask], batch.edge_dst[mask]]) - starts[i]
        out.append((batch.features[starts[i]:starts[i + 1]], local))
    return out
