import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topogat.graph import build_graph, graph_stats, node_degrees
from topogat.tudataset import (
    TUFormatError,
    batch_graphs,
    one_hot_node_labels,
    parse_tu_dataset,
    unbatch,
    write_tu_dataset,
)

from conftest import random_graph


def write_files(tmp_path, name, **files):
    for suffix, text in files.items():
        (tmp_path / f"{name}_{suffix}.txt").write_text(text)
    return tmp_path


GOOD = dict(A="1, 2\n2, 1\n3, 4\n4, 3\n", graph_indicator="1\n1\n2\n2\n",
            graph_labels="1\n-1\n", node_labels="0\n1\n0\n1\n")


class TestParse:
    def test_fixture(self, tiny):
        assert len(tiny) == 2
        assert tiny.num_classes == 2 and tiny.feature_dim == 2
        assert tiny.label_map == {-1: 0, 1: 1}
        assert [g.label for g in tiny.graphs] == [1, 0]
        for g in tiny.graphs:
            assert g.num_nodes == 2 and g.num_edges == 1
            np.testing.assert_array_equal(g.features, [[1, 0], [0, 1]])

    def test_whitespace_variants(self, tmp_path):
        files = dict(GOOD, A="1,2\n  2 ,1 \n3,  4\n4, 3\n\n\n", graph_labels="1\n-1\n\n")
        ds = parse_tu_dataset(write_files(tmp_path, "WS", **files), "WS")
        assert [g.num_edges for g in ds.graphs] == [1, 1]

    def test_one_direction_only_is_symmetrised(self, tmp_path):
        ds = parse_tu_dataset(write_files(tmp_path, "ONE", **dict(GOOD, A="1, 2\n4, 3\n")), "ONE")
        for g in ds.graphs:
            np.testing.assert_array_equal(node_degrees(g), [1, 1])

    def test_node_attributes_ignored(self, tmp_path):
        files = dict(GOOD, node_attributes="0.1, 0.2\n0.3, 0.4\n0.5, 0.6\n0.7, 0.8\n")
        assert parse_tu_dataset(write_files(tmp_path, "ATT", **files), "ATT").feature_dim == 2

    @pytest.mark.parametrize("missing", ["A", "graph_indicator", "graph_labels", "node_labels"])
    def test_missing_file(self, tmp_path, missing):
        files = {k: v for k, v in GOOD.items() if k != missing}
        with pytest.raises(TUFormatError, match="missing"):
            parse_tu_dataset(write_files(tmp_path, "M", **files), "M")

    @pytest.mark.parametrize("files, match", [
        (dict(A="1, 2, 3\n"), "expected 2"),
        (dict(A="1, x\n"), "non-integer"),
        (dict(A="2, 3\n"), "joins two graphs"),
        (dict(A="1, 9\n"), "out of range"),
        (dict(graph_indicator="1\n1\n3\n3\n"), "out of range"),
        (dict(node_labels="0\n1\n"), "node labels"),
        (dict(graph_labels="1.5\n-1\n"), "non-integer"),
    ])
    def test_malformed(self, tmp_path, files, match):
        with pytest.raises(TUFormatError, match=match):
            parse_tu_dataset(write_files(tmp_path, "BAD", **dict(GOOD, **files)), "BAD")

    def test_roundtrip(self, tiny, tmp_path):
        write_tu_dataset(tiny, tmp_path)
        again = parse_tu_dataset(tmp_path, "TINY")
        assert again.label_map == tiny.label_map
        for a, b in zip(tiny.graphs, again.graphs):
            np.testing.assert_array_equal(a.csr_offsets, b.csr_offsets)
            np.testing.assert_array_equal(a.csr_neighbors, b.csr_neighbors)
            np.testing.assert_array_equal(a.features, b.features)
            assert a.label == b.label

    def test_mutag_roundtrip(self, mutag, tmp_path):
        write_tu_dataset(mutag, tmp_path)
        again = parse_tu_dataset(tmp_path, "MUTAG")
        assert graph_stats(again.graphs) == graph_stats(mutag.graphs)
        assert all(np.array_equal(a.features, b.features) and np.array_equal(a.csr_neighbors, b.csr_neighbors)
                   for a, b in zip(mutag.graphs, again.graphs))

    def test_label_remap_independent_of_graph_order(self, tmp_path):
        swapped = dict(GOOD, A="1, 2\n2, 1\n3, 4\n4, 3\n", graph_labels="-1\n1\n")
        ds = parse_tu_dataset(write_files(tmp_path, "SW", **swapped), "SW")
        assert ds.label_map == {-1: 0, 1: 1}
        assert [g.label for g in ds.graphs] == [0, 1]


class TestOneHot:
    def test_basic(self):
        np.testing.assert_array_equal(one_hot_node_labels([0, 1, 0]), [[1, 0], [0, 1], [1, 0]])

    def test_single(self):
        np.testing.assert_array_equal(one_hot_node_labels([5]), [[1]])

    def test_rank_order(self):
        np.testing.assert_array_equal(one_hot_node_labels([2, 0, 7]), [[0, 1, 0], [1, 0, 0], [0, 0, 1]])


K3 = build_graph([(0, 1), (1, 2), (0, 2)], 3, np.ones((3, 2)), 1)


class TestBatch:
    def test_single_triangle(self):
        b = batch_graphs([K3])
        assert b.num_nodes == 3 and len(b.edge_src) == 6
        np.testing.assert_array_equal(b.graph_id, [0, 0, 0])

    def test_offsets(self, tiny):
        b = batch_graphs(tiny.graphs)
        assert set(zip(b.edge_src.tolist(), b.edge_dst.tolist())) == {(0, 1), (1, 0), (2, 3), (3, 2)}
        np.testing.assert_array_equal(b.labels, [1, 0])

    def test_edgeless_with_triangle(self):
        lone = build_graph([], 1, np.zeros((1, 2)), 0)
        b = batch_graphs([lone, K3])
        expected = {(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1)}
        assert set(zip(b.edge_src.tolist(), b.edge_dst.tolist())) == expected
        assert len(b.edge_src) == 6
        np.testing.assert_array_equal(b.graph_id, [0, 1, 1, 1])

    def test_order(self, tiny):
        b = batch_graphs(tiny.graphs, [1, 0])
        np.testing.assert_array_equal(b.labels, [0, 1])

    def test_feature_dim_mismatch(self):
        with pytest.raises(ValueError):
            batch_graphs([K3, build_graph([], 1, np.zeros((1, 3)), 0)])

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_unbatch_recovers_graphs(self, seed, count):
        rng = np.random.default_rng(seed)
        graphs = [random_graph(rng, int(rng.integers(1, 9)), 3) for _ in range(count)]
        b = batch_graphs(graphs)
        assert np.all(b.graph_id[b.edge_src] == b.graph_id[b.edge_dst])
        assert b.graph_id.max() + 1 == b.num_graphs
        for g, (feats, edges) in zip(graphs, unbatch(b)):
            np.testing.assert_array_equal(feats, g.features)
            src, dst = g.edge_pairs()
            assert sorted(map(tuple, edges.tolist())) == sorted(zip(src.tolist(), dst.tolist()))
