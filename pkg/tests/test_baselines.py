import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from geocuts.baselines import (GridPartitioner, HilbertPartitioner, grid_partition,
                               hilbert_partition, load_external_partition)
from geocuts.graph_builder import build_graph
from geocuts.io import write_partition_csv
from geocuts.partition import PartitionError, cut_size
from geocuts.partitioner import PartitionConfig, geocuts_partition
from geocuts.spatial import GridSpec

from conftest import blob_graph, make_graph


def _square(side, weights=None):
    grid = GridSpec(1.0, 0, side - 0.5, 0, side - 0.5)
    cells = [(a, b) for a in range(side) for b in range(side)]
    w = np.ones(len(cells)) if weights is None else weights
    return make_graph(cells, w, grid=grid)


def _check_partition(g, p):
    assert len(p.labels) == g.n_nodes
    assert sorted(set(p.labels.tolist())) == list(range(p.n_clusters))
    assert p.cluster_weights.sum() == pytest.approx(g.total_weight)


class TestGrid:
    def test_target_one(self):
        g = _square(5)
        assert grid_partition(g, 1).n_clusters == 1

    def test_four_by_four(self):
        g = _square(4)
        p = grid_partition(g, 4)
        assert p.n_clusters == 4
        blocks = {(a // 2, b // 2) for a, b in g.cells.tolist()}
        for blk in blocks:
            members = [i for i, (a, b) in enumerate(g.cells.tolist()) if (a // 2, b // 2) == blk]
            assert len(set(p.labels[members].tolist())) == 1
        assert p.info["coarseness"] == 2

    def test_count_near_target_on_synthetic(self, small_synth):
        cfg, data = small_synth
        g = build_graph(data.visits, cfg.grid())
        for target in (20, 50, 200):
            p = grid_partition(g, target)
            _check_partition(g, p)
            assert abs(p.n_clusters - target) <= 0.25 * target

    def test_invalid_target(self):
        with pytest.raises(ValueError):
            grid_partition(_square(3), 0)


class TestHilbert:
    def test_k_one(self):
        assert hilbert_partition(_square(4), 1).n_clusters == 1

    def test_uniform_slices(self):
        g = _square(8)
        p = hilbert_partition(g, 4)
        assert np.bincount(p.labels).tolist() == [16] * 4

    def test_slices_are_quadrants(self):
        g = _square(4)
        p = hilbert_partition(g, 4)
        for c in range(4):
            blocks = {(a // 2, b // 2) for (a, b), l in zip(g.cells.tolist(), p.labels) if l == c}
            assert len(blocks) == 1

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    def test_sweep_bound(self, seed, k):
        rng = np.random.default_rng(seed)
        g = _square(6, rng.uniform(0.1, 5, 36))
        p = hilbert_partition(g, k)
        _check_partition(g, p)
        assert p.n_clusters == k
        bound = g.total_weight / k + g.node_weight.max()
        assert (p.cluster_weights <= bound + 1e-9).all()

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            hilbert_partition(_square(2), 5)

    def test_blobs_not_better_than_geocuts(self):
        g, _ = blob_graph(2, side=5)
        geo = geocuts_partition(g, PartitionConfig(2))
        assert cut_size(g, hilbert_partition(g, 2))[1] >= cut_size(g, geo)[1]


class TestExternal:
    def test_roundtrip(self, tmp_path):
        g, _ = blob_graph(3, side=3)
        p = geocuts_partition(g, PartitionConfig(3))
        path = tmp_path / "p.csv"
        write_partition_csv(path, p)
        q = load_external_partition(path, g)
        assert np.array_equal(q.labels, p.labels)
        assert q.source == "external"

    def test_missing_node_named(self, tmp_path):
        g = _square(2)
        path = tmp_path / "p.csv"
        path.write_text("lat_index,lon_index,cluster_id\n0,0,0\n0,1,0\n1,0,1\n")
        with pytest.raises(PartitionError, match=r"\(1, 1\)"):
            load_external_partition(path, g)

    @pytest.mark.parametrize("body,match", [
        ("0,0,0\n0,1,0\n1,0,1\n1,1,1\n9,9,1\n", "not in graph"),
        ("0,0,0\n0,0,1\n0,1,0\n1,0,1\n1,1,1\n", "more than once"),
        ("0,0,0\n0,1,x\n1,0,1\n1,1,1\n", "malformed"),
    ])
    def test_errors(self, tmp_path, body, match):
        path = tmp_path / "p.csv"
        path.write_text("lat_index,lon_index,cluster_id\n" + body)
        with pytest.raises(PartitionError, match=match):
            load_external_partition(path, _square(2))

    def test_bad_header(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("a,b,c\n0,0,0\n")
        with pytest.raises(PartitionError):
            load_external_partition(path, _square(1))

    def test_ids_renumbered(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("# provenance: {}\nlat_index,lon_index,cluster_id\n0,0,7\n0,1,3\n1,0,7\n1,1,3\n")
        p = load_external_partition(path, _square(2))
        assert p.labels.tolist() == [1, 0, 1, 0]


class TestEstimators:
    def test_grid_estimator(self):
        g = _square(4)
        est = GridPartitioner(n_clusters=4)
        assert len(set(est.fit_predict(g).tolist())) == 4
        assert clone(est).get_params() == {"n_clusters": 4}

    def test_hilbert_estimator(self):
        g = _square(4)
        est = HilbertPartitioner(n_clusters=2).fit(g)
        assert np.array_equal(est.predict(g), est.labels_)
