"""Reference partitions: coarse geographic grid, Hilbert-curve slices, and
partitions read from external files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_graph, check_n_clusters
from .graph_builder import MobilityGraph
from .partition import Partition, PartitionError, from_labels
from .spatial import hilbert_indices


def _super_cells(cells: np.ndarray, origin: np.ndarray, factor: int) -> np.ndarray:
    blocks = (cells - origin) // factor
    _, labels = np.unique(blocks, axis=0, return_inverse=True)
    return labels.ravel()


def grid_partition(graph: MobilityGraph, target_clusters: int) -> Partition:
    """Group cells into square super-cells of ``f x f`` cells.

    The coarseness ``f`` is the one whose count of non-empty super-cells is
    closest to ``target_clusters``; among equally close counts the ``f``
    nearest ``ceil(sqrt(bbox_cells / target))`` wins. Super-cells are anchored
    at the south-west corner of the nodes' bounding box.
    """
    check_graph(graph)
    if target_clusters < 1:
        raise ValueError("target_clusters must be >= 1")
    cells = graph.cells
    origin = cells.min(axis=0)
    extent = cells.max(axis=0) - origin + 1
    f_max = int(extent.max())
    f0 = int(np.ceil(np.sqrt(extent[0] * extent[1] / target_clusters)))
    f0 = min(max(f0, 1), f_max)

    def n_nonempty(f: int) -> int:
        return len(np.unique((cells - origin) // f, axis=0))

    # nearest count wins; ties prefer the coarseness closest to f0, then coarser
    best = min(range(1, f_max + 1),
               key=lambda f: (abs(n_nonempty(f) - target_clusters), abs(f - f0), -f))
    labels = _super_cells(cells, origin, best)
    return from_labels(graph, labels, "grid", {"coarseness": best})


def hilbert_partition(graph: MobilityGraph, k: int) -> Partition:
    """Contiguous slices of the Hilbert order with near-equal node weight.

    A slice is closed as soon as its weight reaches ``w(V) / k``; the sweep also
    closes slices early when only as many nodes remain as slices still needed.
    """
    check_graph(graph)
    check_n_clusters(k, graph.n_nodes)
    h = hilbert_indices(graph.cells[:, 0], graph.cells[:, 1], graph.grid)
    order = np.argsort(h, kind="stable")
    w = graph.node_weight[order]
    n = len(order)
    target = w.sum() / k
    tol = 1e-9 * max(target, 1e-300)
    labels_sorted = np.empty(n, dtype=np.int64)
    current, acc = 0, 0.0
    for i in range(n):
        labels_sorted[i] = current
        acc += w[i]
        remaining_nodes = n - i - 1
        slices_left = k - current - 1
        if slices_left == 0:
            continue
        if acc >= target - tol or remaining_nodes == slices_left:
            current += 1
            acc = 0.0
    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_sorted
    return from_labels(graph, labels, "hilbert")


def load_external_partition(path, graph: MobilityGraph) -> Partition:
    """Read a ``lat_index,lon_index,cluster_id`` CSV as a partition of ``graph``.

    Cluster ids are renumbered ``0..m-1`` in ascending order of the file's ids.

    Raises:
        PartitionError: on malformed rows, unknown or duplicated cells, or
            graph nodes absent from the file.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(_skip_comments(fh))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["lat_index", "lon_index", "cluster_id"]:
            raise PartitionError(f"{path}: expected header lat_index,lon_index,cluster_id")
        for lineno, row in enumerate(reader, start=2):
            try:
                a, b, c = (int(x) for x in row)
            except ValueError:
                raise PartitionError(f"{path}:{lineno}: malformed row {row!r}") from None
            rows.append((a, b, c))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    cells, ids = arr[:, :2], arr[:, 2]
    uniq, counts = np.unique(cells, axis=0, return_counts=True)
    dup = uniq[counts > 1]
    if len(dup):
        raise PartitionError(f"cells assigned more than once: {[tuple(d) for d in dup[:10].tolist()]}")
    pos = graph.index_of(cells)
    unknown = cells[pos < 0]
    if len(unknown):
        raise PartitionError(f"cells not in graph: {[tuple(u) for u in unknown[:10].tolist()]}")
    missing = np.setdiff1d(np.arange(graph.n_nodes), pos)
    if len(missing):
        raise PartitionError(
            f"{len(missing)} graph nodes missing from {Path(path).name}: "
            f"{[tuple(graph.cells[i].tolist()) for i in missing[:10]]}")
    labels = np.empty(graph.n_nodes, dtype=np.int64)
    _, dense = np.unique(ids, return_inverse=True)
    labels[pos] = dense.ravel()
    return from_labels(graph, labels, "external", {"path": str(path)}, relabel=False)


def _skip_comments(lines):
    for line in lines:
        if not line.startswith("#"):
            yield line


class GridPartitioner(ClusterMixin, BaseEstimator):
    """Coarse-grid baseline with about ``n_clusters`` non-empty regions."""

    def __init__(self, n_clusters: int = 20):
        self.n_clusters = n_clusters

    def fit(self, X: MobilityGraph, y=None):
        self.partition_ = grid_partition(X, self.n_clusters)
        self.labels_ = self.partition_.labels
        return self


class HilbertPartitioner(ClusterMixin, BaseEstimator):
    """Weight-balanced contiguous slices of the Hilbert order."""

    def __init__(self, n_clusters: int = 20):
        self.n_clusters = n_clusters

    def fit(self, X: MobilityGraph, y=None):
        self.partition_ = hilbert_partition(X, self.n_clusters)
        self.labels_ = self.partition_.labels
        return self

    def predict(self, X: MobilityGraph):
        check_is_fitted(self, "partition_")
        return self.partition_.labels_for(X)
