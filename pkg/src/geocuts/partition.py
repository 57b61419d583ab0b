"""The Partition type shared by GeoCUTS and the baselines, plus cut size."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph_builder import MobilityGraph
from .spatial import CellId

SOURCES = ("geocuts", "grid", "hilbert", "external", "truth")


class PartitionError(ValueError):
    """A partition is not a total, non-overlapping assignment of graph nodes."""


@dataclass(eq=False)
class Partition:
    """Total assignment of cells to cluster ids ``0..m-1``.

    ``cells`` is an ``(n, 2)`` array of ``(lat_index, lon_index)`` and
    ``labels[i]`` the cluster of ``cells[i]``. ``cluster_weights`` holds the
    summed node weight of each cluster in the graph the partition was built on.
    ``info`` carries run diagnostics (oversize clusters, fallback merges, ...).
    """

    cells: np.ndarray
    labels: np.ndarray
    cluster_weights: np.ndarray
    source: str = "external"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.cluster_weights = np.asarray(self.cluster_weights, dtype=float)
        if len(self.cells) != len(self.labels):
            raise PartitionError("cells and labels differ in length")
        if self.source not in SOURCES:
            raise PartitionError(f"unknown partition source {self.source!r}")
        m = len(self.cluster_weights)
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= m):
            raise PartitionError("labels must lie in 0..m-1")
        if len(np.unique(self.labels)) != m:
            raise PartitionError("partition has empty clusters")
        if len(self.cells) and len(np.unique(self.cells, axis=0)) != len(self.cells):
            raise PartitionError("a cell is assigned more than once")

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_weights)

    @property
    def assignment(self) -> dict[CellId, int]:
        return {CellId(int(a), int(b)): int(c)
                for (a, b), c in zip(self.cells.tolist(), self.labels.tolist())}

    def labels_for(self, graph: MobilityGraph) -> np.ndarray:
        """Labels aligned to ``graph``'s node order.

        Raises:
            PartitionError: if any graph node is unassigned.
        """
        if len(self.cells) == graph.n_nodes and np.array_equal(self.cells, graph.cells):
            return self.labels
        pos = graph.index_of(self.cells)
        out = np.full(graph.n_nodes, -1, dtype=np.int64)
        ok = pos >= 0
        out[pos[ok]] = self.labels[ok]
        missing = np.flatnonzero(out < 0)
        if len(missing):
            shown = [tuple(graph.cells[i].tolist()) for i in missing[:10]]
            raise PartitionError(f"{len(missing)} graph nodes unassigned, e.g. {shown}")
        return out


def from_labels(graph: MobilityGraph, labels, source: str, info: dict | None = None,
                relabel: bool = True) -> Partition:
    """Partition over ``graph``'s nodes from a per-node label array.

    With ``relabel`` the clusters are renumbered by first appearance in node
    order (i.e. by their smallest cell), which makes ids deterministic.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != graph.n_nodes:
        raise PartitionError("one label per graph node required")
    if relabel and len(labels):
        _, first = np.unique(labels, return_index=True)
        order = np.argsort(first)
        remap = np.empty(labels.max() + 1, dtype=np.int64)
        remap[np.unique(labels)[order]] = np.arange(len(order))
        labels = remap[labels]
    m = int(labels.max()) + 1 if len(labels) else 0
    weights = np.bincount(labels, weights=graph.node_weight, minlength=m)
    return Partition(graph.cells.copy(), labels, weights, source, dict(info or {}))


def cut_size(graph: MobilityGraph, partition: Partition) -> tuple[float, float]:
    """Total weight of edges whose endpoints lie in different clusters.

    Returns ``(cut, cut / total_edge_weight)``; the fraction is 0 for an
    edgeless graph.
    """
    labels = partition.labels_for(graph)
    if not graph.n_edges:
        return 0.0, 0.0
    w = graph.edge_weight
    crossing = labels[graph.edges[:, 0]] != labels[graph.edges[:, 1]]
    cut = float(w[crossing].sum())
    total = float(w.sum())
    return cut, (cut / total if total > 0 else 0.0)


def achieved_alpha(partition: Partition) -> float:
    """Smallest alpha for which the partition is alpha-balanced."""
    w = partition.cluster_weights
    if not len(w) or w.sum() <= 0:
        return 0.0
    mean = w.sum() / len(w)
    return float(np.abs(w / mean - 1.0).max())
