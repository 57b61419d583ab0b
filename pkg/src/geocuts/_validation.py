"""Input checks shared by the estimators."""

from __future__ import annotations

import numbers

from .graph_builder import MobilityGraph


def check_graph(graph, allow_empty: bool = False) -> MobilityGraph:
    if not isinstance(graph, MobilityGraph):
        raise TypeError(f"expected a MobilityGraph, got {type(graph).__name__}")
    if not allow_empty and graph.n_nodes == 0:
        raise ValueError("graph has no nodes")
    return graph


def check_n_clusters(k, n_nodes: int) -> int:
    if not isinstance(k, numbers.Integral) or isinstance(k, bool):
        raise TypeError(f"number of clusters must be an integer, got {k!r}")
    if k < 1:
        raise ValueError(f"number of clusters must be >= 1, got {k}")
    if k > n_nodes:
        raise ValueError(f"number of clusters k={k} exceeds the {n_nodes} graph nodes")
    return int(k)
