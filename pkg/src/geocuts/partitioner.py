"""Balanced partitioning with Hilbert-seeded natural cuts.

Pipeline: pick ``k`` seeds spread along the Hilbert order, compute a natural
cut around each seed (core contracted to a source, the rest of the graph
beyond a ``Q``-weight BFS ball contracted to a sink, min s-t cut in between),
drop the union of cut edges, contract the connected components into
fragments and greedily merge fragments into clusters of weight at most
``(1 + alpha) * w(V) / k``.
"""

from __future__ import annotations

import heapq
import logging
import os
import time
import warnings
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_graph, check_n_clusters
from .graph_builder import MobilityGraph
from .maxflow import FlowNetwork, min_cut
from .partition import Partition, cut_size, from_labels
from .spatial import CellId, hilbert_indices

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionConfig:
    k: int
    alpha: float = 0.1
    core_fraction: float = 0.1
    rng_seed: int = 0
    n_jobs: int | None = None
    max_fragments: int = 200_000

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.core_fraction < 1:
            raise ValueError("core_fraction must lie in (0, 1)")


@dataclass
class Fragment:
    id: int
    members: list[int]
    weight: float
    neighbors: dict[int, float] = field(default_factory=dict)


def default_n_jobs() -> int:
    env = os.environ.get("GEOCUTS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class _Neighborhoods:
    """Per-node neighbor lists in BFS expansion order.

    Neighbors are ordered by descending edge weight, then ascending cell id
    (node positions follow cell id order).
    """

    def __init__(self, graph: MobilityGraph):
        n = graph.n_nodes
        self.node_weight = graph.node_weight.tolist()
        ew = graph.edge_weight
        self.edge_weight = ew.tolist()
        if graph.n_edges:
            src = np.r_[graph.edges[:, 0], graph.edges[:, 1]]
            dst = np.r_[graph.edges[:, 1], graph.edges[:, 0]]
            eid = np.r_[np.arange(graph.n_edges), np.arange(graph.n_edges)]
            order = np.lexsort((dst, -ew[eid], src))
            src, dst, eid = src[order], dst[order], eid[order]
            bounds = np.searchsorted(src, np.arange(n + 1))
            dst_l, eid_l = dst.tolist(), eid.tolist()
            self.adj = [list(zip(dst_l[bounds[i]:bounds[i + 1]], eid_l[bounds[i]:bounds[i + 1]]))
                        for i in range(n)]
        else:
            self.adj = [[] for _ in range(n)]


def select_seeds(graph: MobilityGraph, k: int) -> list[CellId]:
    """Median node of each of ``k`` equal-count pieces of the Hilbert order."""
    return [CellId(*map(int, graph.cells[i])) for i in _seed_positions(graph, k)]


def _seed_positions(graph: MobilityGraph, k: int) -> list[int]:
    if k < 1:
        raise ValueError("k must be positive")
    if graph.n_nodes < k:
        raise ValueError(f"need at least k={k} nodes, graph has {graph.n_nodes}")
    h = hilbert_indices(graph.cells[:, 0], graph.cells[:, 1], graph.grid)
    order = np.argsort(h, kind="stable")
    return [int(piece[(len(piece) - 1) // 2]) for piece in np.array_split(order, k)]


def natural_cut(graph: MobilityGraph, seed: CellId, q_weight: float,
                core_fraction: float = 0.1) -> set[tuple[CellId, CellId]]:
    """Edges of the natural cut around ``seed``, as sorted cell pairs."""
    pos = graph.index_of([seed])[0]
    if pos < 0:
        raise KeyError(f"seed {tuple(seed)} is not a graph node")
    ids = graph.cell_ids()
    cut = _natural_cut(_Neighborhoods(graph), int(pos), q_weight, core_fraction)
    return {(ids[graph.edges[e, 0]], ids[graph.edges[e, 1]]) for e in cut}


def _natural_cut(nb: _Neighborhoods, seed: int, q_weight: float,
                 core_fraction: float) -> set[int]:
    """Natural cut around ``seed`` as a set of graph edge ids."""
    w = nb.node_weight
    core_target = core_fraction * q_weight
    order = [seed]
    seen = {seed}
    acc = w[seed]
    n_core = 1 if acc >= core_target else None
    # breadth-first; adjacency lists are already in expansion order
    todo = deque([seed])
    while todo and acc < q_weight:
        u = todo.popleft()
        for v, _ in nb.adj[u]:
            if v in seen:
                continue
            seen.add(v)
            order.append(v)
            todo.append(v)
            acc += w[v]
            if n_core is None and acc >= core_target:
                n_core = len(order)
            if acc >= q_weight:
                break
    if acc < q_weight or n_core is None:
        # the whole component fits within Q: nothing to cut
        return set()

    # local ids: 0 = core (source), 1 = exterior (sink), 2.. = ring nodes
    side = {v: 0 for v in order[:n_core]}
    for i, v in enumerate(order[n_core:]):
        side[v] = i + 2
    net = FlowNetwork(len(order) - n_core + 2, 0, 1)
    arc_edge: list[int] = []
    for u in order:
        su = side[u]
        for v, e in nb.adj[u]:
            sv = side.get(v, 1)
            if sv == su:
                continue
            if sv != 1 and v < u:
                continue  # inner edge, added from its lower endpoint
            net.add_arc(su, sv, nb.edge_weight[e])
            arc_edge.append(e)
    if not net.arcs:
        return set()
    res = min_cut(net)
    return {arc_edge[a] for a in res.cut_edges}


def compute_natural_cuts(graph: MobilityGraph, seeds: list[int], q_weight: float,
                         core_fraction: float, n_jobs: int | None = None) -> set[int]:
    """Union of the natural cuts around each seed (edge ids)."""
    nb = _Neighborhoods(graph)
    n_jobs = n_jobs or default_n_jobs()
    if n_jobs > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            cuts = list(ex.map(lambda s: _natural_cut(nb, s, q_weight, core_fraction), seeds))
    else:
        cuts = [_natural_cut(nb, s, q_weight, core_fraction) for s in seeds]
    out: set[int] = set()
    for c in cuts:
        out |= c
    return out


def remove_and_components(graph: MobilityGraph, cut_edges) -> tuple[list[Fragment], np.ndarray]:
    """Contract the components of ``graph`` minus ``cut_edges`` into fragments.

    Fragment ids follow the smallest member node. Returns the fragments and the
    per-node fragment id.
    """
    n = graph.n_nodes
    keep = np.ones(graph.n_edges, dtype=bool)
    cut_edges = np.fromiter(cut_edges, dtype=np.int64)
    keep[cut_edges] = False
    e = graph.edges[keep]
    adj = csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    # renumber by first appearance in node order
    _, first = np.unique(comp, return_index=True)
    remap = np.empty(len(first), dtype=np.int64)
    remap[np.argsort(first)] = np.arange(len(first))
    frag_of = remap[comp]

    weights = np.bincount(frag_of, weights=graph.node_weight, minlength=len(first))
    members: list[list[int]] = [[] for _ in range(len(first))]
    for node, f in enumerate(frag_of.tolist()):
        members[f].append(node)
    frags = [Fragment(i, members[i], float(weights[i])) for i in range(len(first))]
    ew = graph.edge_weight
    fa, fb = frag_of[graph.edges[:, 0]], frag_of[graph.edges[:, 1]]
    cross = fa != fb
    for a, b, w in zip(fa[cross].tolist(), fb[cross].tolist(), ew[cross].tolist()):
        frags[a].neighbors[b] = frags[a].neighbors.get(b, 0.0) + w
        frags[b].neighbors[a] = frags[b].neighbors.get(a, 0.0) + w
    return frags, frag_of


@dataclass
class MergeResult:
    cluster_of: list[int]          # fragment id -> cluster id
    cluster_weights: list[float]
    n_fallback_merges: int = 0
    oversize: list[int] = field(default_factory=list)


def greedy_merge(fragments: list[Fragment], config: PartitionConfig,
                 total_weight: float | None = None) -> MergeResult:
    """Merge fragments into (at most, ideally exactly) ``config.k`` clusters.

    Connected pairs are merged heaviest-edge first while the merged weight
    stays within ``(1 + alpha) * total / k``; ties prefer the lighter result,
    then the lower fragment ids. If more than ``k`` clusters remain, the two
    lightest clusters are merged regardless of adjacency, still under the cap.
    """
    k = config.k
    total = sum(f.weight for f in fragments) if total_weight is None else total_weight
    cap = (1 + config.alpha) * total / k
    tol = 1e-12 * max(total, 1.0)
    n = len(fragments)
    if k > n:
        warnings.warn(f"k={k} exceeds the {n} fragments; each fragment becomes a cluster",
                      stacklevel=2)
    weight = {f.id: f.weight for f in fragments}
    nbrs = {f.id: dict(f.neighbors) for f in fragments}
    parent = {f.id: f.id for f in fragments}
    version = {f.id: 0 for f in fragments}
    size = {f.id: 1 for f in fragments}

    heap = []
    for f in fragments:
        for g, w in f.neighbors.items():
            if f.id < g:
                heap.append((-w, weight[f.id] + weight[g], f.id, g, 0, 0))
    heapq.heapify(heap)

    def merge(a: int, b: int) -> int:
        a, b = min(a, b), max(a, b)
        weight[a] += weight.pop(b)
        size[a] += size.pop(b)
        parent[b] = a
        nb_a, nb_b = nbrs[a], nbrs.pop(b)
        nb_a.pop(b, None)
        nb_b.pop(a, None)
        for c, w in nb_b.items():
            nb_a[c] = nb_a.get(c, 0.0) + w
            nbrs[c].pop(b)
            nbrs[c][a] = nb_a[c]
        version[a] += 1
        del version[b]
        return a

    alive = n
    while alive > k and heap:
        negw, comb, a, b, va, vb = heapq.heappop(heap)
        if version.get(a) != va or version.get(b) != vb:
            continue
        if comb > cap + tol:
            continue
        a = merge(a, b)
        alive -= 1
        for c, w in nbrs[a].items():
            lo, hi = min(a, c), max(a, c)
            heapq.heappush(heap, (-w, weight[a] + weight[c], lo, hi, version[lo], version[hi]))

    n_fallback = 0
    if alive > k:
        light = [(w, i) for i, w in weight.items()]
        heapq.heapify(light)
        while alive > k and len(light) >= 2:
            (wa, a), (wb, b) = heapq.heappop(light), heapq.heappop(light)
            if wa + wb > cap + tol:
                break
            a = merge(a, b)
            alive -= 1
            n_fallback += 1
            heapq.heappush(light, (weight[a], a))
        if n_fallback:
            logger.info("%d merges ignored adjacency to approach k=%d", n_fallback, k)

    def root(x: int) -> int:
        while parent[x] != x:
            x = parent[x]
        return x

    roots = sorted(weight)
    cluster_id = {r: i for i, r in enumerate(roots)}
    cluster_of = [cluster_id[root(f.id)] for f in fragments]
    cluster_weights = [weight[r] for r in roots]
    oversize = [cluster_id[r] for r in roots if size[r] == 1 and weight[r] > cap + tol]
    return MergeResult(cluster_of, cluster_weights, n_fallback, oversize)


def geocuts_partition(graph: MobilityGraph, config: PartitionConfig) -> Partition:
    """Seed, cut, contract and merge; returns a ``Partition`` tagged ``geocuts``."""
    check_graph(graph)
    t0 = time.perf_counter()
    k = config.k
    if k == 1:
        part = from_labels(graph, np.zeros(graph.n_nodes, dtype=np.int64), "geocuts")
        part.info.update(cut=0.0, cut_fraction=0.0, n_seeds=0, n_cut_edges=0, n_fragments=1,
                         n_fallback_merges=0, oversize_clusters=[])
        return part
    check_n_clusters(k, graph.n_nodes)
    total = graph.total_weight
    q_weight = total / k
    seeds = _seed_positions(graph, k)
    cuts = compute_natural_cuts(graph, seeds, q_weight, config.core_fraction, config.n_jobs)
    fragments, frag_of = remove_and_components(graph, cuts)
    if len(fragments) > config.max_fragments:
        raise RuntimeError(
            f"contracted graph has {len(fragments)} fragments, above the in-memory "
            f"bound of {config.max_fragments}")
    merged = greedy_merge(fragments, config, total)
    labels = np.asarray(merged.cluster_of, dtype=np.int64)[frag_of]
    info = {
        "n_seeds": len(seeds),
        "n_cut_edges": len(cuts),
        "n_fragments": len(fragments),
        "n_fallback_merges": merged.n_fallback_merges,
    }
    # cluster ids already follow the smallest member cell, so no relabel is needed
    part = from_labels(graph, labels, "geocuts", info, relabel=False)
    part.info["oversize_clusters"] = list(merged.oversize)
    cut, frac = cut_size(graph, part)
    part.info.update(cut=cut, cut_fraction=frac, seconds=time.perf_counter() - t0)
    return part


class GeoCuts(ClusterMixin, BaseEstimator):
    """Balanced geographic partitioning of a :class:`MobilityGraph`.

    Parameters
    ----------
    n_clusters : int
        Target number of clusters ``k``.
    alpha : float
        Balance slack; clusters are capped at ``(1 + alpha) * w(V) / k``.
    core_fraction : float
        Fraction of ``Q = w(V) / k`` grown around each seed before the ring starts.
    random_state : int
        Recorded for reproducibility; the algorithm itself is deterministic.
    n_jobs : int or None
        Worker threads for natural cuts; defaults to ``GEOCUTS_THREADS`` or
        the number of cores.

    Attributes
    ----------
    partition_ : Partition
    labels_ : ndarray of shape (n_nodes,)
        Cluster id of each graph node, in the graph's node order.
    cut_size_, cut_fraction_ : float
    seeds_ : list of CellId
    """

    def __init__(self, n_clusters: int = 20, alpha: float = 0.1, core_fraction: float = 0.1,
                 random_state: int = 0, n_jobs: int | None = None):
        self.n_clusters = n_clusters
        self.alpha = alpha
        self.core_fraction = core_fraction
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self) -> PartitionConfig:
        return PartitionConfig(self.n_clusters, self.alpha, self.core_fraction,
                               self.random_state, self.n_jobs)

    def fit(self, X: MobilityGraph, y=None):
        check_graph(X)
        self.partition_ = geocuts_partition(X, self._config())
        self.labels_ = self.partition_.labels
        self.cut_size_ = self.partition_.info["cut"]
        self.cut_fraction_ = self.partition_.info["cut_fraction"]
        self.seeds_ = select_seeds(X, self.n_clusters) if self.n_clusters > 1 else []
        return self

    def predict(self, X: MobilityGraph):
        """Labels of ``X``'s nodes under the fitted partition."""
        check_is_fitted(self, "partition_")
        return self.partition_.labels_for(X)
