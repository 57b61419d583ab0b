"""Mobility graph construction from per-user visit records.

Node weight of a cell is the sum over users of ``sqrt(a)`` where ``a`` is the
user's visit count there; the weight of edge ``AB`` is the sum over users of
``sqrt(a * b)``, kept only when the two cell centers are within
``max_edge_km``. Raw weights are then passed through one of the
normalizations ``log`` (``log1p``), ``sqrt`` or ``none``.

All aggregation runs over exact integer counts sorted by (user, cell), so the
resulting floats do not depend on the order of the input records.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .spatial import CellId, GridSpec, discretize_many, haversine_km

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("log", "sqrt", "none")
USER_FILTERS = ("all", "highly_mobile", "highly_active")
N_DAYS = 28
DEFAULT_MAX_EDGE_KM = 300.0
DEFAULT_MAX_CELLS_PER_USER = 64
HIGHLY_ACTIVE_MIN_DAYS = 11  # "more than 10 out of the 28 days"


@dataclass(frozen=True)
class VisitRecord:
    user_id: str
    lat: float
    lon: float
    day: int
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if not 0 <= self.day < N_DAYS:
            raise ValueError(f"day must be in 0..{N_DAYS - 1}, got {self.day}")


@dataclass
class Visits:
    """Column-oriented batch of visit records.

    Every pipeline function accepts either a ``Visits`` or any iterable of
    :class:`VisitRecord`; large inputs should stay columnar.
    """

    user_id: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    day: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        self.user_id = np.asarray(self.user_id).astype(str)
        self.lat = np.asarray(self.lat, dtype=float)
        self.lon = np.asarray(self.lon, dtype=float)
        self.day = np.asarray(self.day, dtype=np.int64)
        self.count = np.asarray(self.count, dtype=np.int64)
        n = len(self.user_id)
        if not all(len(a) == n for a in (self.lat, self.lon, self.day, self.count)):
            raise ValueError("visit columns must have equal length")
        if n and (self.count.min() < 1):
            raise ValueError("visit counts must be >= 1")
        if n and (self.day.min() < 0 or self.day.max() >= N_DAYS):
            raise ValueError(f"day indices must lie in 0..{N_DAYS - 1}")

    def __len__(self) -> int:
        return len(self.user_id)

    def __iter__(self) -> Iterator[VisitRecord]:
        for u, la, lo, d, c in zip(self.user_id, self.lat, self.lon, self.day, self.count):
            yield VisitRecord(str(u), float(la), float(lo), int(d), int(c))

    def take(self, mask_or_index) -> "Visits":
        return Visits(self.user_id[mask_or_index], self.lat[mask_or_index],
                      self.lon[mask_or_index], self.day[mask_or_index],
                      self.count[mask_or_index])

    @classmethod
    def from_records(cls, records: Iterable[VisitRecord]) -> "Visits":
        records = list(records)
        return cls(
            np.array([r.user_id for r in records], dtype=str),
            np.array([r.lat for r in records], dtype=float),
            np.array([r.lon for r in records], dtype=float),
            np.array([r.day for r in records], dtype=np.int64),
            np.array([r.count for r in records], dtype=np.int64),
        )

    @classmethod
    def empty(cls) -> "Visits":
        return cls(np.array([], dtype=str), [], [], [], [])


def as_visits(records) -> Visits:
    if isinstance(records, Visits):
        return records
    return Visits.from_records(records)


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    visits: Mapping[CellId, int]
    active_days: frozenset


@dataclass
class _UserCells:
    """Per-(user, cell) aggregate, sorted by user then cell."""

    users: np.ndarray          # sorted unique user ids
    user: np.ndarray           # index into ``users``
    lat_index: np.ndarray
    lon_index: np.ndarray
    count: np.ndarray          # exact integer visit counts
    n_dropped: int = 0


def _aggregate(visits: Visits, grid: GridSpec) -> _UserCells:
    lat_i, lon_i, inside = discretize_many(visits.lat, visits.lon, grid)
    n_dropped = int((~inside).sum())
    if n_dropped:
        logger.info("dropped %d out-of-region visit records", n_dropped)
    users, uidx = np.unique(visits.user_id[inside], return_inverse=True)
    lat_i, lon_i, cnt = lat_i[inside], lon_i[inside], visits.count[inside]
    if not len(cnt):
        z = np.zeros(0, dtype=np.int64)
        return _UserCells(users, z, z, z, z, n_dropped)
    key = np.stack([uidx.astype(np.int64), lat_i, lon_i], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    counts = np.bincount(inv.ravel(), weights=cnt, minlength=len(uniq))
    return _UserCells(users, uniq[:, 0], uniq[:, 1], uniq[:, 2],
                      np.rint(counts).astype(np.int64), n_dropped)


def _user_mask(visits: Visits, grid: GridSpec, mode: str) -> np.ndarray:
    """Boolean mask over records of users retained by ``mode``."""
    if mode not in USER_FILTERS:
        raise ValueError(f"unknown user filter {mode!r}; expected one of {USER_FILTERS}")
    if mode == "all" or not len(visits):
        return np.ones(len(visits), dtype=bool)
    users, uidx = np.unique(visits.user_id, return_inverse=True)
    uidx = uidx.ravel()
    if mode == "highly_mobile":
        lat_i, lon_i, inside = discretize_many(visits.lat, visits.lon, grid)
        pairs = np.unique(np.stack([uidx[inside], lat_i[inside], lon_i[inside]], axis=1), axis=0)
        n_cells = np.bincount(pairs[:, 0], minlength=len(users))
        keep = n_cells >= 2
    else:
        pairs = np.unique(np.stack([uidx, visits.day], axis=1), axis=0)
        n_days = np.bincount(pairs[:, 0], minlength=len(users))
        keep = n_days >= HIGHLY_ACTIVE_MIN_DAYS
    return keep[uidx]


def filter_visits(records, grid: GridSpec, mode: str = "all") -> Visits:
    """Keep only the records of users passing the ``mode`` filter."""
    visits = as_visits(records)
    return visits.take(_user_mask(visits, grid, mode))


def filter_users(records, mode: str, grid: GridSpec) -> list[UserProfile]:
    """Per-user profiles for the users retained by ``mode``.

    ``highly_mobile`` keeps users seen in at least two distinct cells,
    ``highly_active`` keeps users active on more than 10 distinct days.
    """
    visits = filter_visits(records, grid, mode)
    lat_i, lon_i, inside = discretize_many(visits.lat, visits.lon, grid)
    profiles: dict[str, tuple[dict, set]] = {}
    for u, la, lo, ok, d, c in zip(visits.user_id, lat_i, lon_i, inside,
                                   visits.day, visits.count):
        cells, days = profiles.setdefault(str(u), ({}, set()))
        days.add(int(d))
        if ok:
            cell = CellId(int(la), int(lo))
            cells[cell] = cells.get(cell, 0) + int(c)
    return [UserProfile(u, dict(sorted(cells.items())), frozenset(days))
            for u, (cells, days) in sorted(profiles.items())]


@dataclass(frozen=True, eq=False)
class MobilityGraph:
    """Undirected node- and edge-weighted graph over grid cells.

    Nodes are stored sorted by ``(lat_index, lon_index)``; ``edges`` is an
    ``(m, 2)`` array of node positions with ``i < j``, sorted. Raw (unnormalized)
    weights are kept alongside so that exactly one normalization is ever applied.
    """

    grid: GridSpec
    cells: np.ndarray              # (n, 2) int64
    raw_node_weight: np.ndarray
    edges: np.ndarray              # (m, 2) int64
    raw_edge_weight: np.ndarray
    normalization: str = "none"
    max_edge_km: float = DEFAULT_MAX_EDGE_KM
    user_filter: str = "all"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def n_nodes(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def node_weight(self) -> np.ndarray:
        return _apply_normalization(self.raw_node_weight, self.normalization)

    @property
    def edge_weight(self) -> np.ndarray:
        return _apply_normalization(self.raw_edge_weight, self.normalization)

    @property
    def total_weight(self) -> float:
        return float(self.node_weight.sum())

    def cell_ids(self) -> list[CellId]:
        return [CellId(int(a), int(b)) for a, b in self.cells]

    @property
    def nodes(self) -> dict[CellId, float]:
        return dict(zip(self.cell_ids(), self.node_weight.tolist()))

    @property
    def edge_map(self) -> dict[frozenset, float]:
        ids = self.cell_ids()
        return {frozenset((ids[i], ids[j])): w
                for (i, j), w in zip(self.edges.tolist(), self.edge_weight.tolist())}

    def index_of(self, cells) -> np.ndarray:
        """Node positions of ``cells`` (an ``(k, 2)`` array); -1 when absent."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        if not self.n_nodes:
            return np.full(len(cells), -1, dtype=np.int64)
        keys = _cell_keys(self.cells)
        q = _cell_keys(cells)
        pos = np.searchsorted(keys, q)
        pos = np.clip(pos, 0, len(keys) - 1)
        return np.where(keys[pos] == q, pos, -1)

    def adjacency(self):
        """Symmetric CSR matrix of normalized edge weights."""
        from scipy.sparse import csr_matrix

        n = self.n_nodes
        if not self.n_edges:
            return csr_matrix((n, n))
        i, j = self.edges[:, 0], self.edges[:, 1]
        w = self.edge_weight
        return csr_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    def edge_lengths_km(self) -> np.ndarray:
        w = self.grid.cell_width
        a, b = self.cells[self.edges[:, 0]], self.cells[self.edges[:, 1]]
        return haversine_km(a[:, 0] * w, a[:, 1] * w, b[:, 0] * w, b[:, 1] * w)


def _cell_keys(cells: np.ndarray) -> np.ndarray:
    # lexicographic (lat, lon) order as a single int64; indices are < 2**31
    cells = np.asarray(cells, dtype=np.int64)
    return (cells[:, 0] << 32) + (cells[:, 1] + (1 << 31))


def _apply_normalization(x: np.ndarray, mode: str) -> np.ndarray:
    if mode == "log":
        return np.log1p(x)
    if mode == "sqrt":
        return np.sqrt(x)
    if mode == "none":
        return x
    raise ValueError(f"unknown normalization {mode!r}; expected one of {NORMALIZATIONS}")


def normalize(graph: MobilityGraph, mode: str) -> MobilityGraph:
    """Return ``graph`` with node and edge weights normalized by ``mode``.

    Normalization always starts from the raw weights, so calling this on an
    already-normalized graph replaces the previous normalization rather than
    stacking on top of it.
    """
    if mode not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {mode!r}; expected one of {NORMALIZATIONS}")
    return replace(graph, normalization=mode)


def _user_pairs(user: np.ndarray):
    """All within-user index pairs (i < j) of a user-sorted row array."""
    n = len(user)
    if n < 2:
        z = np.zeros(0, dtype=np.int64)
        return z, z
    starts = np.r_[0, np.flatnonzero(np.diff(user)) + 1]
    ends = np.r_[starts[1:], n]
    group_end = np.repeat(ends, ends - starts)
    n_after = group_end - np.arange(n) - 1
    total = int(n_after.sum())
    left = np.repeat(np.arange(n), n_after)
    offset = np.arange(total) - np.repeat(np.cumsum(n_after) - n_after, n_after)
    return left, left + 1 + offset


def _cap_cells(uc: _UserCells, max_cells: int | None) -> np.ndarray:
    """Mask of (user, cell) rows kept for edge generation: each user's
    ``max_cells`` most-visited cells, ties broken by cell id."""
    n = len(uc.user)
    if max_cells is None or n == 0:
        return np.ones(n, dtype=bool)
    order = np.lexsort((uc.lon_index, uc.lat_index, -uc.count, uc.user))
    u_sorted = uc.user[order]
    starts = np.r_[0, np.flatnonzero(np.diff(u_sorted)) + 1]
    sizes = np.diff(np.r_[starts, n])
    rank = np.arange(n) - np.repeat(starts, sizes)
    keep = np.zeros(n, dtype=bool)
    keep[order[rank < max_cells]] = True
    return keep


def accumulate_weights(records, grid: GridSpec, max_edge_km: float = DEFAULT_MAX_EDGE_KM,
                       max_cells_per_user: int | None = DEFAULT_MAX_CELLS_PER_USER,
                       user_filter: str = "all") -> MobilityGraph:
    """Raw (unnormalized) mobility graph from visit records.

    Args:
        records: ``Visits`` or iterable of :class:`VisitRecord`, or a sequence of
            :class:`UserProfile`.
        grid: lattice used for discretization.
        max_edge_km: edges whose cell centers are farther apart are not created.
        max_cells_per_user: only each user's most-visited cells feed edge
            generation (node weights always use every cell). ``None`` disables.
    """
    if not max_edge_km > 0:
        raise ValueError("max_edge_km must be positive")
    uc = _user_cells(records, grid)
    return _graph_from_user_cells(uc, grid, max_edge_km, max_cells_per_user, user_filter)


def _user_cells(records, grid: GridSpec) -> _UserCells:
    if isinstance(records, Sequence) and records and isinstance(records[0], UserProfile):
        users = sorted(p.user_id for p in records)
        pos = {u: i for i, u in enumerate(users)}
        rows = sorted((pos[p.user_id], c[0], c[1], a) for p in records for c, a in p.visits.items())
        arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
        return _UserCells(np.array(users), arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
    return _aggregate(as_visits(records), grid)


def _graph_from_user_cells(uc: _UserCells, grid, max_edge_km, max_cells_per_user,
                           user_filter) -> MobilityGraph:
    meta = {"n_users": int(len(uc.users)), "n_dropped_records": int(uc.n_dropped)}
    if not len(uc.user):
        return MobilityGraph(grid, np.zeros((0, 2), np.int64), np.zeros(0),
                             np.zeros((0, 2), np.int64), np.zeros(0), "none",
                             float(max_edge_km), user_filter, meta)
    cells, node_of = np.unique(np.stack([uc.lat_index, uc.lon_index], axis=1),
                               axis=0, return_inverse=True)
    node_of = node_of.ravel()
    sqrt_a = np.sqrt(uc.count.astype(float))
    node_w = np.bincount(node_of, weights=sqrt_a, minlength=len(cells))

    keep = _cap_cells(uc, max_cells_per_user)
    rows = np.flatnonzero(keep)
    left, right = _user_pairs(uc.user[rows])
    a, b = rows[left], rows[right]
    na, nb = node_of[a], node_of[b]
    w = grid.cell_width
    ca, cb = cells[na], cells[nb]
    dist = haversine_km(ca[:, 0] * w, ca[:, 1] * w, cb[:, 0] * w, cb[:, 1] * w)
    local = dist <= max_edge_km
    na, nb = na[local], nb[local]
    contrib = np.sqrt((uc.count[a[local]] * uc.count[b[local]]).astype(float))
    lo, hi = np.minimum(na, nb), np.maximum(na, nb)
    if len(lo):
        edges, inv = np.unique(np.stack([lo, hi], axis=1), axis=0, return_inverse=True)
        edge_w = np.bincount(inv.ravel(), weights=contrib, minlength=len(edges))
    else:
        edges, edge_w = np.zeros((0, 2), np.int64), np.zeros(0)
    meta["n_pairs_capped"] = int(len(uc.user) - len(rows))
    return MobilityGraph(grid, cells.astype(np.int64), node_w, edges.astype(np.int64),
                         edge_w, "none", float(max_edge_km), user_filter, meta)


def build_graph(records, grid: GridSpec, mode: str = "all",
                max_edge_km: float = DEFAULT_MAX_EDGE_KM, normalization: str = "log",
                max_cells_per_user: int | None = DEFAULT_MAX_CELLS_PER_USER) -> MobilityGraph:
    """Filter users, accumulate raw weights and normalize."""
    visits = filter_visits(records, grid, mode)
    raw = accumulate_weights(visits, grid, max_edge_km, max_cells_per_user, user_filter=mode)
    if raw.n_edges:
        assert raw.edge_lengths_km().max() <= max_edge_km
    return normalize(raw, normalization)


class MobilityGraphBuilder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`build_graph`.

    ``fit`` builds the graph from visit records and stores it as ``graph_``;
    ``transform`` builds a graph for other records with the same settings.

    Example:
        >>> builder = MobilityGraphBuilder(grid=grid, normalization="log")
        >>> graph = builder.fit_transform(visits)
    """

    def __init__(self, grid: GridSpec | None = None, user_filter: str = "all",
                 max_edge_km: float = DEFAULT_MAX_EDGE_KM, normalization: str = "log",
                 max_cells_per_user: int | None = DEFAULT_MAX_CELLS_PER_USER):
        self.grid = grid
        self.user_filter = user_filter
        self.max_edge_km = max_edge_km
        self.normalization = normalization
        self.max_cells_per_user = max_cells_per_user

    def fit(self, X, y=None):
        if self.grid is None:
            raise ValueError("MobilityGraphBuilder requires a grid")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.user_filter not in USER_FILTERS:
            raise ValueError(f"unknown user filter {self.user_filter!r}")
        self.graph_ = build_graph(X, self.grid, self.user_filter, self.max_edge_km,
                                  self.normalization, self.max_cells_per_user)
        self.n_dropped_records_ = self.graph_.metadata["n_dropped_records"]
        return self

    def transform(self, X):
        check_is_fitted(self, "graph_")
        return build_graph(X, self.grid, self.user_filter, self.max_edge_km,
                           self.normalization, self.max_cells_per_user)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).graph_
