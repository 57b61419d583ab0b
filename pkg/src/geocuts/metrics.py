"""Evaluation of partitions as units of geo experiments.

The leakage measure of a cluster ``k`` is its Q-metric

    Q_k = sum_i a_ik**2 / (a_.k * a_i.)

where ``a_ik`` counts user ``i``'s queries in cluster ``k``: the response
measured in ``k`` when only ``k`` is treated and every user responds in
proportion to the share of their queries that were treated. Balance is the
B-metric ``|w|**2 - 1/n`` of the cluster query shares ``w``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .graph_builder import MobilityGraph, as_visits
from .partition import Partition, PartitionError, achieved_alpha, cut_size
from .spatial import GridSpec, discretize_many

DEFAULT_THRESHOLDS = (0.75, 0.8, 0.85)


@dataclass
class UserClusterMatrix:
    """Sparse user x cluster query counts with cached marginals."""

    counts: csr_matrix
    users: np.ndarray

    def __post_init__(self):
        self.counts = csr_matrix(self.counts, dtype=np.int64)
        self.counts.sum_duplicates()
        if self.counts.nnz and self.counts.data.min() < 0:
            raise ValueError("query counts must be non-negative")

    @classmethod
    def from_dense(cls, a) -> "UserClusterMatrix":
        a = np.asarray(a, dtype=np.int64)
        return cls(csr_matrix(a), np.arange(a.shape[0]).astype(str))

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def row_sums(self) -> np.ndarray:
        return np.asarray(self.counts.sum(axis=1)).ravel()

    @property
    def col_sums(self) -> np.ndarray:
        return np.asarray(self.counts.sum(axis=0)).ravel()

    def toarray(self) -> np.ndarray:
        return self.counts.toarray()


def build_matrix(records, partition: Partition, grid: GridSpec) -> UserClusterMatrix:
    """Count each user's queries per cluster.

    Records outside ``grid`` are ignored.

    Raises:
        PartitionError: if records fall in cells the partition does not assign.
    """
    visits = as_visits(records)
    m = partition.n_clusters
    if not len(visits):
        return UserClusterMatrix(csr_matrix((0, m), dtype=np.int64), np.array([], dtype=str))
    lat_i, lon_i, inside = discretize_many(visits.lat, visits.lon, grid)
    users, uidx = np.unique(visits.user_id[inside], return_inverse=True)
    cells = np.stack([lat_i[inside], lon_i[inside]], axis=1)

    order = np.lexsort((partition.cells[:, 1], partition.cells[:, 0]))
    pcells = partition.cells[order]
    keys = (pcells[:, 0] << 32) + (pcells[:, 1] + (1 << 31))
    q = (cells[:, 0] << 32) + (cells[:, 1] + (1 << 31))
    pos = np.clip(np.searchsorted(keys, q), 0, max(len(keys) - 1, 0))
    found = keys[pos] == q if len(keys) else np.zeros(len(q), dtype=bool)
    if not found.all():
        missing = np.unique(cells[~found], axis=0)
        raise PartitionError(f"{len(missing)} visited cells are not assigned, e.g. "
                             f"{[tuple(c) for c in missing[:10].tolist()]}")
    cluster = partition.labels[order][pos]
    a = csr_matrix((visits.count[inside], (uidx.ravel(), cluster)),
                   shape=(len(users), m), dtype=np.int64)
    return UserClusterMatrix(a, users)


def q_values(matrix: UserClusterMatrix) -> np.ndarray:
    """Q-metric of every cluster; NaN for clusters without queries."""
    a = matrix.counts
    row = matrix.row_sums.astype(float)
    col = matrix.col_sums.astype(float)
    sq = a.multiply(a).tocsr().astype(float)
    inv_row = np.divide(1.0, row, out=np.zeros_like(row), where=row > 0)
    num = np.asarray(sq.T @ inv_row).ravel()
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(col > 0, num / col, np.nan)


def q_metric(matrix: UserClusterMatrix, cluster: int) -> float:
    """Q-metric of one cluster.

    Raises:
        ValueError: if the cluster has no queries.
    """
    col = matrix.counts[:, cluster].toarray().ravel().astype(float)
    total = col.sum()
    if total <= 0:
        raise ValueError(f"cluster {cluster} has no queries; Q is undefined")
    row = matrix.row_sums.astype(float)
    nz = col > 0
    return float(np.sum(col[nz] ** 2 / row[nz]) / total)


@dataclass
class QSummary:
    mean: float
    weighted_mean: float
    thresholds: dict[float, float]
    empty_clusters: list[int] = field(default_factory=list)


def q_aggregates(matrix: UserClusterMatrix, thresholds=DEFAULT_THRESHOLDS) -> QSummary:
    """Plain and query-weighted mean Q, plus the share of queries issued from
    clusters with ``Q >= tau`` for each threshold ``tau``. Empty clusters are
    excluded and listed."""
    q = q_values(matrix)
    col = matrix.col_sums.astype(float)
    ok = ~np.isnan(q)
    if not ok.any():
        raise ValueError("no cluster has any queries")
    qs, ws = q[ok], col[ok]
    table = {float(t): float(ws[qs >= t].sum() / ws.sum()) for t in thresholds}
    return QSummary(float(qs.mean()), float(np.dot(qs, ws) / ws.sum()), table,
                    np.flatnonzero(~ok).tolist())


def _shares(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("need at least one cluster")
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("cluster weights must be non-negative with a positive sum")
    return w / w.sum()


def squared_norm(w) -> float:
    """``|w|**2`` of the normalized weight vector."""
    s = _shares(w)
    return float(np.dot(s, s))


def _imbalance(s: np.ndarray) -> float:
    # |s|^2 - 1/n == sum((s - 1/n)^2) when sum(s) == 1
    if (s == s[0]).all():
        return 0.0  # equal weights, whatever the rounding of 1/n
    d = s - 1.0 / len(s)
    return float(np.dot(d, d))


def b_metric(w) -> float:
    """Balance ``|w|**2 - 1/n`` of the cluster weights (normalized internally).

    ``w`` may be a weight vector or a :class:`Partition`, in which case its
    graph cluster weights are used.
    """
    if isinstance(w, Partition):
        w = w.cluster_weights
    return _imbalance(_shares(w))


def treatment_variance(w, p: float, mode: str = "independent") -> float:
    """Variance of the treated population share.

    ``independent``: every cluster is treated with probability ``p``.
    ``fixed_k``: exactly ``k = p * n`` clusters are treated, uniformly at random.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    s = _shares(w)
    n = len(s)
    if mode == "independent":
        return p * (1 - p) * float(np.dot(s, s))
    if mode == "fixed_k":
        k = p * n
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"p * n = {k} is not an integer")
        k = round(k)
        if n == 1:
            return 0.0
        return (k / n) * ((n - k) / (n - 1)) * _imbalance(s)
    raise ValueError(f"unknown mode {mode!r}; expected 'independent' or 'fixed_k'")


def effective_cluster_count(w) -> float:
    """``1 / |w|**2``: equals ``n`` for equal weights and 1 for a single cluster."""
    return 1.0 / squared_norm(w)


def prorated_responses(matrix: UserClusterMatrix, treated=None, dose=None) -> np.ndarray:
    """Measured response of every cluster under linear prorated user response.

    Each user responds with the dose-weighted share of their queries; a
    cluster's response is the query-weighted mean of its users' responses.
    ``treated`` lists clusters given one unit of treatment; ``dose`` instead
    gives every cluster a dose in [0, 1]. NaN for clusters without queries.
    """
    a = matrix.counts.toarray().astype(float)
    if (treated is None) == (dose is None):
        raise ValueError("give exactly one of treated or dose")
    if dose is None:
        dose = np.zeros(a.shape[1])
        dose[list(treated)] = 1.0
    dose = np.asarray(dose, dtype=float)
    if dose.shape != (a.shape[1],):
        raise ValueError(f"dose needs one value per cluster ({a.shape[1]})")
    row = a.sum(axis=1)
    user_resp = np.divide(a @ dose, row, out=np.zeros_like(row), where=row > 0)
    col = a.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (a * user_resp[:, None]).sum(axis=0) / col


@dataclass
class MetricsReport:
    tag: str
    n_clusters: int
    q_per_cluster: list
    q_mean: float
    q_weighted_mean: float
    thresholds: dict
    b_metric: float
    squared_norm: float
    effective_cluster_count: float
    empty_clusters: list
    cut_size: float | None = None
    cut_fraction: float | None = None
    achieved_alpha: float | None = None
    graph_b_metric: float | None = None
    notes: dict = field(default_factory=lambda: {
        "b_metric": "computed on cluster query shares",
        "effective_cluster_count": "1/|w|^2 of cluster query shares (interpretation)",
    })

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q_per_cluster"] = [None if np.isnan(x) else float(x) for x in self.q_per_cluster]
        d["thresholds"] = {f"{k:g}": v for k, v in self.thresholds.items()}
        return d


def evaluate(records, partition: Partition, grid: GridSpec, graph: MobilityGraph | None = None,
             thresholds=DEFAULT_THRESHOLDS, tag: str | None = None) -> MetricsReport:
    """Q and B metrics of ``partition`` on raw query counts, plus cut statistics
    when the graph is given."""
    matrix = build_matrix(records, partition, grid)
    q = q_values(matrix)
    summary = q_aggregates(matrix, thresholds)
    col = matrix.col_sums
    report = MetricsReport(
        tag=tag or partition.source,
        n_clusters=partition.n_clusters,
        q_per_cluster=q.tolist(),
        q_mean=summary.mean,
        q_weighted_mean=summary.weighted_mean,
        thresholds=summary.thresholds,
        b_metric=b_metric(col),
        squared_norm=squared_norm(col),
        effective_cluster_count=effective_cluster_count(col),
        empty_clusters=summary.empty_clusters,
    )
    if graph is not None:
        report.cut_size, report.cut_fraction = cut_size(graph, partition)
        report.achieved_alpha = achieved_alpha(partition)
        report.graph_b_metric = b_metric(partition.cluster_weights)
    return report
