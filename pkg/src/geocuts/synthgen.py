"""Synthetic mobility data with planted metro structure.

Metro centers are drawn from a scrambled Halton sequence inside the region,
rejecting points closer than ``4 * metro_sigma`` degrees or
``min_separation_km`` to an accepted center. Each
user belongs to a home metro, lives at an anchor point drawn from a Gaussian
of width ``metro_sigma`` around it, and also has one secondary metro picked
with probability proportional to ``1 / distance**2``. Each query is issued
near the anchor (Gaussian of width ``local_sigma``) or, with probability
``travel_prob``, anywhere in the secondary metro (width ``metro_sigma``).
Days are uniform over the 28-day window.

Users are generated in fixed-size blocks, each with its own random stream
derived from ``(rng_seed, block)``, so output does not depend on how blocks
are scheduled.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import qmc

from .graph_builder import N_DAYS, Visits
from .spatial import GridSpec, discretize_many, haversine_km

BLOCK_SIZE = 1024
COORD_DECIMALS = 4


@dataclass(frozen=True)
class SynthConfig:
    rng_seed: int = 0
    n_users: int = 50_000
    n_metros: int = 20
    lat_min: float = 25.0
    lat_max: float = 49.0
    lon_min: float = -125.0
    lon_max: float = -67.0
    metro_sigma: float = 0.4
    local_sigma: float = 0.1
    travel_prob: float = 0.1
    queries_log_mean: float = 2.0
    queries_log_sigma: float = 0.9
    metro_size_skew: float = 0.0
    min_separation_km: float = 450.0
    days: int = N_DAYS

    def __post_init__(self):
        if not 0 <= self.travel_prob <= 0.5:
            raise ValueError(f"travel_prob must lie in [0, 0.5], got {self.travel_prob}")
        if self.n_metros < 1:
            raise ValueError("n_metros must be >= 1")
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        for name in ("metro_sigma", "local_sigma", "queries_log_sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.metro_size_skew < 0:
            raise ValueError("metro_size_skew must be >= 0")
        if self.days != N_DAYS:
            raise ValueError(f"days is fixed at {N_DAYS}")
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError("empty region")

    def grid(self, cell_width: float = 0.25) -> GridSpec:
        return GridSpec(cell_width, self.lat_min, self.lat_max, self.lon_min, self.lon_max)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthData:
    visits: Visits
    metro_centers: np.ndarray      # (n_metros, 2) lat, lon
    metro_shares: np.ndarray
    home_metro: np.ndarray         # per user
    config: SynthConfig

    def ground_truth(self, grid: GridSpec, cells: np.ndarray | None = None):
        """Nearest-metro id for ``cells`` (default: every visited cell).

        Returns ``(cells, metro_id)`` with cells sorted by ``(lat, lon)``.
        """
        if cells is None:
            la, lo, inside = discretize_many(self.visits.lat, self.visits.lon, grid)
            cells = np.unique(np.stack([la[inside], lo[inside]], axis=1), axis=0)
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        return cells, nearest_metro(cells, self.metro_centers, grid.cell_width)


def nearest_metro(cells: np.ndarray, centers: np.ndarray, cell_width: float) -> np.ndarray:
    lat = cells[:, 0:1] * cell_width
    lon = cells[:, 1:2] * cell_width
    d = haversine_km(lat, lon, centers[None, :, 0], centers[None, :, 1])
    return np.argmin(d, axis=1).astype(np.int64)


def place_metros(config: SynthConfig) -> np.ndarray:
    """Metro centers at least ``4 * metro_sigma`` degrees and
    ``min_separation_km`` apart, and ``3 * metro_sigma`` inside the region.

    Raises:
        ValueError: if the region cannot hold ``n_metros`` separated centers.
    """
    s = config.metro_sigma
    lo = np.array([config.lat_min + 3 * s, config.lon_min + 3 * s])
    hi = np.array([config.lat_max - 3 * s, config.lon_max - 3 * s])
    if (hi <= lo).any():
        raise ValueError("region too small for the metro footprint")
    halton = qmc.Halton(d=2, scramble=True, seed=np.random.default_rng([config.rng_seed, 0xC0FFEE]))
    accepted: list[np.ndarray] = []
    for _ in range(64):
        for p in qmc.scale(halton.random(256), lo, hi):
            if all(np.hypot(*(p - c)) >= 4 * s
                   and haversine_km(p[0], p[1], c[0], c[1]) >= config.min_separation_km
                   for c in accepted):
                accepted.append(p)
                if len(accepted) == config.n_metros:
                    return np.array(accepted)
    raise ValueError(
        f"region too small to place {config.n_metros} metros {4 * s:g} degrees "
        f"and {config.min_separation_km:g} km apart")


def _gravity(centers: np.ndarray) -> np.ndarray:
    """Row-stochastic matrix of secondary-metro probabilities, ``~ 1/d**2``."""
    n = len(centers)
    if n == 1:
        return np.ones((1, 1))
    d = haversine_km(centers[:, None, 0], centers[:, None, 1], centers[None, :, 0], centers[None, :, 1])
    with np.errstate(divide="ignore"):
        g = np.where(np.eye(n, dtype=bool), 0.0, 1.0 / d**2)
    return g / g.sum(axis=1, keepdims=True)


def generate(config: SynthConfig) -> SynthData:
    """Generate visit records and the metro layout for ``config``."""
    centers = place_metros(config)
    n_m = config.n_metros
    shares = (np.arange(1, n_m + 1, dtype=float)) ** (-config.metro_size_skew)
    shares /= shares.sum()
    gravity_cdf = np.cumsum(_gravity(centers), axis=1)

    cols = {k: [] for k in ("user", "lat", "lon", "day")}
    homes = []
    for block, start in enumerate(range(0, config.n_users, BLOCK_SIZE)):
        size = min(BLOCK_SIZE, config.n_users - start)
        rng = np.random.default_rng([config.rng_seed, block])
        home = rng.choice(n_m, size=size, p=shares)
        anchor = centers[home] + rng.normal(0.0, config.metro_sigma, (size, 2))
        u = rng.random(size)
        second = (gravity_cdf[home] < u[:, None]).sum(axis=1).clip(max=n_m - 1)
        n_q = np.ceil(rng.lognormal(config.queries_log_mean, config.queries_log_sigma, size))
        n_q = n_q.astype(np.int64).clip(min=1)

        owner = np.repeat(np.arange(size), n_q)
        total = len(owner)
        travel = rng.random(total) < config.travel_prob
        if n_m == 1:
            travel[:] = False
        local = anchor[owner] + rng.normal(0.0, config.local_sigma, (total, 2))
        away = centers[second[owner]] + rng.normal(0.0, config.metro_sigma, (total, 2))
        loc = np.where(travel[:, None], away, local)
        day = rng.integers(0, config.days, total)

        cols["user"].append(owner + start)
        cols["lat"].append(loc[:, 0])
        cols["lon"].append(loc[:, 1])
        cols["day"].append(day)
        homes.append(home)

    user = np.concatenate(cols["user"])
    lat = np.clip(np.round(np.concatenate(cols["lat"]), COORD_DECIMALS), config.lat_min, config.lat_max)
    lon = np.clip(np.round(np.concatenate(cols["lon"]), COORD_DECIMALS), config.lon_min, config.lon_max)
    width = len(str(config.n_users - 1))
    ids = np.char.add("u", np.char.zfill(user.astype(str), width))
    visits = Visits(ids, lat, lon, np.concatenate(cols["day"]), np.ones(len(user), dtype=np.int64))
    return SynthData(visits, centers, shares, np.concatenate(homes), config)
