import numpy as np
import pytest
from scipy.sparse import csr_matrix

from geocuts.graph_builder import build_graph, filter_visits
from geocuts.metrics import evaluate
from geocuts.baselines import grid_partition
from geocuts.partition import cut_size, from_labels
from geocuts.partitioner import PartitionConfig, geocuts_partition
from geocuts.spatial import discretize_many
from geocuts.synthgen import SynthConfig, generate, place_metros


def _truth_partition(data, graph):
    _, metro = data.ground_truth(graph.grid, graph.cells)
    return from_labels(graph, metro, "truth", relabel=False)


def test_deterministic():
    cfg = SynthConfig(rng_seed=11, n_users=3000)
    a, b = generate(cfg), generate(cfg)
    for f in ("user_id", "lat", "lon", "day", "count"):
        assert getattr(a.visits, f).tobytes() == getattr(b.visits, f).tobytes()
    assert np.array_equal(a.metro_centers, b.metro_centers)


def test_seed_changes_output():
    a = generate(SynthConfig(rng_seed=1, n_users=500))
    b = generate(SynthConfig(rng_seed=2, n_users=500))
    assert not np.array_equal(a.metro_centers, b.metro_centers)


def test_prefix_stable_across_user_counts():
    # block streams: the first block does not depend on how many users follow
    small = generate(SynthConfig(rng_seed=4, n_users=1024))
    big = generate(SynthConfig(rng_seed=4, n_users=2048))
    n = len(small.visits)
    assert np.array_equal(small.visits.lat, big.visits.lat[:n])
    assert np.array_equal(small.home_metro, big.home_metro[:1024])


def test_records_valid():
    cfg = SynthConfig(rng_seed=5, n_users=2000)
    v = generate(cfg).visits
    assert v.day.min() >= 0 and v.day.max() <= 27
    assert (v.count >= 1).all()
    assert v.lat.min() >= cfg.lat_min and v.lat.max() <= cfg.lat_max
    assert v.lon.min() >= cfg.lon_min and v.lon.max() <= cfg.lon_max
    assert len(np.unique(v.user_id)) == 2000


def test_metro_separation():
    cfg = SynthConfig(rng_seed=3)
    c = place_metros(cfg)
    assert len(c) == 20
    from geocuts.spatial import haversine_km
    for i in range(20):
        for j in range(i + 1, 20):
            assert np.hypot(*(c[i] - c[j])) >= 4 * cfg.metro_sigma
            assert haversine_km(c[i, 0], c[i, 1], c[j, 0], c[j, 1]) >= cfg.min_separation_km


@pytest.mark.parametrize("kw", [dict(travel_prob=0.9), dict(travel_prob=-0.1), dict(n_metros=0),
                                dict(metro_sigma=0.0), dict(n_users=0), dict(lat_min=50.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)


def test_region_too_small():
    with pytest.raises(ValueError, match="region too small"):
        place_metros(SynthConfig(n_metros=50, lat_min=0, lat_max=5, lon_min=0, lon_max=5))


def test_no_travel_gives_zero_cut():
    cfg = SynthConfig(rng_seed=2, n_users=10000, travel_prob=0.0)
    data = generate(cfg)
    g = build_graph(data.visits, cfg.grid())
    p = geocuts_partition(g, PartitionConfig(cfg.n_metros))
    assert cut_size(g, p)[0] == 0.0


def test_crossing_fraction_matches_two_metro_mixture():
    q = 0.2
    cfg = SynthConfig(rng_seed=1, travel_prob=q)
    data = generate(cfg)
    grid = cfg.grid()
    v = filter_visits(data.visits, grid, "highly_mobile")
    la, lo, _ = discretize_many(v.lat, v.lon, grid)
    _, metro = data.ground_truth(grid, np.stack([la, lo], axis=1))
    _, user = np.unique(v.user_id, return_inverse=True)
    user = user.ravel()
    m = csr_matrix((v.count, (user, metro)), shape=(user.max() + 1, cfg.n_metros)).toarray()
    n = m.sum(axis=1).astype(float)
    pairs = n * (n - 1) / 2
    cross = pairs - (m * (m - 1) / 2).sum(axis=1)
    frac = cross.sum() / pairs.sum()
    # ratio estimator standard error (delta method over users)
    resid = cross - frac * pairs
    se = np.sqrt(np.sum(resid ** 2)) / pairs.sum()
    expected = 2 * q * (1 - q) / (q**2 + (1 - q) ** 2 + 2 * q * (1 - q))
    assert abs(frac - expected) <= 3 * se, (frac, expected, se)


def test_truth_q_decreases_with_travel():
    means = []
    for q in (0.0, 0.1, 0.2, 0.3):
        cfg = SynthConfig(rng_seed=6, n_users=8000, travel_prob=q)
        data = generate(cfg)
        g = build_graph(data.visits, cfg.grid())
        means.append(evaluate(data.visits, _truth_partition(data, g), cfg.grid()).q_mean)
    assert all(a > b for a, b in zip(means, means[1:])), means


@pytest.mark.slow
def test_truth_q_beats_grid_over_seeds():
    wins = 0
    for seed in range(5):
        cfg = SynthConfig(rng_seed=seed, n_users=20000)
        data = generate(cfg)
        g = build_graph(data.visits, cfg.grid())
        truth = evaluate(data.visits, _truth_partition(data, g), cfg.grid())
        grid = evaluate(data.visits, grid_partition(g, cfg.n_metros), cfg.grid())
        wins += truth.q_mean >= grid.q_mean
    assert wins == 5
