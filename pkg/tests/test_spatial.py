import math

import numpy as np
import pytest
from hilbertcurve.hilbertcurve import HilbertCurve
from hypothesis import given, settings
from hypothesis import strategies as st

from geocuts.spatial import (CellId, GridSpec, OutOfRegionError, cell_distance_km, discretize,
                             discretize_many, haversine_km, hilbert_index, hilbert_indices,
                             round_half_away)

WORLD = GridSpec(0.25, -90, 90, -180, 180)


class TestDiscretize:
    def test_san_francisco(self):
        assert discretize(37.7749, -122.4194, WORLD) == CellId(151, -490)

    def test_origin(self):
        assert discretize(0.0, 0.0, WORLD) == (0, 0)

    def test_rounds_up_past_midpoint(self):
        assert discretize(0.126, 0.0, WORLD) == (1, 0)

    def test_ties_round_away_from_zero(self):
        assert discretize(0.125, -0.125, WORLD) == (1, -1)
        assert round_half_away(2.5) == 3 and round_half_away(-2.5) == -3
        assert list(round_half_away(np.array([0.5, -0.5, 1.49]))) == [1, -1, 1]

    def test_outside_region_raises(self):
        grid = GridSpec(0.25, 0, 10, 0, 10)
        with pytest.raises(OutOfRegionError):
            discretize(10.5, 5, grid)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        lat = rng.uniform(-60, 60, 500)
        lon = rng.uniform(-170, 170, 500)
        la, lo, inside = discretize_many(lat, lon, WORLD)
        assert inside.all()
        for i in range(500):
            assert discretize(lat[i], lon[i], WORLD) == (la[i], lo[i])

    @given(st.integers(-300, 300), st.integers(-700, 700),
           st.sampled_from([0.1, 0.25, 0.5]))
    def test_center_roundtrip(self, a, b, w):
        grid = GridSpec(w, -90, 90, -180, 180)
        lat, lon = grid.center(CellId(a, b))
        if grid.contains(lat, lon):
            assert discretize(lat, lon, grid) == (a, b)


class TestGridSpec:
    def test_invalid(self):
        with pytest.raises(ValueError):
            GridSpec(0, 0, 1, 0, 1)
        with pytest.raises(ValueError):
            GridSpec(0.25, 1, 0, 0, 1)

    def test_too_many_cells(self):
        with pytest.raises(ValueError):
            GridSpec(0.001, -90, 90, -180, 180)

    def test_roundtrip_dict(self):
        g = GridSpec(0.5, 25, 49, -125, -67)
        assert GridSpec.from_dict(g.to_dict()) == g


class TestDistance:
    def test_identity(self):
        assert cell_distance_km(CellId(3, 4), CellId(3, 4), WORLD) == 0.0

    def test_one_degree_longitude_at_equator(self):
        d = cell_distance_km(CellId(0, 0), CellId(0, 4), WORLD)
        assert d == pytest.approx(2 * math.pi * 6371 / 360, rel=1e-9)
        assert d == pytest.approx(111.2, abs=0.05)

    def test_shrinks_with_latitude(self):
        d = cell_distance_km(CellId(151, -490), CellId(151, -489), WORLD)
        assert d == pytest.approx(21.9, abs=0.1)
        expected = 6371 * math.radians(0.25) * math.cos(math.radians(37.75))
        assert d == pytest.approx(expected, rel=1e-4)

    def test_symmetry_and_triangle_exhaustive(self):
        cells = [CellId(a, b) for a in range(-2, 3) for b in range(-2, 3)]
        for x in cells:
            for y in cells:
                dxy = cell_distance_km(x, y, WORLD)
                assert dxy == cell_distance_km(y, x, WORLD)
                assert (dxy == 0) == (x == y)
                for z in cells[::3]:
                    assert dxy <= cell_distance_km(x, z, WORLD) + cell_distance_km(z, y, WORLD) + 1e-9

    def test_haversine_antipodes(self):
        assert haversine_km(0, 0, 0, 180) == pytest.approx(math.pi * 6371)


def _square_grid(side, w=1.0):
    return GridSpec(w, 0, (side - 1) * w, 0, (side - 1) * w)


class TestHilbert:
    def test_order_one(self):
        g = _square_grid(2)
        assert [hilbert_index(CellId(*c), g) for c in [(0, 0), (0, 1), (1, 1), (1, 0)]] == [0, 1, 2, 3]

    def test_full_4x4_is_permutation(self):
        g = _square_grid(4)
        idx = sorted(hilbert_index(CellId(a, b), g) for a in range(4) for b in range(4))
        assert idx == list(range(16))

    @pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 6])
    def test_matches_reference_implementation(self, p):
        side = 2 ** p
        g = _square_grid(side)
        ref = HilbertCurve(p, 2)
        a, b = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        ours = hilbert_indices(a.ravel(), b.ravel(), g)
        theirs = ref.distances_from_points(np.stack([a.ravel(), b.ravel()], axis=1).tolist())
        assert ours.tolist() == list(theirs)

    @pytest.mark.parametrize("side", [2, 8, 64])
    def test_locality(self, side):
        g = _square_grid(side)
        a, b = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        h = hilbert_indices(a.ravel(), b.ravel(), g)
        order = np.argsort(h)
        cells = np.stack([a.ravel(), b.ravel()], axis=1)[order]
        steps = np.abs(np.diff(cells, axis=0)).sum(axis=1)
        assert (steps == 1).all()
        assert h[order].tolist() == list(range(side * side))

    def test_offsets_negative_indices(self):
        g = GridSpec(0.25, -1, 1, -1, 1)
        a, b = np.meshgrid(np.arange(-4, 5), np.arange(-4, 5), indexing="ij")
        h = hilbert_indices(a.ravel(), b.ravel(), g)
        assert len(set(h.tolist())) == 81

    def test_outside_grid_raises(self):
        with pytest.raises(OutOfRegionError):
            hilbert_index(CellId(100, 0), _square_grid(4))

    @settings(max_examples=50)
    @given(st.integers(1, 40), st.integers(1, 40))
    def test_bijective_on_rectangles(self, n, m):
        g = GridSpec(1.0, 0, n - 0.9, 0, m - 0.9)
        assert g.shape == (n, m)
        a, b = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
        h = hilbert_indices(a.ravel(), b.ravel(), g)
        assert len(np.unique(h)) == n * m
        assert h.max() < 4 ** g.hilbert_order
