import math

import numpy as np
import pytest

from decaylab.errors import DuplicateSourceId, DuplicateUnitId, EmptySourceSet
from decaylab.geo import (
    EARTH_RADIUS_KM,
    GeoPoint,
    SourceSet,
    build_distance_table,
    haversine_distance,
    nearest_source,
    neighbor_pairs_within,
)

NYC = GeoPoint(40.7128, -74.0060)
LA = GeoPoint(34.0522, -118.2437)


def random_points(rng, n):
    lats = rng.uniform(-90.0, 90.0, n)
    lons = rng.uniform(-180.0, 180.0, n)
    return [GeoPoint(float(a), float(b)) for a, b in zip(lats, lons)]


class TestHaversine:
    def test_known_city_pair(self):
        # fixed reference value for the spherical model with R = 6371 km
        assert haversine_distance(NYC, LA) == pytest.approx(3935.746, abs=1e-3)

    def test_antipodal_is_half_circumference(self):
        a = GeoPoint(0.0, 0.0)
        b = GeoPoint(0.0, 180.0)
        assert haversine_distance(a, b) == pytest.approx(math.pi * EARTH_RADIUS_KM, abs=1e-6)

    def test_pole_to_pole(self):
        n = GeoPoint(90.0, 12.0)
        s = GeoPoint(-90.0, -57.0)
        assert haversine_distance(n, s) == pytest.approx(math.pi * EARTH_RADIUS_KM, abs=1e-6)

    def test_identity_symmetry_triangle_properties(self):
        rng = np.random.default_rng(1234)
        pts = random_points(rng, 3 * 10_000)
        for k in range(0, len(pts), 3):
            a, b, c = pts[k], pts[k + 1], pts[k + 2]
            dab = haversine_distance(a, b)
            assert haversine_distance(a, a) == 0.0
            assert dab == haversine_distance(b, a)
            assert 0.0 <= dab <= math.pi * EARTH_RADIUS_KM + 1e-9
            # triangle inequality with a small float cushion
            assert dab <= haversine_distance(a, c) + haversine_distance(c, b) + 1e-6

    def test_longitude_wrap_equivalence(self):
        a = GeoPoint(10.0, 179.5)
        b = GeoPoint(10.0, -179.5)
        assert haversine_distance(a, b) < 150.0
        c = GeoPoint(10.0, 539.5)  # same meridian as 179.5 + one full turn
        assert haversine_distance(a, c) == pytest.approx(0.0, abs=1e-9)

    def test_invalid_latitude_rejected(self):
        with pytest.raises(ValueError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValueError):
            GeoPoint(float("nan"), 0.0)


class TestNearestSource:
    def test_empty_source_set_raises(self):
        with pytest.raises(EmptySourceSet):
            nearest_source(NYC, SourceSet(()))

    def test_duplicate_source_ids_rejected(self):
        with pytest.raises(DuplicateSourceId):
            SourceSet.from_items([("s1", NYC), ("s1", LA)])

    def test_tie_breaks_to_lexicographically_smaller_id(self):
        unit = GeoPoint(0.0, 0.0)
        same = GeoPoint(1.0, 1.0)
        sources = SourceSet.from_items([("s2", same), ("s1", same)])
        sid, d = nearest_source(unit, sources)
        assert sid == "s1"
        assert d == haversine_distance(unit, same)

    def test_matches_explicit_minimum(self):
        rng = np.random.default_rng(7)
        sources = SourceSet.from_items(
            [(f"s{i:03d}", p) for i, p in enumerate(random_points(rng, 40))]
        )
        for unit in random_points(rng, 50):
            sid, d = nearest_source(unit, sources)
            best = min(
                (haversine_distance(unit, p), i) for i, p in sources.sources
            )
            assert d == pytest.approx(best[0], abs=1e-12)
            assert d == haversine_distance(unit, dict(sources.sources)[sid])


class TestDistanceTable:
    def test_indexed_equals_brute_force(self):
        # the banded index must be a pure optimization: same ids, same
        # distances, bit for bit
        rng = np.random.default_rng(99)
        units = [(f"u{i:04d}", p) for i, p in enumerate(random_points(rng, 1000))]
        sources = SourceSet.from_items(
            [(f"s{i:02d}", p) for i, p in enumerate(random_points(rng, 50))]
        )
        fast = build_distance_table(units, sources, use_index=True)
        slow = build_distance_table(units, sources, use_index=False)
        assert len(fast) == len(slow) == 1000
        for a, b in zip(fast, slow):
            assert a.unit_id == b.unit_id
            assert a.nearest_source_id == b.nearest_source_id
            assert a.distance_km == b.distance_km

    def test_duplicate_unit_ids_rejected(self):
        sources = SourceSet.from_items([("s", NYC)])
        with pytest.raises(DuplicateUnitId):
            build_distance_table([("u", NYC), ("u", LA)], sources)

    def test_empty_units_gives_empty_table(self):
        sources = SourceSet.from_items([("s", NYC)])
        assert build_distance_table([], sources) == []

    def test_clustered_units_near_band_edges(self):
        # units sitting exactly on a shared latitude stress the pruning rule
        sources = SourceSet.from_items(
            [("a", GeoPoint(10.0, 0.0)), ("b", GeoPoint(10.0, 0.6)), ("c", GeoPoint(-60.0, 0.0))]
        )
        units = [(f"u{i}", GeoPoint(10.0, 0.3 + 0.001 * i)) for i in range(20)]
        fast = build_distance_table(units, sources, use_index=True)
        slow = build_distance_table(units, sources, use_index=False)
        assert [(r.nearest_source_id, r.distance_km) for r in fast] == [
            (r.nearest_source_id, r.distance_km) for r in slow
        ]


class TestNeighborPairs:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        n = 300
        lats = rng.uniform(38.0, 41.0, n)
        lons = rng.uniform(-100.0, -96.0, n)
        ii, jj, dd = neighbor_pairs_within(lats, lons, 60.0)
        got = {(int(a), int(b)): float(x) for a, b, x in zip(ii, jj, dd)}
        expected = {}
        for i in range(n):
            for j in range(i + 1, n):
                d = haversine_distance(
                    GeoPoint(lats[i], lons[i]), GeoPoint(lats[j], lons[j])
                )
                if d <= 60.0:
                    expected[(i, j)] = d
        assert set(got) == set(expected)
        for key, d in expected.items():
            assert got[key] == pytest.approx(d, abs=1e-6)

    def test_orders_pairs_i_less_than_j(self):
        rng = np.random.default_rng(5)
        lats = rng.uniform(0.0, 1.0, 100)
        lons = rng.uniform(0.0, 1.0, 100)
        ii, jj, _ = neighbor_pairs_within(lats, lons, 500.0)
        assert np.all(ii < jj)

    def test_no_pairs_beyond_cutoff(self):
        lats = np.array([0.0, 10.0])
        lons = np.array([0.0, 0.0])
        ii, jj, dd = neighbor_pairs_within(lats, lons, 100.0)
        assert ii.size == 0

    def test_tiny_inputs(self):
        ii, jj, dd = neighbor_pairs_within(np.array([1.0]), np.array([2.0]), 10.0)
        assert ii.size == jj.size == dd.size == 0
