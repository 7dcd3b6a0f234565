"""Geodesic distances and nearest-source assignment on a spherical Earth.

All distances are great-circle distances in kilometres computed with the
haversine formula on a sphere of radius 6371 km. Latitude bands provide
an exact pruning index for nearest-source queries and pairwise
neighbourhood searches: the great-circle distance between two points is
never smaller than the Earth radius times their latitude difference in
radians, so candidates can be skipped once that lower bound exceeds the
best distance found so far. The indexed paths therefore return results
identical to brute force, ties included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateSourceId, DuplicateUnitId, EmptySourceSet

__all__ = [
    "EARTH_RADIUS_KM",
    "GeoPoint",
    "SourceSet",
    "DistanceRecord",
    "haversine_distance",
    "nearest_source",
    "build_distance_table",
    "neighbor_pairs_within",
]

EARTH_RADIUS_KM = 6371.0

# Kilometres per degree of latitude on the reference sphere.
_KM_PER_DEG = EARTH_RADIUS_KM * math.pi / 180.0


def _normalize_longitude(lon: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    wrapped = math.fmod(lon + 180.0, 360.0)
    if wrapped < 0.0:
        wrapped += 360.0
    return wrapped - 180.0


@dataclass(frozen=True)
class GeoPoint:
    """A point on the sphere, latitude/longitude in decimal degrees.

    Longitude is normalized into [-180, 180) on construction; latitude
    must lie in [-90, 90].
    """

    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        lat = float(self.latitude)
        lon = float(self.longitude)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"coordinates must be finite, got ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", _normalize_longitude(lon))


@dataclass(frozen=True)
class SourceSet:
    """An immutable collection of identified point sources.

    Source ids must be unique; the set may be empty at construction but
    nearest-source queries against an empty set raise EmptySourceSet.
    """

    sources: tuple[tuple[str, GeoPoint], ...]

    def __post_init__(self) -> None:
        sources = tuple((str(sid), pt) for sid, pt in self.sources)
        ids = [sid for sid, _ in sources]
        if len(set(ids)) != len(ids):
            dupes = sorted({s for s in ids if ids.count(s) > 1})
            raise DuplicateSourceId(f"duplicate source ids: {dupes}")
        object.__setattr__(self, "sources", sources)

    def __len__(self) -> int:
        return len(self.sources)

    @classmethod
    def from_items(cls, items) -> "SourceSet":
        return cls(tuple((sid, pt) for sid, pt in items))


@dataclass(frozen=True)
class DistanceRecord:
    """Distance from one unit to its nearest source."""

    unit_id: str
    distance_km: float
    nearest_source_id: str


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in kilometres.

    The arcsine argument is clamped to [0, 1] so antipodal and
    coincident points cannot produce domain errors from rounding.
    """
    phi1 = math.radians(a.latitude)
    phi2 = math.radians(b.latitude)
    dphi = phi2 - phi1
    dlam = math.radians(b.longitude - a.longitude)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    h = min(1.0, max(0.0, h))
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def _haversine_to_many(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Vectorized haversine from one point to arrays of points (degrees in)."""
    phi1 = math.radians(lat)
    phi2 = np.radians(lats)
    dphi = phi2 - phi1
    dlam = np.radians(lons - lon)
    h = np.sin(dphi / 2.0) ** 2 + math.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    np.clip(h, 0.0, 1.0, out=h)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(h))


def nearest_source(unit: GeoPoint, sources: SourceSet) -> tuple[str, float]:
    """Return (source_id, distance_km) of the source nearest to ``unit``.

    Exact distance ties are broken by the lexicographically smallest
    source id, which makes the assignment deterministic.
    """
    if len(sources) == 0:
        raise EmptySourceSet("nearest-source query against an empty source set")
    best_id: str | None = None
    best_d = math.inf
    for sid, pt in sources.sources:
        d = haversine_distance(unit, pt)
        if d < best_d or (d == best_d and (best_id is None or sid < best_id)):
            best_d = d
            best_id = sid
    assert best_id is not None
    return best_id, best_d


class _LatBandIndex:
    """Sources sorted by latitude, scanned outward with exact pruning."""

    def __init__(self, sources: SourceSet) -> None:
        entries = sorted(sources.sources, key=lambda e: e[1].latitude)
        self.ids = [sid for sid, _ in entries]
        self.lats = np.array([pt.latitude for _, pt in entries], dtype=float)
        self.lons = np.array([pt.longitude for _, pt in entries], dtype=float)

    def query(self, unit: GeoPoint) -> tuple[str, float]:
        lats, lons, ids = self.lats, self.lons, self.ids
        n = len(ids)
        start = int(np.searchsorted(lats, unit.latitude))
        lo, hi = start - 1, start
        best_d = math.inf
        best_id: str | None = None
        while lo >= 0 or hi < n:
            # Pick the side whose latitude gap is smaller.
            gap_lo = unit.latitude - lats[lo] if lo >= 0 else math.inf
            gap_hi = lats[hi] - unit.latitude if hi < n else math.inf
            if gap_lo <= gap_hi:
                idx, gap = lo, gap_lo
                lo -= 1
            else:
                idx, gap = hi, gap_hi
                hi += 1
            # Latitude difference alone bounds the distance from below;
            # only a strictly larger bound can be pruned, equal bounds
            # may still tie and need the id comparison.
            if gap * _KM_PER_DEG > best_d:
                break
            d = haversine_distance(unit, GeoPoint(lats[idx], lons[idx]))
            sid = ids[idx]
            if d < best_d or (d == best_d and (best_id is None or sid < best_id)):
                best_d = d
                best_id = sid
        assert best_id is not None
        return best_id, best_d


def build_distance_table(
    units: list[tuple[str, GeoPoint]],
    sources: SourceSet,
    use_index: bool = True,
) -> list[DistanceRecord]:
    """Compute each unit's nearest source and distance.

    Parameters
    ----------
    units : list of (unit_id, GeoPoint)
        Unit ids must be unique.
    sources : SourceSet
        Must be non-empty.
    use_index : bool
        When True, use the latitude-band index; results are identical to
        the brute-force scan either way.

    Returns
    -------
    list of DistanceRecord, in the input unit order.
    """
    if len(sources) == 0:
        raise EmptySourceSet("distance table requires at least one source")
    ids = [str(uid) for uid, _ in units]
    if len(set(ids)) != len(ids):
        dupes = sorted({u for u in ids if ids.count(u) > 1})
        raise DuplicateUnitId(f"duplicate unit ids: {dupes}")
    if not units:
        return []
    if use_index:
        index = _LatBandIndex(sources)
        return [
            DistanceRecord(uid, d, sid)
            for (uid, pt), (sid, d) in ((u, index.query(u[1])) for u in units)
        ]
    return [
        DistanceRecord(uid, d, sid)
        for (uid, pt), (sid, d) in ((u, nearest_source(u[1], sources)) for u in units)
    ]


def neighbor_pairs_within(
    lats: np.ndarray, lons: np.ndarray, cutoff_km: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All index pairs (i < j) within ``cutoff_km`` of each other.

    Uses a latitude-sorted sweep: points whose latitude difference alone
    exceeds the cutoff cannot be neighbours, so each point is only
    compared against a narrow band. Returns (i, j, distance_km) arrays.
    """
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    if cutoff_km < 0:
        raise ValueError("cutoff_km must be nonnegative")
    n = lats.size
    if n < 2:
        empty = np.empty(0)
        return empty.astype(int), empty.astype(int), empty
    order = np.argsort(lats, kind="stable")
    slat, slon = lats[order], lons[order]
    max_dlat = cutoff_km / _KM_PER_DEG
    phi = np.radians(slat)
    lam = np.radians(slon)
    cos_phi = np.cos(phi)
    # Unit vectors on the sphere: the pairwise dot product gives the
    # central angle, so one matrix product replaces per-pair trig.
    xyz = np.empty((n, 3))
    xyz[:, 0] = cos_phi * np.cos(lam)
    xyz[:, 1] = cos_phi * np.sin(lam)
    xyz[:, 2] = np.sin(phi)
    dot_cut = math.cos(cutoff_km / EARTH_RADIUS_KM)
    out_i: list[np.ndarray] = []
    out_j: list[np.ndarray] = []
    out_d: list[np.ndarray] = []
    # Rows are processed in blocks sharing one candidate window; a pair
    # (a < b in sorted order) is emitted exactly once, by a's block.
    block = 256
    for start in range(0, n - 1, block):
        stop = min(start + block, n - 1)
        hi = int(np.searchsorted(slat, slat[stop - 1] + max_dlat, side="right"))
        if hi <= start + 1:
            continue
        rows = np.arange(start, stop)
        cols = np.arange(start + 1, hi)
        gram = xyz[rows] @ xyz[cols].T
        mask = (gram >= dot_cut) & (cols[None, :] > rows[:, None])
        r, c = np.nonzero(mask)
        if r.size:
            # half-chord form of the central angle, stable for small
            # separations where arccos of the dot product is not
            half_chord = np.sqrt(np.maximum(0.0, 0.5 - 0.5 * gram[r, c]))
            d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, half_chord))
            out_i.append(order[rows[r]])
            out_j.append(order[cols[c]])
            out_d.append(d)
    if not out_i:
        empty = np.empty(0)
        return empty.astype(int), empty.astype(int), empty
    ii = np.concatenate(out_i)
    jj = np.concatenate(out_j)
    dd = np.concatenate(out_d)
    swap = ii > jj
    ii2 = np.where(swap, jj, ii)
    jj2 = np.where(swap, ii, jj)
    return ii2, jj2, dd
