"""Per-vessel DBSCAN over haversine distance for dwell-point detection."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

from .exceptions import ConfigError, EmptyDatasetError
from .geo import haversine, haversine_matrix
from .ingest import Dataset, VesselTrack
from .types import GeoPoint

NOISE = -1

EPSILON_BOUNDS = (5.0, 70.0)
MIN_POINTS_BOUNDS = (2, 25)


@dataclass(frozen=True)
class DbscanParams:
    epsilon: float
    min_points: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.min_points) != self.min_points or self.min_points < 2:
            raise ConfigError(f"min_points must be an integer >= 2, got {self.min_points}")
        object.__setattr__(self, "min_points", int(self.min_points))


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    return float(haversine(a.lat, a.lon, b.lat, b.lon))


def dbscan(dist: np.ndarray, epsilon: float, min_points: int) -> np.ndarray:
    """DBSCAN on a precomputed distance matrix.

    Closed-ball neighbourhoods (``<= epsilon``) counting the point itself.
    Points are scanned in index order; a border point joins the first
    cluster that reaches it. Returns labels with ``NOISE`` for outliers.
    """
    n = dist.shape[0]
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels
    neighbours = dist <= epsilon
    core = neighbours.sum(axis=1) >= min_points
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            if not core[j]:
                continue
            for k in np.flatnonzero(neighbours[j]):
                if labels[k] == NOISE:
                    labels[k] = cluster
                    queue.append(k)
        cluster += 1
    return labels


def dbscan_vessel(points, params: DbscanParams) -> np.ndarray:
    """Label one vessel's time-ordered points; ``points`` is a list of GeoPoint or an (n, 2) lon/lat array."""
    if len(points) and isinstance(points[0], GeoPoint):
        lon = np.array([p.lon for p in points])
        lat = np.array([p.lat for p in points])
    else:
        arr = np.asarray(points, dtype=float).reshape(-1, 2)
        lon, lat = arr[:, 0], arr[:, 1]
    return dbscan(haversine_matrix(lat, lon), params.epsilon, params.min_points)


def filter_stops(d: Dataset, params: DbscanParams, cache: dict | None = None) -> Dataset:
    """Keep only the records DBSCAN clusters on their own vessel's track.

    ``cache`` optionally memoizes per-track distance matrices across calls
    (keyed by track identity), which repeated tuning trials rely on.
    """
    tracks = []
    for track in d.tracks:
        key = (track.mmsi, len(track), track.records[0].timestamp, track.records[-1].timestamp)
        dist = cache.get(key) if cache is not None else None
        if dist is None:
            ll = track.lonlat()
            dist = haversine_matrix(ll[:, 1], ll[:, 0])
            if cache is not None:
                cache[key] = dist
        labels = dbscan(dist, params.epsilon, params.min_points)
        tracks.append(VesselTrack(track.mmsi, tuple(r for r, lab in zip(track.records, labels) if lab != NOISE)))
    out = d.with_tracks(tracks, "dbscan")
    if out.n_records == 0:
        raise EmptyDatasetError(f"DBSCAN {params} labels every record as noise")
    return out


class StopDetector(ClusterMixin, BaseEstimator):
    """DBSCAN over haversine distance on (lon, lat) rows of a single vessel track.

    Parameters
    ----------
    epsilon : float
        Neighbourhood radius in meters.
    min_points : int
        Neighbourhood size (including the point) required for a core point.
    """

    def __init__(self, epsilon=30.0, min_points=3):
        self.epsilon = epsilon
        self.min_points = min_points

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        params = DbscanParams(self.epsilon, self.min_points)
        dist = haversine_matrix(X[:, 1], X[:, 0])
        self.labels_ = dbscan(dist, params.epsilon, params.min_points)
        self.core_sample_mask_ = (dist <= params.epsilon).sum(axis=1) >= params.min_points
        return self
