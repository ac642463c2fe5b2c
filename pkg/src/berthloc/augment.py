"""Footprint-based spatial augmentation and geohash decluttering of AIS positions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import geohash
from .exceptions import HeadingUnavailableError
from .geo import METERS_PER_DEGREE
from .ingest import Dataset
from .seeding import as_generator
from .types import HEADING_UNAVAILABLE, AisRecord, GeoPoint


@dataclass(frozen=True)
class Footprint:
    """Vessel rectangle around the AIS receiver, oriented by heading (degrees clockwise from north)."""

    anchor: GeoPoint
    heading: float
    fore: float
    aft: float
    port_side: float
    starboard: float

    @classmethod
    def from_record(cls, rec: AisRecord) -> "Footprint":
        return cls(rec.position, rec.heading, rec.dim_a, rec.dim_b, rec.dim_c, rec.dim_d)


def footprint_offsets(heading, along, cross):
    """Rotate (along-heading, starboard) meter offsets to (east, north)."""
    h = np.radians(heading)
    north = along * np.cos(h) - cross * np.sin(h)
    east = along * np.sin(h) + cross * np.cos(h)
    return east, north


def _sample_offsets(rng, n, fore, aft, port_side, starboard):
    u = rng.uniform(-np.asarray(aft, dtype=float), np.asarray(fore, dtype=float), size=n)
    v = rng.uniform(-np.asarray(port_side, dtype=float), np.asarray(starboard, dtype=float), size=n)
    return u, v


def sample_footprint(fp: Footprint, n: int, random_state=None) -> np.ndarray:
    """``n`` uniform samples over the footprint as an (n, 2) lon/lat array."""
    if fp.heading == HEADING_UNAVAILABLE:
        raise HeadingUnavailableError("cannot orient a footprint without heading")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(random_state)
    u, v = _sample_offsets(rng, n, fp.fore, fp.aft, fp.port_side, fp.starboard)
    east, north = footprint_offsets(fp.heading, u, v)
    lat = fp.anchor.lat + north / METERS_PER_DEGREE
    lon = fp.anchor.lon + east / (METERS_PER_DEGREE * np.cos(np.radians(fp.anchor.lat)))
    return np.column_stack([lon, lat])


@dataclass(frozen=True)
class PointCloud:
    """Generated points with the index of the source record for each point."""

    points: np.ndarray
    record_ids: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def source_counts(self) -> dict:
        ids, counts = np.unique(self.record_ids, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    def save(self, path) -> None:
        with Path(path).open("w") as fh:
            for (lon, lat), rid in zip(self.points, self.record_ids):
                fh.write(json.dumps({"lon": float(lon), "lat": float(lat), "record": int(rid)}) + "\n")

    @classmethod
    def load(cls, path) -> "PointCloud":
        rows = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        pts = np.array([(r["lon"], r["lat"]) for r in rows], dtype=float).reshape(-1, 2)
        return cls(pts, np.array([r["record"] for r in rows], dtype=int))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.empty((0, 2)), np.empty(0, dtype=int))


def augment_dataset(d: Dataset, n_per_record: int, random_state=None) -> PointCloud:
    """Replace each record by ``n_per_record`` footprint samples.

    With ``n_per_record == 0`` the record positions themselves are returned
    (augmentation disabled). Samples are drawn in one vectorized pass in
    dataset record order, so the result depends only on the seed and the data.
    """
    records = list(d.records())
    if not records:
        return PointCloud.empty()
    anchors = np.array([(r.lon, r.lat) for r in records], dtype=float)
    if n_per_record == 0:
        return PointCloud(anchors, np.arange(len(records)))
    if any(r.heading == HEADING_UNAVAILABLE for r in records):
        raise HeadingUnavailableError("dataset contains records without heading")
    rng = as_generator(random_state)
    dims = np.array([r.dimensions for r in records], dtype=float)
    heading = np.array([r.heading for r in records], dtype=float)
    rep = np.repeat(np.arange(len(records)), n_per_record)
    u, v = _sample_offsets(rng, len(rep), dims[rep, 0], dims[rep, 1], dims[rep, 2], dims[rep, 3])
    east, north = footprint_offsets(heading[rep], u, v)
    lat0 = anchors[rep, 1]
    lat = lat0 + north / METERS_PER_DEGREE
    lon = anchors[rep, 0] + east / (METERS_PER_DEGREE * np.cos(np.radians(lat0)))
    return PointCloud(np.column_stack([lon, lat]), rep)


def snap_cloud(c: PointCloud, precision: int = 9) -> PointCloud:
    """Snap to geohash cell centers, dropping repeats of a cell within one source record."""
    if len(c) == 0:
        return c
    idx = geohash.cell_indices(c.points, precision)
    keys = np.column_stack([c.record_ids, idx])
    _, first = np.unique(keys, axis=0, return_index=True)
    first = np.sort(first)
    return PointCloud(geohash.cell_centers(idx[first], precision), c.record_ids[first])


class FootprintAugmenter(BaseEstimator):
    """Dataset -> point cloud step with the augmentation and geohash settings as parameters."""

    def __init__(self, n_points=10, geohash_enabled=True, geohash_precision=9, random_state=None):
        self.n_points = n_points
        self.geohash_enabled = geohash_enabled
        self.geohash_precision = geohash_precision
        self.random_state = random_state

    def fit(self, X=None, y=None):
        return self

    def transform(self, d: Dataset) -> PointCloud:
        cloud = augment_dataset(d, self.n_points, self.random_state)
        if self.geohash_enabled:
            cloud = snap_cloud(cloud, self.geohash_precision)
        return cloud

    def fit_transform(self, d, y=None):
        return self.fit(d).transform(d)
