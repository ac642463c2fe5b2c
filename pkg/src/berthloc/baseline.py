"""Mooring-event baseline: DBSCAN over median positions of moored-status runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyDatasetError, NoClustersError
from .geo import haversine_matrix
from .geometry import BerthPolygon, berth_from_points, convex_hull
from .ingest import Dataset, VesselTrack
from .planar import points_in_polygon
from .preprocess import StandardizationTransform
from .stopdetect import NOISE, dbscan
from .types import NAV_STATUS_MOORED, GeoPoint

log = logging.getLogger(__name__)

MOORED_SPEED_LIMIT = 1.0
MIN_EVENT_DURATION = 3600.0
MAX_EVENT_GAP = 6 * 3600.0
CLUSTER_EPSILON = 50.0
CLUSTER_MIN_POINTS = 3


@dataclass(frozen=True)
class MooringEvent:
    mmsi: int
    start: float
    end: float
    records: tuple
    event_id: int
    median: GeoPoint

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class BaselineCluster:
    hull: np.ndarray
    berth: BerthPolygon
    event_ids: tuple


@dataclass(frozen=True)
class BaselineBerthSet:
    clusters: tuple
    noise_event_ids: tuple

    @property
    def berths(self) -> list:
        return [c.berth for c in self.clusters]


def baseline_preprocess(raw: Dataset) -> Dataset:
    """ROI filter, drop moored records moving faster than 1 kn; duplicates were already resolved at ingest."""
    roi = raw.port.roi
    d = raw.map_records(lambda r: bool(roi.contains(r.lon, r.lat)), "baseline_roi")
    d = d.map_records(lambda r: not (r.nav_status == NAV_STATUS_MOORED and r.speed_over_ground > MOORED_SPEED_LIMIT),
                      "baseline_moored_speed")
    if d.n_records == 0:
        raise EmptyDatasetError("no records left after baseline preprocessing")
    return d


def _runs(track: VesselTrack):
    run = []
    for rec in track.records:
        if rec.nav_status != NAV_STATUS_MOORED:
            if run:
                yield run
            run = []
            continue
        if run and rec.timestamp - run[-1].timestamp > MAX_EVENT_GAP:
            yield run
            run = []
        run.append(rec)
    if run:
        yield run


def detect_events(d: Dataset) -> list:
    """Moored-status runs per vessel lasting more than one hour, in (mmsi, time) order."""
    events = []
    for track in d.tracks:
        for run in _runs(track):
            start, end = run[0].timestamp, run[-1].timestamp
            if end - start <= MIN_EVENT_DURATION:
                continue
            med = GeoPoint(lat=float(np.median([r.lat for r in run])), lon=float(np.median([r.lon for r in run])))
            events.append(MooringEvent(track.mmsi, start, end, tuple(run), len(events), med))
    return events


def baseline_cluster(events, port: str = "") -> BaselineBerthSet:
    """DBSCAN (50 m, 3 events) over event medians, then hull and minimum-area rectangle per cluster."""
    if not events:
        raise NoClustersError("no mooring events to cluster")
    lat = np.array([e.median.lat for e in events])
    lon = np.array([e.median.lon for e in events])
    labels = dbscan(haversine_matrix(lat, lon), CLUSTER_EPSILON, CLUSTER_MIN_POINTS)
    if np.all(labels == NOISE):
        raise NoClustersError(f"all {len(events)} events are noise")
    clusters = []
    for k in range(int(labels.max()) + 1):
        idx = np.flatnonzero(labels == k)
        pts = np.column_stack([lon[idx], lat[idx]])
        berth = berth_from_points(pts, port=port, component=k, weight=len(idx) / len(events))
        clusters.append(BaselineCluster(convex_hull(pts), berth, tuple(events[i].event_id for i in idx)))
    noise = tuple(events[i].event_id for i in np.flatnonzero(labels == NOISE))
    return BaselineBerthSet(tuple(clusters), noise)


def baseline_density(berths: BaselineBerthSet, points_lonlat) -> np.ndarray:
    """1.0 where a (lon, lat) point lies inside or on any cluster rectangle, else 0.0."""
    pts = np.atleast_2d(np.asarray(points_lonlat, dtype=float))
    inside = np.zeros(len(pts), dtype=bool)
    for c in berths.clusters:
        inside |= points_in_polygon(pts, np.asarray(c.berth.corners))
    return inside.astype(float)


@dataclass(frozen=True)
class BinaryMembershipModel:
    """Baseline berth set seen as an unnormalized 0/1 density in standardized coordinates."""

    berths: BaselineBerthSet
    transform: StandardizationTransform

    def density(self, points) -> np.ndarray:
        return baseline_density(self.berths, self.transform.invert(points))


def run_baseline(raw: Dataset) -> BaselineBerthSet:
    d = baseline_preprocess(raw)
    events = detect_events(d)
    log.info("baseline: %d mooring events from %d vessels", len(events), len(d.tracks))
    return baseline_cluster(events, port=raw.port.port_name)
