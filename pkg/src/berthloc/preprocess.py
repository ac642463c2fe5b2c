"""Cleaning ladder, hourly resampling, heading-change filter, vessel split and standardization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DegenerateSpreadError, EmptyDatasetError, FewerThanTwoVesselsError
from .ingest import Dataset, VesselTrack
from .types import HEADING_UNAVAILABLE, VesselType, circular_difference

KEPT_VESSEL_TYPES = frozenset({VesselType.CARGO, VesselType.TANKER})


def clean(d: Dataset, config=None) -> Dataset:
    """Vessel type, speed, then heading/dimension availability filters, in that order."""
    config = config or d.port
    out = d.map_records(lambda r: r.vessel_type in KEPT_VESSEL_TYPES, "vessel_type")
    out = out.map_records(lambda r: r.speed_over_ground < config.speed_threshold, "speed")
    out = out.map_records(
        lambda r: r.heading != HEADING_UNAVAILABLE and r.has_dimensions, "heading_511"
    )
    if out.n_records == 0:
        raise EmptyDatasetError("no records survive cleaning")
    return out


def _interpolate_track(track: VesselTrack, period: float, origin: float) -> VesselTrack:
    latest = {}
    for rec in track.records:
        latest[int(np.floor((rec.timestamp - origin) / period))] = rec
    return VesselTrack(track.mmsi, tuple(latest[b] for b in sorted(latest)))


def interpolate(d: Dataset, period: float | None = None) -> Dataset:
    """Keep the latest record per vessel in each ``period``-second bin anchored at ``poi_start``."""
    period = float(period if period is not None else d.port.interpolation_period)
    origin = d.port.poi_start
    return d.with_tracks([_interpolate_track(t, period, origin) for t in d.tracks], "interpolation")


def _heading_filter_track(track: VesselTrack, threshold: float) -> VesselTrack:
    kept = []
    for rec in track.records:
        if kept and circular_difference(rec.heading, kept[-1].heading) > threshold:
            continue
        kept.append(rec)
    return VesselTrack(track.mmsi, tuple(kept))


def heading_delta_filter(d: Dataset, threshold: float | None = None) -> Dataset:
    """Drop records whose heading differs from the previous retained record by more than ``threshold``."""
    threshold = float(threshold if threshold is not None else d.port.heading_delta_threshold)
    return d.with_tracks([_heading_filter_track(t, threshold) for t in d.tracks], "heading_delta")


@dataclass(frozen=True)
class SplitPair:
    split_a: Dataset
    split_b: Dataset


def split(d: Dataset) -> SplitPair:
    """Vessel-exclusive split: rank by descending message count, assign alternately A, B, A, ..."""
    if len(d.tracks) < 2:
        raise FewerThanTwoVesselsError(f"need at least two vessels to split, got {len(d.tracks)}")
    ranked = sorted(d.tracks, key=lambda t: (-len(t), t.mmsi))
    a = sorted(ranked[0::2], key=lambda t: t.mmsi)
    b = sorted(ranked[1::2], key=lambda t: t.mmsi)
    return SplitPair(d.with_tracks(a, "split"), d.with_tracks(b, "split"))


def preprocess_splits(d: Dataset) -> SplitPair:
    """Tuning/evaluation path: clean, split, then per-split resampling and heading filter."""
    pair = split(clean(d))
    return SplitPair(*(heading_delta_filter(interpolate(s)) for s in (pair.split_a, pair.split_b)))


def preprocess_full(d: Dataset) -> Dataset:
    """Inference path: the same per-vessel stages without the split."""
    return heading_delta_filter(interpolate(clean(d)))


@dataclass(frozen=True)
class StandardizationTransform:
    mean_lon: float
    mean_lat: float
    std_lon: float
    std_lat: float

    def apply(self, lonlat):
        lonlat = np.asarray(lonlat, dtype=float)
        return (lonlat - [self.mean_lon, self.mean_lat]) / [self.std_lon, self.std_lat]

    def invert(self, xy):
        xy = np.asarray(xy, dtype=float)
        return xy * [self.std_lon, self.std_lat] + [self.mean_lon, self.mean_lat]

    @property
    def jacobian(self) -> float:
        """Area scale from degrees^2 to standardized units^2."""
        return 1.0 / (self.std_lon * self.std_lat)

    def to_dict(self) -> dict:
        return {"mean_lon": self.mean_lon, "mean_lat": self.mean_lat,
                "std_lon": self.std_lon, "std_lat": self.std_lat}

    @classmethod
    def from_dict(cls, d) -> "StandardizationTransform":
        return cls(float(d["mean_lon"]), float(d["mean_lat"]), float(d["std_lon"]), float(d["std_lat"]))


def fit_standardizer(lonlat) -> StandardizationTransform:
    """Per-axis mean and population standard deviation of (lon, lat) points."""
    pts = np.asarray(lonlat, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise DegenerateSpreadError("need at least two points to standardize")
    mean = pts.mean(axis=0)
    std = pts.std(axis=0)
    if np.any(std == 0):
        raise DegenerateSpreadError("zero spread on at least one axis")
    return StandardizationTransform(float(mean[0]), float(mean[1]), float(std[0]), float(std[1]))


class Standardizer(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_standardizer` for (lon, lat) arrays."""

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        if X.shape[1] != 2:
            raise ValueError("expected (n, 2) lon/lat array")
        self.transform_ = fit_standardizer(X)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return self.transform_.apply(check_array(X))

    def inverse_transform(self, X):
        check_is_fitted(self, "transform_")
        return self.transform_.invert(check_array(X))
