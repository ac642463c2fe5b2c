"""Shared domain model: points, AIS records, regions of interest and port configuration."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError, RecordRejected
from .planar import is_simple_ring, points_in_polygon, shoelace_area

HEADING_UNAVAILABLE = 511
NAV_STATUS_MOORED = 5
CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


class VesselType(str, enum.Enum):
    CARGO = "Cargo"
    TANKER = "Tanker"
    PASSENGER = "Passenger"
    FISHING = "Fishing"
    OTHER = "Other"

    @classmethod
    def parse(cls, value) -> "VesselType":
        """Accept an enum name, a display name or an AIS ship-type code."""
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)) or (isinstance(value, str) and value.strip().isdigit()):
            return cls.from_code(int(value))
        text = str(value).strip().lower()
        for member in cls:
            if member.value.lower() == text:
                return member
        return cls.OTHER

    @classmethod
    def from_code(cls, code: int) -> "VesselType":
        if 70 <= code <= 79:
            return cls.CARGO
        if 80 <= code <= 89:
            return cls.TANKER
        if 60 <= code <= 69:
            return cls.PASSENGER
        if code == 30:
            return cls.FISHING
        return cls.OTHER


@dataclass(frozen=True)
class AisRecord:
    """One normalized AIS message.

    Dimensions ``dim_a``..``dim_d`` are the distances in meters from the
    receiver to bow, stern, port side and starboard side.
    """

    mmsi: int
    timestamp: float
    lat: float
    lon: float
    speed_over_ground: float
    heading: float
    nav_status: int
    vessel_type: VesselType
    dim_a: Optional[float] = None
    dim_b: Optional[float] = None
    dim_c: Optional[float] = None
    dim_d: Optional[float] = None

    @property
    def position(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)

    @property
    def dimensions(self):
        return (self.dim_a, self.dim_b, self.dim_c, self.dim_d)

    @property
    def has_dimensions(self) -> bool:
        return all(d is not None for d in self.dimensions)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vessel_type"] = self.vessel_type.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AisRecord":
        def opt(key):
            v = d.get(key)
            if v is None or v == "":
                return None
            return float(v)

        if "position" in d and isinstance(d["position"], dict):
            lat, lon = d["position"]["lat"], d["position"]["lon"]
        else:
            lat, lon = d["lat"], d["lon"]
        return cls(
            mmsi=int(d["mmsi"]),
            timestamp=parse_timestamp(d["timestamp"]),
            lat=float(lat),
            lon=float(lon),
            speed_over_ground=float(d["speed_over_ground"]),
            heading=float(d["heading"]),
            nav_status=int(float(d["nav_status"])),
            vessel_type=VesselType.parse(d["vessel_type"]),
            dim_a=opt("dim_a"),
            dim_b=opt("dim_b"),
            dim_c=opt("dim_c"),
            dim_d=opt("dim_d"),
        )


def rejection_reason(record: AisRecord) -> Optional[str]:
    """Name of the first violated record invariant, or None."""
    if not (isinstance(record.lat, (int, float)) and -90.0 <= record.lat <= 90.0):
        return "BadLatitude"
    if not (isinstance(record.lon, (int, float)) and -180.0 <= record.lon <= 180.0):
        return "BadLongitude"
    h = record.heading
    if not (h == HEADING_UNAVAILABLE or 0.0 <= h < 360.0):
        return "BadHeading"
    if not record.speed_over_ground >= 0.0:
        return "BadSpeed"
    present = [d is not None for d in record.dimensions]
    if any(present) and not all(present):
        return "PartialDimensions"
    if all(present) and any(d < 0 for d in record.dimensions):
        return "NegativeDimension"
    return None


def validate_record(record: AisRecord) -> AisRecord:
    """Return ``record`` unchanged, or raise :class:`RecordRejected`."""
    reason = rejection_reason(record)
    if reason is not None:
        raise RecordRejected(reason)
    return record


@dataclass(frozen=True)
class RoiPolygon:
    """Simple polygon given as an open ring of vertices (closing vertex dropped)."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple(v if isinstance(v, GeoPoint) else GeoPoint(lat=v[1], lon=v[0]) for v in self.vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        if len(set(verts)) < 3:
            raise ConfigError("ROI ring needs at least 3 distinct vertices")
        object.__setattr__(self, "vertices", verts)
        if not is_simple_ring(self.ring):
            raise ConfigError("ROI ring is self-intersecting")

    @property
    def ring(self) -> np.ndarray:
        """Open ring as an (n, 2) array of (lon, lat)."""
        return np.array([(v.lon, v.lat) for v in self.vertices], dtype=float)

    def contains(self, lon, lat) -> np.ndarray:
        pts = np.column_stack([np.atleast_1d(lon), np.atleast_1d(lat)])
        return points_in_polygon(pts, self.ring)

    @property
    def centroid(self) -> GeoPoint:
        r = self.ring
        return GeoPoint(lat=float(r[:, 1].mean()), lon=float(r[:, 0].mean()))

    @property
    def area_deg2(self) -> float:
        return shoelace_area(self.ring)

    def to_geojson(self, properties=None) -> dict:
        coords = [[v.lon, v.lat] for v in self.vertices]
        coords.append(coords[0])
        return {
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [coords]},
            "properties": dict(properties or {}),
        }

    @classmethod
    def from_geojson(cls, obj) -> "RoiPolygon":
        """Accept a Feature, a bare Polygon geometry or a one-feature FeatureCollection."""
        if obj.get("type") == "FeatureCollection":
            feats = obj.get("features", [])
            if len(feats) != 1:
                raise ConfigError("ROI FeatureCollection must contain exactly one feature")
            obj = feats[0]
        geom = obj["geometry"] if obj.get("type") == "Feature" else obj
        if geom.get("type") != "Polygon":
            raise ConfigError(f"ROI geometry must be a Polygon, got {geom.get('type')}")
        outer = geom["coordinates"][0]
        return cls(tuple(GeoPoint(lat=float(c[1]), lon=float(c[0])) for c in outer))


def point_in_roi(p: GeoPoint, roi: RoiPolygon) -> bool:
    """True iff ``p`` lies inside ``roi`` or on its boundary."""
    return bool(roi.contains(p.lon, p.lat)[0])


class PortSizeClass(str, enum.Enum):
    SMALL = "Small"
    LARGE = "Large"


DEFAULT_NCOMPONENTS_RANGE = {PortSizeClass.SMALL: (3, 50), PortSizeClass.LARGE: (30, 250)}


def parse_timestamp(value) -> float:
    """UTC seconds from a number or an ISO-8601 string (naive strings are UTC)."""
    if isinstance(value, (int, float, np.integer, np.floating)):
        return float(value)
    text = str(value).strip()
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class PortConfig:
    port_name: str
    roi: RoiPolygon
    poi_start: float
    poi_end: float
    port_size_class: PortSizeClass = PortSizeClass.SMALL
    interpolation_period: float = 3600.0
    speed_threshold: float = 3.0
    heading_delta_threshold: float = 10.0
    train_aug_points: int = 10
    eval_aug_points: int = 20
    geohash_enabled: bool = True
    geohash_precision: int = 9
    ncomponents_range: Optional[tuple] = None
    ncomponents_step: int = 1
    tpe_trials: int = 100
    tpe_warm_start: int = 30
    kl_samples: int = 10_000
    mci_samples: int = 10_000
    mci_reruns: int = 200
    # GMM settings for tuning/MDL sweeps and for final evaluation/localization fits
    tune_restarts: int = 2
    tune_tolerance: float = 1e-4
    final_restarts: int = 5
    final_tolerance: float = 1e-5
    max_iterations: int = 500
    covariance_floor: float = 1e-6
    # tuned or hand-supplied hyperparameters for localize/evaluate without a tuning run
    epsilon: Optional[float] = None
    min_points: Optional[int] = None
    n_components: Optional[int] = None
    rng_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "port_size_class", PortSizeClass(self.port_size_class))
        if self.ncomponents_range is None:
            object.__setattr__(self, "ncomponents_range", DEFAULT_NCOMPONENTS_RANGE[self.port_size_class])
        lo, hi = (int(x) for x in self.ncomponents_range)
        object.__setattr__(self, "ncomponents_range", (lo, hi))
        if not self.poi_start < self.poi_end:
            raise ConfigError("poi_start must precede poi_end")
        if lo < 2 or lo > hi:
            raise ConfigError(f"invalid ncomponents_range {self.ncomponents_range}")
        for name in ("tpe_trials", "kl_samples", "mci_samples", "mci_reruns", "tune_restarts",
                     "final_restarts", "max_iterations", "ncomponents_step", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("train_aug_points", "eval_aug_points", "tpe_warm_start"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.interpolation_period <= 0:
            raise ConfigError("interpolation_period must be positive")
        if not 1 <= self.geohash_precision <= 12:
            raise ConfigError("geohash_precision must be in [1, 12]")

    def with_(self, **changes) -> "PortConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {"schema": CONFIG_SCHEMA_VERSION}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "roi":
                v = v.to_geojson()
            elif f.name in ("poi_start", "poi_end"):
                v = format_timestamp(v) if float(v).is_integer() else v
            elif f.name == "port_size_class":
                v = v.value
            elif f.name == "ncomponents_range":
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "PortConfig":
        d = dict(d)
        schema = d.pop("schema", CONFIG_SCHEMA_VERSION)
        if schema != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {schema}")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        roi = d.get("roi")
        if isinstance(roi, str):
            path = Path(roi)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            roi = json.loads(path.read_text())
        if roi is None:
            raise ConfigError("config requires 'roi'")
        d["roi"] = RoiPolygon.from_geojson(roi) if isinstance(roi, dict) else roi
        try:
            d["poi_start"] = parse_timestamp(d["poi_start"])
            d["poi_end"] = parse_timestamp(d["poi_end"])
        except KeyError as exc:
            raise ConfigError(f"config requires {exc}") from None
        if d.get("ncomponents_range") is not None:
            d["ncomponents_range"] = tuple(d["ncomponents_range"])
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PortConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def circular_difference(a, b):
    """Smallest absolute angle between headings in degrees."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.minimum(d, 360.0 - d)


__all__ = [
    "AisRecord",
    "GeoPoint",
    "PortConfig",
    "PortSizeClass",
    "RoiPolygon",
    "VesselType",
    "circular_difference",
    "point_in_roi",
    "rejection_reason",
    "validate_record",
]
