"""Seeded synthetic AIS traffic with known berth layouts, for closed-loop checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidSpecError
from .geo import TangentPlane
from .geometry import read_geojson_polygons
from .planar import convex_iou, points_in_polygon, shoelace_area
from .types import PortConfig, RoiPolygon, format_timestamp, parse_timestamp

KNOT = 0.514444


@dataclass(frozen=True)
class SynthBerth:
    lat: float
    lon: float
    orientation: float
    length: float
    width: float


@dataclass(frozen=True)
class Anchorage:
    lat: float
    lon: float
    radius: float


@dataclass(frozen=True)
class SynthPort:
    """Port layout and traffic settings. Berth orientation is the bearing of the long side."""

    name: str
    roi: RoiPolygon
    berths: tuple
    anchorages: tuple = ()
    lanes: tuple = ()
    vessels: int = 40
    days: float = 30.0
    seed: int = 0
    start: float = 1_704_067_200.0  # 2024-01-01T00:00:00Z
    jitter_m: float = 5.0
    dropout: float = 0.1
    emit_interval_s: tuple = (120.0, 600.0)
    dwell_hours: tuple = (6.0, 48.0)
    away_days: tuple = (6.0, 14.0)
    transit_speed_kn: tuple = (8.0, 15.0)
    vessel_length_m: tuple = (80.0, 240.0)
    vessel_types: dict = field(default_factory=lambda: {"Cargo": 0.6, "Tanker": 0.4})

    def __post_init__(self):
        if not self.berths:
            raise InvalidSpecError("at least one berth is required")
        if self.vessels < 1 or self.days <= 0:
            raise InvalidSpecError("vessels and days must be positive")
        if not 0 <= self.dropout < 1:
            raise InvalidSpecError("dropout must lie in [0, 1)")
        rings = berth_rings(self)
        for i, ring in enumerate(rings):
            if not np.all(self.roi.contains(ring[:, 0], ring[:, 1])):
                raise InvalidSpecError(f"berth {i} is not inside the ROI")
        plane = self.plane
        xy = [np.column_stack(plane.to_xy(r[:, 0], r[:, 1])) for r in rings]
        for i in range(len(xy)):
            for j in range(i + 1, len(xy)):
                if convex_iou(xy[i], xy[j]) > 0:
                    raise InvalidSpecError(f"berths {i} and {j} overlap")
        if min(b.length for b in self.berths) < self.vessel_length_m[0]:
            raise InvalidSpecError("every berth must fit the shortest vessel")

    @property
    def plane(self) -> TangentPlane:
        c = self.roi.centroid
        return TangentPlane(c.lat, c.lon)

    @property
    def end(self) -> float:
        return self.start + self.days * 86400.0

    @classmethod
    def from_dict(cls, d: dict) -> "SynthPort":
        d = dict(d)
        roi = d.pop("roi")
        roi = RoiPolygon.from_geojson(roi) if isinstance(roi, dict) else RoiPolygon(tuple(map(tuple, roi)))
        try:
            berths = tuple(SynthBerth(**b) for b in d.pop("berths"))
            anch = tuple(Anchorage(**a) for a in d.pop("anchorages", ()))
            lanes = tuple(tuple(tuple(p) for p in lane) for lane in d.pop("lanes", ()))
            if "start" in d:
                d["start"] = parse_timestamp(d["start"])
            for key in ("emit_interval_s", "dwell_hours", "away_days", "transit_speed_kn", "vessel_length_m"):
                if key in d:
                    d[key] = tuple(d[key])
            return cls(roi=roi, berths=berths, anchorages=anch, lanes=lanes, **d)
        except TypeError as exc:
            raise InvalidSpecError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name, "roi": self.roi.to_geojson(),
            "berths": [vars(b) for b in self.berths], "anchorages": [vars(a) for a in self.anchorages],
            "lanes": [[list(p) for p in lane] for lane in self.lanes], "vessels": self.vessels,
            "days": self.days, "seed": self.seed, "start": format_timestamp(self.start),
            "jitter_m": self.jitter_m, "dropout": self.dropout, "emit_interval_s": list(self.emit_interval_s),
            "dwell_hours": list(self.dwell_hours), "away_days": list(self.away_days),
            "transit_speed_kn": list(self.transit_speed_kn), "vessel_length_m": list(self.vessel_length_m),
            "vessel_types": dict(self.vessel_types),
        }

    @classmethod
    def load(cls, path) -> "SynthPort":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise InvalidSpecError(f"cannot read synth spec {path}: {exc}") from exc

    def port_config(self, **overrides) -> PortConfig:
        return PortConfig(port_name=self.name, roi=self.roi, poi_start=self.start, poi_end=self.end, **overrides)


def _berth_axes(orientation):
    t = math.radians(orientation)
    return np.array([math.sin(t), math.cos(t)]), np.array([math.cos(t), -math.sin(t)])


def berth_rings(spec: SynthPort) -> list:
    """Berth rectangles as (4, 2) lon/lat rings."""
    plane = spec.plane
    rings = []
    for b in spec.berths:
        u, v = _berth_axes(b.orientation)
        cx, cy = plane.to_xy(b.lon, b.lat)
        c = np.array([float(cx), float(cy)])
        corners = [c + su * b.length / 2 * u + sv * b.width / 2 * v for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
        corners = np.array(corners)
        lon, lat = plane.to_lonlat(corners[:, 0], corners[:, 1])
        rings.append(np.column_stack([lon, lat]))
    return rings


@dataclass(frozen=True)
class GroundTruth:
    berths: tuple
    labels: tuple  # (mmsi, timestamp, label) aligned with the emitted records

    def to_geojson(self, name: str = "") -> dict:
        feats = []
        for i, ring in enumerate(self.berths):
            closed = np.vstack([ring, ring[:1]])
            feats.append({"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [closed.tolist()]},
                          "properties": {"berth": i, "port": name, "method": "truth"}})
        return {"type": "FeatureCollection", "features": feats}


class _Calendar:
    """Booked [start, end) intervals of one berth."""

    def __init__(self):
        self.slots = []

    def earliest(self, t, duration):
        s = t
        for a, b in sorted(self.slots):
            if s + duration <= a:
                break
            if b > s:
                s = b
        return s

    def book(self, a, b):
        self.slots.append((a, b))


def _bearing(dx, dy):
    return math.degrees(math.atan2(dx, dy)) % 360.0


class _Emitter:
    def __init__(self, spec, rng, plane):
        self.spec, self.rng, self.plane = spec, rng, plane
        self.rows = []

    def times(self, t0, t1):
        lo, hi = self.spec.emit_interval_s
        t = t0 + self.rng.uniform(0, hi)
        out = []
        while t < t1:
            if self.rng.random() >= self.spec.dropout:
                out.append(t)
            t += self.rng.uniform(lo, hi)
        return out

    def emit(self, vessel, t, x, y, sog, heading, status, label):
        lon, lat = self.plane.to_lonlat(x, y)
        rec = {
            "mmsi": vessel["mmsi"], "timestamp": format_timestamp(round(t)),
            "lat": round(float(lat), 7), "lon": round(float(lon), 7),
            "speed_over_ground": round(float(sog), 2), "heading": round(float(heading) % 360.0, 1) % 360.0,
            "nav_status": status, "vessel_type": vessel["type"],
            "dim_a": vessel["dims"][0], "dim_b": vessel["dims"][1],
            "dim_c": vessel["dims"][2], "dim_d": vessel["dims"][3],
        }
        self.rows.append((round(t), vessel["mmsi"], rec, label))

    def transit(self, vessel, t0, path):
        """Move along a polyline of (x, y) meters from ``t0``; returns the arrival time."""
        speed = self.rng.uniform(*self.spec.transit_speed_kn)
        path = np.asarray(path, dtype=float)
        seg = np.diff(path, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        total = float(seglen.sum())
        t1 = t0 + total / (speed * KNOT)
        cum = np.concatenate([[0.0], np.cumsum(seglen)])
        for t in self.times(t0, t1):
            s = (t - t0) * speed * KNOT
            i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
            f = (s - cum[i]) / seglen[i] if seglen[i] > 0 else 0.0
            x, y = path[i] + f * seg[i]
            sog = speed + self.rng.normal(0, 0.2)
            self.emit(vessel, t, x, y, sog, _bearing(*seg[i]), 0, "Transit")
        return t1


def _vessel_dims(rng, spec, max_len, max_beam):
    length = float(np.clip(rng.uniform(*spec.vessel_length_m), spec.vessel_length_m[0], max_len))
    beam = float(np.clip(round(length / 6.5), 10, max_beam))
    length = float(math.floor(length))
    stern = float(round(length * rng.uniform(0.1, 0.3)))
    port_side = float(round(beam * rng.uniform(0.35, 0.65)))
    return (length - stern, stern, port_side, beam - port_side)


def generate(spec: SynthPort):
    """Simulate all vessels; returns (records as dicts in time order, GroundTruth)."""
    rng = np.random.default_rng(spec.seed)
    plane = spec.plane
    em = _Emitter(spec, rng, plane)
    calendars = [_Calendar() for _ in spec.berths]
    berth_xy = [np.array([float(v) for v in plane.to_xy(b.lon, b.lat)]) for b in spec.berths]
    lanes = [np.array([[float(v) for v in plane.to_xy(lo, la)] for lo, la in lane]) for lane in spec.lanes]
    anchor_xy = [np.array([float(v) for v in plane.to_xy(a.lon, a.lat)]) for a in spec.anchorages]
    types, probs = zip(*sorted(spec.vessel_types.items()))
    probs = np.array(probs, dtype=float) / sum(probs)
    max_len = max(b.length for b in spec.berths)
    jit = spec.jitter_m
    max_beam = max(b.width for b in spec.berths) - 2 * jit

    for vi in range(spec.vessels):
        vessel = {"mmsi": 219_000_000 + vi, "type": str(types[rng.choice(len(types), p=probs)])}
        vessel["dims"] = _vessel_dims(rng, spec, max_len, max_beam)
        A, B, C, D = vessel["dims"]
        length, beam = A + B, C + D
        fits = [i for i, b in enumerate(spec.berths) if b.length >= length and b.width - 2 * jit >= beam]
        if not fits:
            raise InvalidSpecError(f"vessel {vi} ({length} m x {beam} m) fits no berth")
        t = spec.start + rng.uniform(0, spec.away_days[1] * 86400.0)
        while t < spec.end:
            dwell = rng.uniform(*spec.dwell_hours) * 3600.0
            lane = lanes[rng.integers(len(lanes))] if lanes else None
            arrive_guess = t + 1800.0
            starts = [calendars[i].earliest(arrive_guess, dwell + 3600.0) for i in fits]
            bi = fits[int(np.argmin(starts))]
            berth, bxy = spec.berths[bi], berth_xy[bi]
            u, v = _berth_axes(berth.orientation)

            # pose of the receiver inside the berth, kept jitter_m away from the edges
            cu = rng.uniform(-(berth.length - length) / 2, (berth.length - length) / 2)
            cv = rng.uniform(-(berth.width - beam) / 2, (berth.width - beam) / 2)
            ru = np.clip(cu - (A - B) / 2, -berth.length / 2 + jit, berth.length / 2 - jit)
            rv = np.clip(cv - (D - C) / 2, -berth.width / 2 + jit, berth.width / 2 - jit)
            pose = bxy + ru * u + rv * v

            entry = lane[0] if lane is not None else pose + 1500.0 * v
            inner = list(lane) if lane is not None else [entry]
            t_arr = em.transit(vessel, t, inner)
            berth_start = calendars[bi].earliest(t_arr, dwell + 3600.0)
            if berth_start - t_arr > 600.0 and anchor_xy:
                ai = int(rng.integers(len(anchor_xy)))
                a_pos = anchor_xy[ai]
                t_anc = em.transit(vessel, t_arr, [inner[-1], a_pos])
                base = rng.uniform(0, 360)
                for ts in em.times(t_anc, berth_start):
                    swing = spec.anchorages[ai].radius * 0.5
                    ang = math.radians(base + 40 * math.sin((ts - t_anc) / 21600.0 * 2 * math.pi))
                    x, y = a_pos + swing * np.array([math.sin(ang), math.cos(ang)])
                    em.emit(vessel, ts, x, y, rng.uniform(0, 0.5), math.degrees(ang) + 180.0, 1, "Anchored")
                leg_from = a_pos
                berth_start = max(berth_start, t_anc)
            else:
                leg_from = inner[-1]
                berth_start = max(berth_start, t_arr)
            leg_time = float(np.hypot(*(pose - leg_from))) / (8.0 * KNOT)
            berth_start = calendars[bi].earliest(berth_start, dwell + leg_time + 3600.0)
            t_at = em.transit(vessel, berth_start, [leg_from, pose])
            t_leave = t_at + dwell
            calendars[bi].book(berth_start, t_leave + 3600.0)
            heading = (berth.orientation + rng.uniform(-2.5, 2.5)) % 360.0
            for ts in em.times(t_at, t_leave):
                off = rng.normal(0, jit / 2.5, 2)
                r = float(np.hypot(*off))
                if r > jit:
                    off *= jit / r
                x, y = pose + off
                h = berth.orientation + np.clip(heading - berth.orientation + rng.normal(0, 0.2), -3, 3)
                em.emit(vessel, ts, x, y, rng.uniform(0, 0.2), h, 5, f"AtBerth({bi})")
            out_path = [pose] + list(reversed(inner))
            t = em.transit(vessel, t_leave, out_path) + rng.uniform(*spec.away_days) * 86400.0

    rows = sorted((r for r in em.rows if spec.start <= r[0] < spec.end), key=lambda r: (r[0], r[1]))
    records = [r[2] for r in rows]
    labels = tuple((r[1], r[0], r[3]) for r in rows)
    return records, GroundTruth(tuple(berth_rings(spec)), labels)


def write_outputs(spec: SynthPort, ais_path, truth_path, labels_path=None):
    records, truth = generate(spec)
    with Path(ais_path).open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    Path(truth_path).write_text(json.dumps(truth.to_geojson(spec.name), indent=1, sort_keys=True) + "\n")
    if labels_path is not None:
        with Path(labels_path).open("w") as fh:
            for mmsi, ts, label in truth.labels:
                fh.write(json.dumps({"mmsi": mmsi, "timestamp": format_timestamp(ts), "label": label}) + "\n")
    return records, truth


@dataclass(frozen=True)
class TruthScore:
    recall: float
    precision: float
    mean_center_offset_m: float
    matches: tuple  # (truth index, prediction index, iou)
    n_truth: int
    n_predicted: int

    def to_dict(self) -> dict:
        return {"recall": self.recall, "precision": self.precision,
                "mean_center_offset_m": self.mean_center_offset_m, "n_truth": self.n_truth,
                "n_predicted": self.n_predicted,
                "matches": [{"truth": t, "predicted": p, "iou": iou} for t, p, iou in self.matches]}


def _rings_of(obj):
    if isinstance(obj, GroundTruth):
        return list(obj.berths)
    if isinstance(obj, (dict, str, Path)):
        return read_geojson_polygons(obj)
    return [np.asarray(getattr(b, "corners", b), dtype=float) for b in obj]


def score_against_truth(predicted, truth, iou_threshold: float = 0.3) -> TruthScore:
    """Greedy one-to-one matching of predicted and true berth polygons by IoU.

    Pairs are taken in decreasing IoU order; a pair counts when its IoU is at
    least ``iou_threshold``. Areas are measured on a tangent plane at the
    mean truth vertex.
    """
    pred = _rings_of(predicted)
    true = _rings_of(truth)
    if not true:
        raise InvalidSpecError("ground truth has no berths")
    allv = np.vstack(true)
    plane = TangentPlane(allv[:, 1].mean(), allv[:, 0].mean())

    def xy(ring):
        x, y = plane.to_xy(ring[:, 0], ring[:, 1])
        return np.column_stack([x, y])

    P = [xy(r) for r in pred]
    T = [xy(r) for r in true]
    iou = np.array([[convex_iou(t, p) for p in P] for t in T]).reshape(len(T), len(P))
    matches, used_t, used_p = [], set(), set()
    for flat in np.argsort(-iou, axis=None, kind="stable"):
        i, j = divmod(int(flat), len(P))
        if iou[i, j] < iou_threshold:
            break
        if i in used_t or j in used_p:
            continue
        used_t.add(i)
        used_p.add(j)
        matches.append((i, j, float(iou[i, j])))
    offsets = [float(np.hypot(*(_centroid(T[i]) - _centroid(P[j])))) for i, j, _ in matches]
    return TruthScore(
        recall=len(matches) / len(T),
        precision=len(matches) / len(P) if P else 0.0,
        mean_center_offset_m=float(np.mean(offsets)) if offsets else math.nan,
        matches=tuple(sorted(matches)),
        n_truth=len(T),
        n_predicted=len(P),
    )


def _centroid(ring):
    x, y = ring[:, 0], ring[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = cr.sum() / 2
    if abs(a) < 1e-12:
        return ring.mean(axis=0)
    return np.array([((x + xn) * cr).sum() / (6 * a), ((y + yn) * cr).sum() / (6 * a)])


def record_inside_label(records, truth: GroundTruth) -> bool:
    """True when every AtBerth record lies in its labelled berth polygon."""
    for rec, (_, _, label) in zip(records, truth.labels):
        if label.startswith("AtBerth("):
            i = int(label[8:-1])
            if not points_in_polygon([[rec["lon"], rec["lat"]]], truth.berths[i])[0]:
                return False
    return True


def demo_port(seed: int = 0, vessels: int = 40, days: float = 30.0, **overrides) -> SynthPort:
    """Five-berth harbour with one entrance lane and an offshore anchorage outside the ROI."""
    lat0, lon0 = 57.70, 11.90
    plane = TangentPlane(lat0, lon0)

    def ll(x, y):
        lon, lat = plane.to_lonlat(x, y)
        return float(lon), float(lat)

    roi = RoiPolygon(tuple(ll(x, y) for x, y in ((-900, -700), (900, -700), (900, 700), (-900, 700))))
    layout = [  # x, y, orientation, length, width
        (-550, 420, 90.0, 260.0, 45.0),
        (-150, 420, 90.0, 300.0, 45.0),
        (280, 420, 90.0, 240.0, 45.0),
        (600, 80, 0.0, 280.0, 45.0),
        (-600, -250, 60.0, 250.0, 45.0),
    ]
    berths = []
    for x, y, o, L, W in layout:
        lon, lat = ll(x, y)
        berths.append(SynthBerth(lat=lat, lon=lon, orientation=o, length=L, width=W))
    lane = (ll(0, -1200), ll(0, -400), ll(0, 100))
    anch = (Anchorage(*reversed(ll(-400, -1500)), radius=150.0),)
    kw = dict(name="synthport", roi=roi, berths=tuple(berths), anchorages=anch, lanes=(lane,),
              vessels=vessels, days=days, seed=seed)
    kw.update(overrides)
    return SynthPort(**kw)
