"""Convex hulls, minimum-area rectangles and berth polygons from mixture components."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import EmptyDataError
from .geo import TangentPlane
from .mixture import GmmModel, hard_assign
from .types import GeoPoint

log = logging.getLogger(__name__)

MARKER_BUFFER_M = 5.0
_REL_TIE = 1e-12


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices by Andrew's monotone chain.

    Collinear boundary points are dropped. One distinct point gives a
    single vertex, collinear inputs give the two segment endpoints.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts
    ordered = [tuple(p) for p in pts]  # np.unique sorts lexicographically

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(ordered)
    upper = half(reversed(ordered))
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=float)


@dataclass(frozen=True)
class PlanarRect:
    """Rectangle in a planar frame; ``angle`` is the long side's direction, degrees CCW from +x in [0, 180)."""

    center: tuple
    half_length: float
    half_width: float
    angle: float

    @property
    def area(self) -> float:
        return 4.0 * self.half_length * self.half_width

    def axes(self):
        t = math.radians(self.angle)
        return np.array([math.cos(t), math.sin(t)]), np.array([-math.sin(t), math.cos(t)])

    def corners(self) -> np.ndarray:
        u, v = self.axes()
        c = np.asarray(self.center, dtype=float)
        L, W = self.half_length, self.half_width
        return np.array([c - L * u - W * v, c + L * u - W * v, c + L * u + W * v, c - L * u + W * v])

    def contains(self, points, tol=1e-9) -> np.ndarray:
        u, v = self.axes()
        d = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.center, dtype=float)
        return (np.abs(d @ u) <= self.half_length + tol) & (np.abs(d @ v) <= self.half_width + tol)

    def buffered(self, minimum: float) -> "PlanarRect":
        return PlanarRect(self.center, max(self.half_length, minimum), max(self.half_width, minimum), self.angle)


def _box_at(pts, theta):
    """Axis-aligned box of ``pts`` in the frame rotated by ``theta`` radians."""
    u = np.array([math.cos(theta), math.sin(theta)])
    v = np.array([-math.sin(theta), math.cos(theta)])
    a, b = pts @ u, pts @ v
    return a.min(), a.max(), b.min(), b.max(), u, v


def rect_area_at(points, theta) -> float:
    a0, a1, b0, b1, _, _ = _box_at(np.asarray(points, dtype=float), theta)
    return (a1 - a0) * (b1 - b0)


def min_area_rect(points) -> PlanarRect:
    """Minimum-area enclosing rectangle by rotating calipers over hull edges.

    Ties between equal-area candidates go to the smallest edge angle.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("min_area_rect needs at least one point")
    hull = convex_hull(pts)
    if len(hull) == 1:
        return PlanarRect((float(hull[0, 0]), float(hull[0, 1])), 0.0, 0.0, 0.0)
    edges = np.roll(hull, -1, axis=0) - hull
    if len(hull) == 2:
        edges = edges[:1]
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), math.pi / 2))
    best = None
    for theta in angles:
        a0, a1, b0, b1, u, v = _box_at(hull, theta)
        area = (a1 - a0) * (b1 - b0)
        if best is None or area < best[0] * (1 - _REL_TIE) - 1e-300:
            best = (area, theta, a0, a1, b0, b1, u, v)
    _, theta, a0, a1, b0, b1, u, v = best
    center = u * (a0 + a1) / 2 + v * (b0 + b1) / 2
    len_u, len_v = (a1 - a0) / 2, (b1 - b0) / 2
    angle = math.degrees(theta)
    if len_v > len_u:
        len_u, len_v = len_v, len_u
        angle += 90.0
    return PlanarRect((float(center[0]), float(center[1])), float(len_u), float(len_v), angle % 180.0)


@dataclass(frozen=True)
class RotatedRect:
    """Geographic rectangle; ``angle`` is the bearing of the long side, degrees clockwise from north in [0, 180)."""

    center: GeoPoint
    half_length: float
    half_width: float
    angle: float


@dataclass(frozen=True)
class BerthPolygon:
    rect: RotatedRect
    corners: tuple
    component: int
    weight: float
    n_points: int
    port: str
    degenerate: bool = False

    def ring(self) -> np.ndarray:
        """Closed (5, 2) lon/lat ring."""
        c = np.array(self.corners, dtype=float)
        return np.vstack([c, c[:1]])

    def to_feature(self, method: str = "gmm") -> dict:
        return {
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [self.ring().tolist()]},
            "properties": {
                "component": self.component,
                "weight": self.weight,
                "n_points": self.n_points,
                "port": self.port,
                "method": method,
                "degenerate": self.degenerate,
                "half_length_m": self.rect.half_length,
                "half_width_m": self.rect.half_width,
                "bearing_deg": self.rect.angle,
            },
        }


def rect_to_berth(rect: PlanarRect, plane: TangentPlane, **props) -> BerthPolygon:
    corners = rect.corners()
    lon, lat = plane.to_lonlat(corners[:, 0], corners[:, 1])
    clon, clat = plane.to_lonlat(rect.center[0], rect.center[1])
    geo = RotatedRect(GeoPoint(lat=float(clat), lon=float(clon)), rect.half_length, rect.half_width,
                      (90.0 - rect.angle) % 180.0)
    return BerthPolygon(geo, tuple((float(a), float(b)) for a, b in zip(lon, lat)), **props)


def berth_from_points(lonlat, port: str = "", component: int = 0, weight: float = 1.0) -> BerthPolygon:
    """Minimum-area rectangle around geographic points, computed in a local meter frame."""
    lonlat = np.asarray(lonlat, dtype=float).reshape(-1, 2)
    plane = TangentPlane(lonlat[:, 1].mean(), lonlat[:, 0].mean())
    x, y = plane.to_xy(lonlat[:, 0], lonlat[:, 1])
    rect = min_area_rect(np.column_stack([x, y]))
    degenerate = rect.half_width == 0.0
    if degenerate:
        rect = rect.buffered(MARKER_BUFFER_M)
    return rect_to_berth(rect, plane, component=component, weight=weight, n_points=len(lonlat),
                         port=port, degenerate=degenerate)


def localize_berths(model: GmmModel, cloud_lonlat, port: str = "") -> list:
    """One rectangle per mixture component around the points assigned to it.

    Points are hard-assigned to their most probable component in the
    model's standardized space. Components with fewer than three points or
    zero weight get a 5 m marker square at the component mean.
    """
    pts = np.asarray(getattr(cloud_lonlat, "points", cloud_lonlat), dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyDataError("cannot localize berths from an empty point cloud")
    if model.transform is None:
        raise ValueError("model has no standardization transform")
    labels = hard_assign(model, model.transform.apply(pts))
    centers = model.transform.invert(model.means)
    berths = []
    for k in range(model.n_components):
        members = pts[labels == k]
        w = float(model.weights[k])
        if len(members) < 3 or w <= 0:
            log.warning("component %d has %d points; emitting a marker square", k, len(members))
            plane = TangentPlane(centers[k, 1], centers[k, 0])
            rect = PlanarRect((0.0, 0.0), MARKER_BUFFER_M, MARKER_BUFFER_M, 0.0)
            berths.append(rect_to_berth(rect, plane, component=k, weight=w, n_points=len(members),
                                        port=port, degenerate=True))
            continue
        plane = TangentPlane(centers[k, 1], centers[k, 0])
        x, y = plane.to_xy(members[:, 0], members[:, 1])
        rect = min_area_rect(np.column_stack([x, y]))
        degenerate = rect.half_width == 0.0
        if degenerate:
            rect = rect.buffered(MARKER_BUFFER_M)
        berths.append(rect_to_berth(rect, plane, component=k, weight=w, n_points=len(members),
                                    port=port, degenerate=degenerate))
    return berths


def berths_to_geojson(berths, method: str = "gmm") -> dict:
    return {"type": "FeatureCollection", "features": [b.to_feature(method) for b in berths]}


def write_geojson(berths, path, method: str = "gmm") -> None:
    Path(path).write_text(json.dumps(berths_to_geojson(berths, method), indent=1, sort_keys=True) + "\n")


def read_geojson_polygons(path_or_obj) -> list:
    """Outer rings of every Polygon feature as (n, 2) lon/lat arrays (closing vertex dropped)."""
    obj = path_or_obj
    if not isinstance(obj, dict):
        obj = json.loads(Path(path_or_obj).read_text())
    rings = []
    for feat in obj.get("features", []):
        coords = np.asarray(feat["geometry"]["coordinates"][0], dtype=float)
        if len(coords) > 1 and np.all(coords[0] == coords[-1]):
            coords = coords[:-1]
        rings.append(coords)
    return rings


def write_svg(path, points_lonlat=(), berths=(), model: GmmModel | None = None,
              truth_rings=(), size: int = 800) -> None:
    """Static plot: points, 3-sigma component ellipses and berth rectangles."""
    layers = [np.asarray(points_lonlat, dtype=float).reshape(-1, 2)]
    layers += [b.ring() for b in berths]
    layers += [np.asarray(r, dtype=float) for r in truth_rings]
    allpts = np.vstack([layer for layer in layers if len(layer)]) if any(len(layer) for layer in layers) else np.zeros((1, 2))
    lat0 = float(allpts[:, 1].mean())
    kx = math.cos(math.radians(lat0))
    x0, x1 = allpts[:, 0].min() * kx, allpts[:, 0].max() * kx
    y0, y1 = allpts[:, 1].min(), allpts[:, 1].max()
    span = max(x1 - x0, y1 - y0, 1e-9) * 1.05
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2

    def xy(lon, lat):
        return ((lon * kx - cx) / span + 0.5) * size, (0.5 - (lat - cy) / span) * size

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    for lon, lat in layers[0][:20000]:
        px, py = xy(lon, lat)
        out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="0.8" fill="#444"/>')
    for ring in truth_rings:
        pts = " ".join("%.2f,%.2f" % xy(lo, la) for lo, la in np.asarray(ring))
        out.append(f'<polygon points="{pts}" fill="none" stroke="red" stroke-width="1.5"/>')
    if model is not None and model.transform is not None:
        t = np.linspace(0, 2 * math.pi, 48)
        circle = np.column_stack([np.cos(t), np.sin(t)]) * 3.0
        for mu, cov in zip(model.means, model.covariances):
            ell = model.transform.invert(mu + circle @ np.linalg.cholesky(cov).T)
            pts = " ".join("%.2f,%.2f" % xy(lo, la) for lo, la in ell)
            out.append(f'<polygon points="{pts}" fill="none" stroke="green" stroke-width="0.8"/>')
    for b in berths:
        pts = " ".join("%.2f,%.2f" % xy(lo, la) for lo, la in b.ring())
        out.append(f'<polygon points="{pts}" fill="rgba(0,0,255,0.15)" stroke="blue" stroke-width="1"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
