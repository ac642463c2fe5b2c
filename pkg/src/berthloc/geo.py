"""Great-circle distance and local tangent-plane conversions."""

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEGREE = 111_320.0


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters; broadcasts over array arguments."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def haversine_matrix(lat, lon):
    """Pairwise (n, n) haversine distances in meters."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    return haversine(lat[:, None], lon[:, None], lat[None, :], lon[None, :])


class TangentPlane:
    """Equirectangular east/north meter frame anchored at a reference point.

    Accurate to well under a meter over the sub-kilometre extents of berths.
    """

    def __init__(self, lat0, lon0):
        self.lat0 = float(lat0)
        self.lon0 = float(lon0)
        self._mx = METERS_PER_DEGREE * np.cos(np.radians(self.lat0))
        self._my = METERS_PER_DEGREE

    def to_xy(self, lon, lat):
        x = (np.asarray(lon, dtype=float) - self.lon0) * self._mx
        y = (np.asarray(lat, dtype=float) - self.lat0) * self._my
        return x, y

    def to_lonlat(self, x, y):
        lon = self.lon0 + np.asarray(x, dtype=float) / self._mx
        lat = self.lat0 + np.asarray(y, dtype=float) / self._my
        return lon, lat
