"""Base-32 geohash encoding, decoding and vectorized cell snapping."""

from __future__ import annotations

import numpy as np

from .types import GeoPoint

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_DECODE = {c: i for i, c in enumerate(BASE32)}


def _bit_budget(precision: int) -> tuple[int, int]:
    """(longitude bits, latitude bits); longitude takes the first and every other bit."""
    total = 5 * precision
    return (total + 1) // 2, total // 2


def _check_precision(precision: int) -> None:
    if not 1 <= precision <= 12:
        raise ValueError(f"geohash precision must be in [1, 12], got {precision}")


def encode(p: GeoPoint, precision: int = 9) -> str:
    _check_precision(precision)
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    chars = []
    bits = 0
    value = 0
    even = True
    while len(chars) < precision:
        if even:
            mid = (lon_lo + lon_hi) / 2
            if p.lon >= mid:
                value = (value << 1) | 1
                lon_lo = mid
            else:
                value <<= 1
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2
            if p.lat >= mid:
                value = (value << 1) | 1
                lat_lo = mid
            else:
                value <<= 1
                lat_hi = mid
        even = not even
        bits += 1
        if bits == 5:
            chars.append(BASE32[value])
            bits = 0
            value = 0
    return "".join(chars)


def decode_bounds(h: str) -> tuple[float, float, float, float]:
    """(lat_lo, lat_hi, lon_lo, lon_hi) of the cell named by ``h``."""
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for ch in h.lower():
        try:
            value = _DECODE[ch]
        except KeyError:
            raise ValueError(f"invalid geohash character {ch!r}") from None
        for shift in range(4, -1, -1):
            bit = (value >> shift) & 1
            if even:
                mid = (lon_lo + lon_hi) / 2
                lon_lo, lon_hi = (mid, lon_hi) if bit else (lon_lo, mid)
            else:
                mid = (lat_lo + lat_hi) / 2
                lat_lo, lat_hi = (mid, lat_hi) if bit else (lat_lo, mid)
            even = not even
    return lat_lo, lat_hi, lon_lo, lon_hi


def decode(h: str) -> GeoPoint:
    """Center of the geohash cell."""
    lat_lo, lat_hi, lon_lo, lon_hi = decode_bounds(h)
    return GeoPoint(lat=(lat_lo + lat_hi) / 2, lon=(lon_lo + lon_hi) / 2)


def cell_size_degrees(precision: int) -> tuple[float, float]:
    """(lon width, lat height) of a cell in degrees."""
    lon_bits, lat_bits = _bit_budget(precision)
    return 360.0 / 2**lon_bits, 180.0 / 2**lat_bits


def cell_indices(lonlat, precision: int = 9) -> np.ndarray:
    """Integer (lon index, lat index) of the cell containing each point."""
    _check_precision(precision)
    lonlat = np.asarray(lonlat, dtype=float).reshape(-1, 2)
    lon_bits, lat_bits = _bit_budget(precision)
    ix = np.floor((lonlat[:, 0] + 180.0) / 360.0 * 2**lon_bits).astype(np.int64)
    iy = np.floor((lonlat[:, 1] + 90.0) / 180.0 * 2**lat_bits).astype(np.int64)
    ix = np.clip(ix, 0, 2**lon_bits - 1)
    iy = np.clip(iy, 0, 2**lat_bits - 1)
    return np.column_stack([ix, iy])


def cell_centers(indices, precision: int = 9) -> np.ndarray:
    w, h = cell_size_degrees(precision)
    idx = np.asarray(indices, dtype=float).reshape(-1, 2)
    return np.column_stack([-180.0 + (idx[:, 0] + 0.5) * w, -90.0 + (idx[:, 1] + 0.5) * h])


def snap(lonlat, precision: int = 9) -> np.ndarray:
    """Replace each (lon, lat) point by its geohash cell center."""
    return cell_centers(cell_indices(lonlat, precision), precision)
