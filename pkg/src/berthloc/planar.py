"""Planar polygon primitives shared by the ROI, divergence and geometry code."""

import numpy as np


def shoelace_area(ring):
    """Unsigned area of a simple polygon given as an (n, 2) open ring."""
    ring = np.asarray(ring, dtype=float)
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def points_in_polygon(points, ring, atol=1e-12):
    """Boolean mask of points inside or on the boundary of a polygon.

    Ray casting toward +x with the half-open edge rule, plus an explicit
    on-segment test so that boundary points count as inside.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ring = np.asarray(ring, dtype=float)
    px, py = pts[:, 0][:, None], pts[:, 1][:, None]
    x1, y1 = ring[:, 0][None, :], ring[:, 1][None, :]
    nxt = np.roll(ring, -1, axis=0)
    x2, y2 = nxt[:, 0][None, :], nxt[:, 1][None, :]

    straddles = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    crossings = np.sum(straddles & (px < x_cross), axis=1)
    inside = (crossings % 2) == 1

    scale = max(np.ptp(ring[:, 0]), np.ptp(ring[:, 1]), 1.0)
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    seg_len = np.hypot(x2 - x1, y2 - y1)
    tol = atol * scale
    collinear = np.abs(cross) <= tol * np.maximum(seg_len, tol)
    within = (
        (px >= np.minimum(x1, x2) - tol)
        & (px <= np.maximum(x1, x2) + tol)
        & (py >= np.minimum(y1, y2) - tol)
        & (py <= np.maximum(y1, y2) + tol)
    )
    on_edge = np.any(collinear & within, axis=1)
    return inside | on_edge


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p):
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segments_intersect(a, b, c, d):
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 and o2 and o3 and o4:
        return True
    if o1 == 0 and _on_segment(a, b, c):
        return True
    if o2 == 0 and _on_segment(a, b, d):
        return True
    if o3 == 0 and _on_segment(c, d, a):
        return True
    if o4 == 0 and _on_segment(c, d, b):
        return True
    return False


def is_simple_ring(ring):
    """True when no two non-adjacent edges of the open ring intersect."""
    ring = [tuple(v) for v in np.asarray(ring, dtype=float)]
    n = len(ring)
    edges = [(ring[i], ring[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def _ccw(ring):
    ring = np.asarray(ring, dtype=float)
    x, y = ring[:, 0], ring[:, 1]
    signed = np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
    return ring if signed >= 0 else ring[::-1]


def clip_convex(subject, clipper):
    """Sutherland-Hodgman clip of ``subject`` by a convex ``clipper``; returns an (m, 2) ring, possibly empty."""
    out = [tuple(p) for p in _ccw(subject)]
    clip = _ccw(clipper)
    for i in range(len(clip)):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % len(clip)]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        inp, out = out, []
        for j in range(len(inp)):
            p, q = inp[j], inp[(j + 1) % len(inp)]
            sp, sq = side(p), side(q)
            if sp >= 0:
                out.append(p)
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return np.array(out, dtype=float).reshape(-1, 2)


def convex_iou(a, b):
    """Intersection over union of two convex polygons."""
    inter = clip_convex(a, b)
    ia = shoelace_area(inter) if len(inter) >= 3 else 0.0
    union = shoelace_area(a) + shoelace_area(b) - ia
    return ia / union if union > 0 else 0.0
