import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from berthloc.exceptions import EmptyDataError
from berthloc.geo import TangentPlane
from berthloc.geometry import (berth_from_points, berths_to_geojson, convex_hull, localize_berths, min_area_rect,
                               read_geojson_polygons, write_geojson, write_svg)
from berthloc.mixture import FitOptions, GmmModel, fit_gmm
from berthloc.planar import points_in_polygon
from berthloc.preprocess import StandardizationTransform, fit_standardizer
from oracles import box_area, hull_bruteforce, min_rect_pairs, min_rect_sweep

coords = st.floats(-100, 100, allow_nan=False).map(lambda v: round(v, 3))
point_sets = st.lists(st.tuples(coords, coords), min_size=1, max_size=40)


class TestHull:
    def test_square_with_center(self):
        h = convex_hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
        assert len(h) == 4
        assert {tuple(p) for p in h} == {(0, 0), (1, 0), (1, 1), (0, 1)}

    def test_collinear(self):
        h = convex_hull([(0, 0), (1, 1), (2, 2), (3, 3)])
        assert {tuple(p) for p in h} == {(0, 0), (3, 3)}

    def test_single(self):
        assert convex_hull([(2, 3), (2, 3)]).tolist() == [[2, 3]]

    def test_random_matches_oracle(self, rng):
        for _ in range(2):
            pts = np.round(rng.uniform(-10, 10, (50, 2)), 2)
            assert {tuple(p) for p in convex_hull(pts)} == hull_bruteforce(pts)

    @settings(max_examples=150, deadline=None)
    @given(point_sets)
    def test_convex_and_contains(self, pts):
        pts = np.array(pts, dtype=float)
        h = convex_hull(pts)
        if len(h) >= 3:
            nxt, nxt2 = np.roll(h, -1, 0), np.roll(h, -2, 0)
            cross = (nxt[:, 0] - h[:, 0]) * (nxt2[:, 1] - h[:, 1]) - (nxt[:, 1] - h[:, 1]) * (nxt2[:, 0] - h[:, 0])
            assert np.all(cross > 0)
            assert points_in_polygon(pts, h, atol=1e-9).all()


class TestMinRect:
    def test_square(self):
        r = min_area_rect([(0, 0), (1, 0), (1, 1), (0, 1)])
        assert r.area == pytest.approx(1.0)
        assert r.angle == 0.0

    def test_diamond(self):
        pts = [(0, 0), (1, 1), (2, 0), (1, -1)]
        r = min_area_rect(pts)
        assert r.area == pytest.approx(2.0)
        assert r.angle == pytest.approx(45.0)
        assert min_rect_sweep(pts)[0] == pytest.approx(2.0, rel=1e-12)

    def test_single_point(self):
        r = min_area_rect([(3, 4)])
        assert r.area == 0 and r.center == (3, 4)

    def test_segment_zero_width(self):
        r = min_area_rect([(0, 0), (3, 4)])
        assert r.half_length == pytest.approx(2.5) and r.half_width == pytest.approx(0, abs=1e-12)
        assert r.angle == pytest.approx(math.degrees(math.atan2(4, 3)))

    def test_frozen_areas(self, frozen):
        for case in frozen["min_rect"]:
            assert min_area_rect(case["points"]).area == pytest.approx(case["area"], rel=1e-9)

    @settings(max_examples=150, deadline=None)
    @given(point_sets)
    def test_properties(self, pts):
        pts = np.array(pts, dtype=float)
        r = min_area_rect(pts)
        assert r.half_length >= r.half_width >= 0 and 0 <= r.angle < 180
        aabb = np.ptp(pts[:, 0]) * np.ptp(pts[:, 1])
        assert r.area <= aabb * (1 + 1e-12) + 1e-12
        scale = max(1.0, float(np.abs(pts).max()))
        assert r.contains(pts, tol=1e-9 * scale).all()
        assert r.area == pytest.approx(min_rect_pairs(pts), rel=1e-9, abs=1e-9 * scale**2)


def two_cluster_model():
    rng = np.random.default_rng(0)
    plane = TangentPlane(57.7, 11.9)
    a = rng.normal([0, 0], [40, 8], (300, 2))
    b = rng.normal([400, 300], [8, 40], (300, 2))
    xy = np.vstack([a, b])
    lon, lat = plane.to_lonlat(xy[:, 0], xy[:, 1])
    ll = np.column_stack([lon, lat])
    t = fit_standardizer(ll)
    return fit_gmm(t.apply(ll), 2, FitOptions(seed=0), t), ll


class TestLocalize:
    def test_two_components(self):
        m, ll = two_cluster_model()
        berths = localize_berths(m, ll, port="p")
        assert len(berths) == 2
        assert sorted(b.n_points for b in berths) == [300, 300]
        first = ll[:300]
        hits = [points_in_polygon(first, np.array(b.corners), atol=1e-12).mean() for b in berths]
        assert sorted(hits) == [0.0, 1.0]
        r0, r1 = (np.array(b.corners) for b in berths)
        assert not points_in_polygon(r0, r1).any() and not points_in_polygon(r1, r0).any()

    def test_points_inside_their_rectangle(self):
        m, ll = two_cluster_model()
        from berthloc.mixture import hard_assign

        labels = hard_assign(m, m.transform.apply(ll))
        for b in localize_berths(m, ll):
            members = ll[labels == b.component]
            plane = TangentPlane(b.rect.center.lat, b.rect.center.lon)
            x, y = plane.to_xy(members[:, 0], members[:, 1])
            cx, cy = plane.to_xy(*np.array(b.corners).T)
            ring = np.column_stack([cx, cy])
            assert points_in_polygon(np.column_stack([x, y]), ring, atol=1e-6).all()

    def test_square_corner_cloud(self):
        plane = TangentPlane(57.7, 11.9)
        lon, lat = plane.to_lonlat(np.array([0, 100, 100, 0, 50.0]), np.array([0, 0, 50, 50, 25.0]))
        ll = np.column_stack([lon, lat])
        t = StandardizationTransform(11.9, 57.7, 1e-3, 1e-3)
        m = GmmModel(np.array([1.0]), t.apply(ll).mean(axis=0, keepdims=True), np.eye(2)[None], t)
        (b,) = localize_berths(m, ll)
        assert b.rect.half_length == pytest.approx(50, rel=1e-3)
        assert b.rect.half_width == pytest.approx(25, rel=1e-3)
        assert b.rect.angle == pytest.approx(90, abs=0.1)  # long side points east
        assert points_in_polygon(ll, np.array(b.corners), atol=1e-9).all()

    def test_symmetric_tie_and_markers(self):
        t = StandardizationTransform(11.9, 57.7, 1e-3, 1e-3)
        m = GmmModel(np.array([0.5, 0.5]), np.zeros((2, 2)), np.repeat(np.eye(2)[None], 2, 0), t)
        ll = t.invert(np.random.default_rng(0).normal(size=(20, 2)))
        b0, b1 = localize_berths(m, ll)
        assert b0.n_points == 20 and b1.n_points == 0
        assert b1.degenerate and b1.rect.half_width == pytest.approx(5.0)

    def test_empty(self):
        m, _ = two_cluster_model()
        with pytest.raises(EmptyDataError):
            localize_berths(m, np.empty((0, 2)))


class TestOutputs:
    def test_geojson(self, tmp_path):
        m, ll = two_cluster_model()
        berths = localize_berths(m, ll, port="p")
        write_geojson(berths, tmp_path / "b.geojson")
        obj = json.loads((tmp_path / "b.geojson").read_text())
        for f in obj["features"]:
            ring = f["geometry"]["coordinates"][0]
            assert len(ring) == 5 and ring[0] == ring[-1]
            assert {"component", "weight", "n_points", "port"} <= set(f["properties"])
        rings = read_geojson_polygons(tmp_path / "b.geojson")
        np.testing.assert_allclose(rings[0], np.array(berths[0].corners))
        assert berths_to_geojson(berths, "steenari")["features"][0]["properties"]["method"] == "steenari"

    def test_svg(self, tmp_path):
        m, ll = two_cluster_model()
        write_svg(tmp_path / "p.svg", ll, localize_berths(m, ll), m, truth_rings=[ll[:4]])
        text = (tmp_path / "p.svg").read_text()
        assert text.startswith("<svg") and text.count("<polygon") == 5

    def test_berth_from_collinear_points(self):
        b = berth_from_points([(11.9, 57.7), (11.9001, 57.7), (11.9002, 57.7)])
        assert b.degenerate and b.rect.half_width == pytest.approx(5.0)
        assert b.rect.angle == pytest.approx(90.0)


def test_sweep_oracle_agrees_with_pair_oracle(rng):
    for _ in range(5):
        pts = rng.normal(size=(int(rng.integers(3, 30)), 2)) * rng.uniform(0.5, 5, 2)
        refined, grid = min_rect_sweep(pts)
        exact = min_rect_pairs(pts)
        assert refined == pytest.approx(exact, rel=1e-9)
        assert grid >= exact * (1 - 1e-12)
        assert box_area(pts, 0.0) >= exact * (1 - 1e-12)
