import json

import numpy as np
import pytest

from berthloc.exceptions import InvalidSpecError
from berthloc.geo import TangentPlane
from berthloc.planar import convex_iou, points_in_polygon
from berthloc.synth import (GroundTruth, SynthBerth, SynthPort, berth_rings, demo_port, generate,
                            record_inside_label, score_against_truth, write_outputs)
from berthloc.types import AisRecord, VesselType


def three_berth_spec(**kw):
    spec = demo_port(seed=1, vessels=10, days=7)
    base = dict(berths=spec.berths[:3])
    base.update(kw)
    return SynthPort(**{**vars(spec), **base})


@pytest.fixture(scope="module")
def generated():
    spec = three_berth_spec()
    return spec, *generate(spec)


class TestGenerate:
    def test_three_polygons(self, generated):
        _, _, truth = generated
        assert len(truth.berths) == 3
        assert len(truth.to_geojson()["features"]) == 3

    def test_at_berth_inside(self, generated):
        _, records, truth = generated
        assert record_inside_label(records, truth)
        labels = {lab.split("(")[0] for _, _, lab in truth.labels}
        assert labels <= {"AtBerth", "Anchored", "Transit"}
        assert "AtBerth" in labels and "Transit" in labels

    def test_berth_records_pass_filters(self, generated):
        _, records, truth = generated
        n = 0
        for rec, (_, _, lab) in zip(records, truth.labels):
            if lab.startswith("AtBerth"):
                r = AisRecord.from_dict(rec)
                assert r.speed_over_ground < 3.0 and r.heading != 511 and r.has_dimensions
                assert r.vessel_type in (VesselType.CARGO, VesselType.TANKER)
                assert r.nav_status == 5
                n += 1
        assert n > 100

    def test_heading_tracks_orientation(self, generated):
        spec, records, truth = generated
        for rec, (_, _, lab) in zip(records, truth.labels):
            if lab.startswith("AtBerth("):
                o = spec.berths[int(lab[8:-1])].orientation
                d = abs(rec["heading"] - o) % 180
                assert min(d, 180 - d) <= 3.0 + 1e-9

    def test_records_sorted_and_in_window(self, generated):
        spec, records, _ = generated
        ts = [(r["timestamp"], r["mmsi"]) for r in records]
        assert ts == sorted(ts)

    def test_byte_identical(self, tmp_path):
        spec = three_berth_spec()
        write_outputs(spec, tmp_path / "a.jsonl", tmp_path / "a.geojson", tmp_path / "a.labels")
        write_outputs(spec, tmp_path / "b.jsonl", tmp_path / "b.geojson", tmp_path / "b.labels")
        for ext in ("jsonl", "geojson", "labels"):
            assert (tmp_path / f"a.{ext}").read_bytes() == (tmp_path / f"b.{ext}").read_bytes()


class TestSpec:
    def test_overlapping_berths(self):
        b = demo_port().berths[0]
        with pytest.raises(InvalidSpecError):
            three_berth_spec(berths=(b, b))

    def test_berth_outside_roi(self):
        b = demo_port().berths[0]
        far = SynthBerth(lat=b.lat + 1, lon=b.lon, orientation=0, length=200, width=40)
        with pytest.raises(InvalidSpecError):
            three_berth_spec(berths=(far,))

    def test_round_trip(self, tmp_path):
        spec = demo_port(seed=5)
        (tmp_path / "s.json").write_text(json.dumps(spec.to_dict()))
        assert SynthPort.load(tmp_path / "s.json") == spec

    def test_bad_file(self, tmp_path):
        (tmp_path / "s.json").write_text("{")
        with pytest.raises(InvalidSpecError):
            SynthPort.load(tmp_path / "s.json")

    def test_ring_dimensions(self):
        spec = demo_port()
        plane = TangentPlane(spec.roi.centroid.lat, spec.roi.centroid.lon)
        for b, ring in zip(spec.berths, berth_rings(spec)):
            x, y = plane.to_xy(ring[:, 0], ring[:, 1])
            sides = np.hypot(np.diff(np.append(x, x[0])), np.diff(np.append(y, y[0])))
            np.testing.assert_allclose(sorted(sides), sorted([b.length, b.length, b.width, b.width]), rtol=1e-9)


class TestScore:
    def test_identical(self):
        truth = GroundTruth(tuple(berth_rings(demo_port())), ())
        s = score_against_truth(list(truth.berths), truth)
        assert (s.recall, s.precision) == (1.0, 1.0)
        assert s.mean_center_offset_m == pytest.approx(0.0, abs=1e-6)

    def test_empty_predictions(self):
        truth = GroundTruth(tuple(berth_rings(demo_port())), ())
        s = score_against_truth([], truth)
        assert s.recall == 0.0 and s.n_predicted == 0

    def test_one_covers_two(self):
        plane = TangentPlane(0, 0)

        def ring(x0, y0, x1, y1):
            lon, lat = plane.to_lonlat(np.array([x0, x1, x1, x0]), np.array([y0, y0, y1, y1]))
            return np.column_stack([lon, lat])

        truth = GroundTruth((ring(0, 0, 10, 10), ring(12, 0, 16, 10)), ())
        big = ring(0, 0, 16, 10)
        s = score_against_truth([big], truth)
        assert [m[0] for m in s.matches] == [0]
        assert s.recall == 0.5 and s.precision == 1.0

    def test_iou_matches_raster(self, rng):
        g = np.linspace(-20, 20, 801)
        c = (g[:-1] + g[1:]) / 2
        grid = np.column_stack([a.ravel() for a in np.meshgrid(c, c)])
        for _ in range(20):
            rects = []
            for _ in range(2):
                cx, cy = rng.uniform(-4, 4, 2)
                L, W = rng.uniform(2, 10, 2)
                t = rng.uniform(0, np.pi)
                u, v = np.array([np.cos(t), np.sin(t)]), np.array([-np.sin(t), np.cos(t)])
                rects.append(np.array([[cx, cy] + a * L * u + b * W * v for a, b in ((-1, -1), (1, -1), (1, 1),
                                                                                     (-1, 1))]))
            ina, inb = (points_in_polygon(grid, r) for r in rects)
            union = (ina | inb).sum()
            raster = (ina & inb).sum() / union
            assert convex_iou(*rects) == pytest.approx(raster, abs=0.02)
