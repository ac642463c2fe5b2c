import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from berthloc.exceptions import ConfigError, RecordRejected
from berthloc.types import (AisRecord, GeoPoint, PortConfig, PortSizeClass, RoiPolygon, VesselType,
                            circular_difference, parse_timestamp, point_in_roi, rejection_reason, validate_record)
from conftest import SQUARE, T0, make_config, make_record
from oracles import winding_number_inside


class TestGeoPoint:
    def test_bounds(self):
        GeoPoint(90, 180)
        with pytest.raises(ValueError):
            GeoPoint(91, 0)
        with pytest.raises(ValueError):
            GeoPoint(0, -180.5)


class TestValidateRecord:
    def test_bad_latitude(self):
        assert rejection_reason(make_record(lat=91.0)) == "BadLatitude"
        with pytest.raises(RecordRejected) as exc:
            validate_record(make_record(lat=91.0))
        assert exc.value.reason == "BadLatitude"

    def test_bad_longitude(self):
        assert rejection_reason(make_record(lon=-181.0)) == "BadLongitude"

    def test_heading_sentinel_is_legal(self):
        rec = make_record(heading=511)
        assert validate_record(rec) is rec

    @pytest.mark.parametrize("heading", [-1.0, 360.0, 400.0, 510.0])
    def test_bad_heading(self, heading):
        assert rejection_reason(make_record(heading=heading)) == "BadHeading"

    def test_partial_dimensions(self):
        assert rejection_reason(make_record(dim_b=None)) == "PartialDimensions"

    def test_all_dimensions_absent_is_fine(self):
        rec = make_record(dim_a=None, dim_b=None, dim_c=None, dim_d=None)
        assert rejection_reason(rec) is None
        assert not rec.has_dimensions

    def test_negative_dimension(self):
        assert rejection_reason(make_record(dim_c=-1.0)) == "NegativeDimension"

    @given(st.floats(-90, 90), st.floats(-180, 180), st.floats(0, 359.9), st.floats(0, 30))
    def test_idempotent_on_accepted(self, lat, lon, heading, sog):
        rec = make_record(lat=lat, lon=lon, heading=heading, speed_over_ground=sog)
        assert validate_record(validate_record(rec)) == rec

    def test_dict_round_trip(self):
        rec = make_record()
        assert AisRecord.from_dict(json.loads(json.dumps(rec.to_dict()))) == rec

    def test_nested_position_accepted(self):
        d = make_record().to_dict()
        d["position"] = {"lat": d.pop("lat"), "lon": d.pop("lon")}
        assert AisRecord.from_dict(d) == make_record()


class TestVesselType:
    @pytest.mark.parametrize("code,expected", [(70, VesselType.CARGO), (79, VesselType.CARGO),
                                               (80, VesselType.TANKER), (60, VesselType.PASSENGER),
                                               (30, VesselType.FISHING), (52, VesselType.OTHER)])
    def test_codes(self, code, expected):
        assert VesselType.from_code(code) is expected

    def test_parse_names_and_codes(self):
        assert VesselType.parse("cargo") is VesselType.CARGO
        assert VesselType.parse("84") is VesselType.TANKER


class TestRoi:
    def test_center_inside(self):
        assert point_in_roi(GeoPoint(0.5, 0.5), SQUARE)

    def test_outside(self):
        assert not point_in_roi(GeoPoint(0.5, 2.0), SQUARE)

    def test_vertex_and_edge_inside(self):
        assert point_in_roi(GeoPoint(0.0, 0.0), SQUARE)
        assert point_in_roi(GeoPoint(0.0, 0.5), SQUARE)
        assert point_in_roi(GeoPoint(1.0, 1.0), SQUARE)

    def test_closing_vertex_dropped(self):
        roi = RoiPolygon(((0, 0), (1, 0), (1, 1), (0, 0)))
        assert len(roi.vertices) == 3

    def test_rejects_degenerate_and_self_intersecting(self):
        with pytest.raises(ConfigError):
            RoiPolygon(((0, 0), (1, 1), (0, 0)))
        with pytest.raises(ConfigError):
            RoiPolygon(((0, 0), (1, 1), (1, 0), (0, 1)))  # bow tie

    def test_geojson_round_trip(self):
        gj = SQUARE.to_geojson()
        ring = gj["geometry"]["coordinates"][0]
        assert ring[0] == ring[-1]
        assert RoiPolygon.from_geojson(gj) == SQUARE
        assert RoiPolygon.from_geojson({"type": "FeatureCollection", "features": [gj]}) == SQUARE

    def test_agrees_with_winding_number_oracle(self):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 1000:
            n = int(rng.integers(3, 9))
            ang = np.sort(rng.uniform(0, 2 * np.pi, n))
            rad = rng.uniform(0.3, 1.0, n)
            ring = [(float(r * np.cos(a)), float(r * np.sin(a))) for a, r in zip(ang, rad)]
            try:
                roi = RoiPolygon(tuple(ring))
            except (ConfigError, ValueError):
                continue
            p = rng.uniform(-1.1, 1.1, 2)
            if rng.random() < 0.05:
                p = np.array(ring[int(rng.integers(n))])  # exact vertex
            expected = winding_number_inside(tuple(p), ring)
            assert bool(roi.contains(p[0], p[1])[0]) == expected
            checked += 1


class TestPortConfig:
    def test_defaults(self):
        c = make_config()
        assert c.interpolation_period == 3600
        assert c.speed_threshold == 3.0
        assert c.heading_delta_threshold == 10.0
        assert (c.train_aug_points, c.eval_aug_points) == (10, 20)
        assert c.geohash_precision == 9
        assert c.ncomponents_range == (3, 50)
        assert (c.tpe_trials, c.tpe_warm_start) == (100, 30)
        assert (c.mci_samples, c.mci_reruns) == (10_000, 200)

    def test_large_port_range(self):
        assert make_config(port_size_class=PortSizeClass.LARGE).ncomponents_range == (30, 250)

    @pytest.mark.parametrize("kw", [dict(poi_end=T0), dict(ncomponents_range=(1, 5)),
                                    dict(ncomponents_range=(9, 5)), dict(mci_reruns=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            make_config(**kw)

    def test_file_round_trip(self, tmp_path):
        c = make_config(rng_seed=99, geohash_enabled=False)
        c.save(tmp_path / "c.json")
        assert PortConfig.load(tmp_path / "c.json") == c

    def test_roi_path_relative_to_config(self, tmp_path):
        (tmp_path / "roi.geojson").write_text(json.dumps(SQUARE.to_geojson()))
        d = make_config().to_dict()
        d["roi"] = "roi.geojson"
        (tmp_path / "c.json").write_text(json.dumps(d))
        assert PortConfig.load(tmp_path / "c.json").roi == SQUARE

    def test_unknown_key(self):
        d = make_config().to_dict()
        d["bogus"] = 1
        with pytest.raises(ConfigError):
            PortConfig.from_dict(d)


def test_parse_timestamp_forms():
    assert parse_timestamp("2024-01-01T00:00:00Z") == 1_704_067_200.0
    assert parse_timestamp("2024-01-01T00:00:00") == 1_704_067_200.0
    assert parse_timestamp(12.5) == 12.5


@settings(max_examples=200)
@given(st.floats(0, 720), st.floats(0, 720))
def test_circular_difference(a, b):
    d = float(circular_difference(a, b))
    assert 0 <= d <= 180
    raw = abs(a - b) % 360
    assert d == pytest.approx(min(raw, 360 - raw), abs=1e-9)
