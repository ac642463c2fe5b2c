import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from berthloc.ingest import Dataset, group_tracks, load_raw  # noqa: E402
from berthloc.synth import demo_port, write_outputs  # noqa: E402
from berthloc.types import AisRecord, PortConfig, RoiPolygon, VesselType  # noqa: E402

T0 = 1_700_000_000.0

SQUARE = RoiPolygon(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))


def make_record(**kw) -> AisRecord:
    base = dict(mmsi=219000001, timestamp=T0, lat=0.5, lon=0.5, speed_over_ground=0.1, heading=90.0,
                nav_status=5, vessel_type=VesselType.CARGO, dim_a=100.0, dim_b=20.0, dim_c=10.0, dim_d=10.0)
    base.update(kw)
    return AisRecord(**base)


def make_config(**kw) -> PortConfig:
    base = dict(port_name="testport", roi=SQUARE, poi_start=T0, poi_end=T0 + 30 * 86400.0)
    base.update(kw)
    return PortConfig(**base)


def make_dataset(records, config=None) -> Dataset:
    return Dataset(config or make_config(), group_tracks(records), ())


@pytest.fixture(scope="session")
def frozen():
    return json.loads((Path(__file__).parent / "data" / "frozen_oracles.json").read_text())


@pytest.fixture(scope="session")
def small_port(tmp_path_factory):
    """A small synthetic port (12 vessels, 10 days) with a fast tuning configuration."""
    root = tmp_path_factory.mktemp("small_port")
    spec = demo_port(seed=3, vessels=12, days=10)
    write_outputs(spec, root / "ais.jsonl", root / "truth.geojson")
    config = spec.port_config(ncomponents_range=(3, 7), kl_samples=2000, mci_samples=2000, mci_reruns=10,
                              tpe_trials=4, tpe_warm_start=3)
    raw = load_raw(root / "ais.jsonl", config)
    return {"root": root, "spec": spec, "config": config, "raw": raw}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
