"""Reading raw AIS files into per-vessel tracks, and dataset persistence."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import EmptyDatasetError, FileUnreadableError, SchemaVersionMismatch
from .types import AisRecord, PortConfig, rejection_reason

log = logging.getLogger(__name__)

DATASET_SCHEMA = "berthloc.dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class VesselTrack:
    mmsi: int
    records: tuple

    def __post_init__(self):
        ts = [r.timestamp for r in self.records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"track {self.mmsi} timestamps not strictly increasing")
        if any(r.mmsi != self.mmsi for r in self.records):
            raise ValueError(f"track {self.mmsi} contains foreign records")

    def __len__(self):
        return len(self.records)

    def lonlat(self) -> np.ndarray:
        return np.array([(r.lon, r.lat) for r in self.records], dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class ProvenanceStep:
    stage: str
    before: int
    after: int


@dataclass(frozen=True)
class Dataset:
    port: PortConfig
    tracks: tuple
    provenance: tuple = field(default=())

    @property
    def n_records(self) -> int:
        return sum(len(t) for t in self.tracks)

    @property
    def mmsis(self) -> list:
        return [t.mmsi for t in self.tracks]

    def records(self) -> Iterable[AisRecord]:
        for t in self.tracks:
            yield from t.records

    def lonlat(self) -> np.ndarray:
        if not self.tracks:
            return np.empty((0, 2))
        return np.vstack([t.lonlat() for t in self.tracks])

    def with_tracks(self, tracks, stage: str | None = None) -> "Dataset":
        """New dataset with ``tracks`` (empty tracks dropped), optionally logging a stage."""
        tracks = tuple(t for t in tracks if len(t))
        prov = self.provenance
        if stage is not None:
            after = sum(len(t) for t in tracks)
            prov = prov + (ProvenanceStep(stage, self.n_records, after),)
        return Dataset(self.port, tracks, prov)

    def map_records(self, keep, stage: str) -> "Dataset":
        """Filter records with a per-record predicate."""
        tracks = [VesselTrack(t.mmsi, tuple(r for r in t.records if keep(r))) for t in self.tracks]
        return self.with_tracks(tracks, stage)


def group_tracks(records: Iterable[AisRecord]) -> tuple:
    """Group records by MMSI, sort by time, collapse duplicate timestamps keeping the last.

    "Last" means last in input order among records sharing (mmsi, timestamp).
    """
    by_vessel: dict = {}
    for rec in records:
        by_vessel.setdefault(rec.mmsi, {})[rec.timestamp] = rec
    tracks = []
    for mmsi in sorted(by_vessel):
        recs = by_vessel[mmsi]
        tracks.append(VesselTrack(mmsi, tuple(recs[ts] for ts in sorted(recs))))
    return tuple(tracks)


def _iter_raw_rows(path: Path):
    """Yield dict rows (or None for unparseable lines) from JSON Lines or CSV."""
    with path.open("r", newline="") as fh:
        first = fh.readline()
        fh.seek(0)
        if first.lstrip().startswith("{"):
            for line in fh:
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    yield None
                    continue
                yield obj if isinstance(obj, dict) else None
        else:
            for row in csv.DictReader(fh):
                yield row


def parse_records(path) -> tuple[list, int]:
    """Parse a raw AIS file; returns (valid records, skipped line count)."""
    path = Path(path)
    try:
        rows = list(_iter_raw_rows(path))
    except OSError as exc:
        raise FileUnreadableError(f"cannot read {path}: {exc}") from exc
    records, skipped = [], 0
    for row in rows:
        if row is None:
            skipped += 1
            continue
        try:
            rec = AisRecord.from_dict(row)
        except (KeyError, TypeError, ValueError):
            skipped += 1
            continue
        if rejection_reason(rec) is not None:
            skipped += 1
            continue
        records.append(rec)
    return records, skipped


def load_raw(path, config: PortConfig) -> Dataset:
    """Parse, validate and ROI/POI-filter a raw AIS file into a :class:`Dataset`.

    Malformed or invalid lines are skipped and counted in the ``parse``
    provenance step rather than aborting the load.
    """
    records, skipped = parse_records(path)
    if skipped:
        log.warning("skipped %d malformed or invalid lines in %s", skipped, path)
    n_lines = len(records) + skipped
    prov = [ProvenanceStep("parse", n_lines, len(records))]

    in_poi = [r for r in records if config.poi_start <= r.timestamp < config.poi_end]
    prov.append(ProvenanceStep("poi", len(records), len(in_poi)))

    if in_poi:
        lon = np.array([r.lon for r in in_poi])
        lat = np.array([r.lat for r in in_poi])
        mask = config.roi.contains(lon, lat)
        in_roi = [r for r, m in zip(in_poi, mask) if m]
    else:
        in_roi = []
    prov.append(ProvenanceStep("roi", len(in_poi), len(in_roi)))

    tracks = group_tracks(in_roi)
    n_tracked = sum(len(t) for t in tracks)
    prov.append(ProvenanceStep("dedup", len(in_roi), n_tracked))
    if n_tracked == 0:
        raise EmptyDatasetError(f"no records survive ROI/POI filtering in {path}")
    return Dataset(config, tracks, tuple(prov))


def save_dataset(d: Dataset, path) -> None:
    """Write a dataset as JSON Lines: one header object, then one record per line."""
    header = {
        "schema": DATASET_SCHEMA,
        "version": DATASET_VERSION,
        "config": d.port.to_dict(),
        "provenance": [[p.stage, p.before, p.after] for p in d.provenance],
        "n_records": d.n_records,
    }
    with Path(path).open("w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in d.records():
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise FileUnreadableError(f"cannot read {path}: {exc}") from exc
    try:
        header = json.loads(lines[0])
    except (IndexError, json.JSONDecodeError):
        raise SchemaVersionMismatch(f"{path} has no dataset header") from None
    if not isinstance(header, dict) or header.get("schema") != DATASET_SCHEMA:
        raise SchemaVersionMismatch(f"{path} is not a berthloc dataset")
    if header.get("version") != DATASET_VERSION:
        raise SchemaVersionMismatch(f"dataset version {header.get('version')} != {DATASET_VERSION}")
    try:
        config = PortConfig.from_dict(header["config"])
        records = [AisRecord.from_dict(json.loads(line)) for line in lines[1:] if line.strip()]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaVersionMismatch(f"{path} is corrupted: {exc}") from exc
    if len(records) != header.get("n_records"):
        raise SchemaVersionMismatch(f"{path} is truncated")
    prov = tuple(ProvenanceStep(s, int(b), int(a)) for s, b, a in header["provenance"])
    return Dataset(config, group_tracks(records), prov)


def provenance_csv(d: Dataset) -> str:
    lines = ["stage,before,after"]
    lines += [f"{p.stage},{p.before},{p.after}" for p in d.provenance]
    return "\n".join(lines) + "\n"
