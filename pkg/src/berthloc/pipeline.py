"""End-to-end stages: localization, split evaluation, baseline comparison and ablations."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .augment import PointCloud, augment_dataset, snap_cloud
from .baseline import BinaryMembershipModel, baseline_cluster, baseline_preprocess, detect_events
from .divergence import BhattacharyyaEstimate, PortArea, evaluate
from .exceptions import AllRerunsInfiniteError, EmptyDataError, MissingTuningError, NoClustersError
from .geometry import localize_berths
from .ingest import Dataset
from .mixture import FitOptions, GmmModel, fit_gmm
from .preprocess import SplitPair, StandardizationTransform, fit_standardizer, preprocess_full, preprocess_splits, split
from .seeding import derive_rng, derive_seed
from .stopdetect import DbscanParams, filter_stops
from .tuner import TuningResult, tune
from .types import PortConfig

log = logging.getLogger(__name__)

# seed stream identifiers, kept distinct so stages never share random draws
STREAM_LOCALIZE = 21
STREAM_EVALUATE = 22
STREAM_BASELINE = 23


@dataclass(frozen=True)
class Hyperparameters:
    epsilon: float
    min_points: int
    n_components: int

    @property
    def dbscan(self) -> DbscanParams:
        return DbscanParams(self.epsilon, self.min_points)

    @classmethod
    def from_config(cls, config: PortConfig) -> "Hyperparameters":
        if config.epsilon is None or config.min_points is None or config.n_components is None:
            raise MissingTuningError("epsilon, min_points and n_components are required; run tune first")
        return cls(float(config.epsilon), int(config.min_points), int(config.n_components))

    @classmethod
    def from_tuning(cls, result: TuningResult) -> "Hyperparameters":
        b = result.best
        return cls(b.params.epsilon, b.params.min_points, int(b.n_components))


def final_options(config: PortConfig, seed: int) -> FitOptions:
    return FitOptions(config.final_tolerance, config.final_restarts, config.max_iterations,
                      config.covariance_floor, seed)


def build_cloud(d: Dataset, params: DbscanParams, n_aug: int, config: PortConfig, seed: int):
    """Stop-filter, augment and optionally snap one dataset; returns (filtered dataset, cloud)."""
    filtered = filter_stops(d, params)
    cloud = augment_dataset(filtered, n_aug, derive_rng(seed, 0))
    if config.geohash_enabled:
        cloud = snap_cloud(cloud, config.geohash_precision)
    return filtered, cloud


@dataclass(frozen=True, eq=False)
class LocalizationResult:
    berths: list
    model: GmmModel
    cloud: PointCloud
    transform: StandardizationTransform


def cmd_localize(config: PortConfig, full: Dataset, hp: Hyperparameters) -> LocalizationResult:
    """Fit the final mixture on the whole preprocessed dataset and turn components into berths."""
    seed = derive_seed(config.rng_seed, STREAM_LOCALIZE)
    filtered, cloud = build_cloud(full, hp.dbscan, config.eval_aug_points, config, seed)
    transform = fit_standardizer(filtered.lonlat())
    model = fit_gmm(transform.apply(cloud.points), hp.n_components, final_options(config, derive_seed(seed, 1)),
                    transform)
    berths = localize_berths(model, cloud.points, port=config.port_name)
    return LocalizationResult(berths, model, cloud, transform)


@dataclass(frozen=True)
class MethodEvaluation:
    method: str
    estimate: BhattacharyyaEstimate | None
    note: str = ""

    @property
    def mean(self) -> float:
        return self.estimate.mean if self.estimate is not None else math.inf

    @property
    def std(self) -> float:
        return self.estimate.std if self.estimate is not None else math.nan

    def to_dict(self) -> dict:
        return {"method": self.method, "note": self.note,
                "estimate": self.estimate.to_dict() if self.estimate is not None else None}


@dataclass(frozen=True)
class EvaluationReport:
    port: str
    methods: tuple
    hyperparameters: Hyperparameters
    models: tuple = field(default=(), repr=False, compare=False)

    def by_method(self, name: str) -> MethodEvaluation:
        return next(m for m in self.methods if m.method == name)

    def to_dict(self) -> dict:
        return {"port": self.port, "hyperparameters": vars(self.hyperparameters),
                "methods": [m.to_dict() for m in self.methods]}

    def to_csv(self) -> str:
        lines = ["port,method,mean,std"]
        for m in self.methods:
            lines.append(f"{self.port},{m.method},{_fmt(m.mean)},{_fmt(m.std)}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else ("inf" if x > 0 else "nan")


def split_models(pair: SplitPair, hp: Hyperparameters, config: PortConfig, seed: int):
    """Evaluation-path GMMs for both splits in one shared standardized frame."""
    built = [build_cloud(s, hp.dbscan, config.eval_aug_points, config, derive_seed(seed, i))
             for i, s in enumerate((pair.split_a, pair.split_b))]
    transform = fit_standardizer(np.vstack([f.lonlat() for f, _ in built]))
    models = tuple(fit_gmm(transform.apply(c.points), hp.n_components,
                           final_options(config, derive_seed(seed, 10 + i)), transform)
                   for i, (_, c) in enumerate(built))
    return models, transform


def evaluate_baseline(raw: Dataset, transform: StandardizationTransform, config: PortConfig) -> MethodEvaluation:
    """Bhattacharyya distance between baseline berth sets built on the two vessel splits."""
    try:
        pair = split(baseline_preprocess(raw))
        sets = [baseline_cluster(detect_events(s), port=config.port_name) for s in (pair.split_a, pair.split_b)]
    except (NoClustersError, EmptyDataError) as exc:
        return MethodEvaluation("steenari", None, f"{type(exc).__name__}: {exc}")
    p, q = (BinaryMembershipModel(s, transform) for s in sets)
    area = PortArea.from_roi(config.roi, transform)
    try:
        est = evaluate(p, q, area, config.mci_samples, config.mci_reruns,
                       derive_seed(config.rng_seed, STREAM_BASELINE))
    except AllRerunsInfiniteError as exc:
        return MethodEvaluation("steenari", None, f"AllRerunsInfinite: {exc}")
    return MethodEvaluation("steenari", est)


def cmd_evaluate(config: PortConfig, pair: SplitPair, hp: Hyperparameters, raw: Dataset | None = None) -> EvaluationReport:
    """Split-consistency Bhattacharyya distance of the mixture pipeline, plus the baseline when raw data is given."""
    seed = derive_seed(config.rng_seed, STREAM_EVALUATE)
    (gmm_a, gmm_b), transform = split_models(pair, hp, config, seed)
    area = PortArea.from_roi(config.roi, transform)
    method = "gmm_geohash" if config.geohash_enabled else "gmm"
    try:
        est = evaluate(gmm_a, gmm_b, area, config.mci_samples, config.mci_reruns, derive_seed(seed, 99))
        methods = [MethodEvaluation(method, est)]
    except AllRerunsInfiniteError as exc:
        methods = [MethodEvaluation(method, None, f"AllRerunsInfinite: {exc}")]
    if raw is not None:
        methods.append(evaluate_baseline(raw, transform, config))
    return EvaluationReport(config.port_name, tuple(methods), hp, (gmm_a, gmm_b))


ABLATION_AXES = {
    "poi": (3 * 86400.0, 7 * 86400.0, 14 * 86400.0, 30 * 86400.0),
    "aug_points": (0, 2, 5, 10, 20, 40),
    "interpolation": (900.0, 1800.0, 3600.0, 7200.0),
}


def ablation_config(config: PortConfig, axis: str, value) -> PortConfig:
    if axis == "poi":
        return config.with_(poi_end=min(config.poi_start + float(value), config.poi_end))
    if axis == "aug_points":
        return config.with_(train_aug_points=int(value), eval_aug_points=int(value))
    if axis == "interpolation":
        return config.with_(interpolation_period=float(value))
    raise ValueError(f"unknown ablation axis {axis!r}")


def restrict(raw: Dataset, config: PortConfig) -> Dataset:
    """Re-scope a raw dataset to a (shorter) POI and swap in the new config."""
    d = Dataset(config, raw.tracks, raw.provenance)
    return d.map_records(lambda r: config.poi_start <= r.timestamp < config.poi_end, "poi")


@dataclass(frozen=True)
class AblationRow:
    axis: str
    value: float
    hyperparameters: Hyperparameters | None
    bd_mean: float
    bd_std: float
    note: str = ""


def tune_and_evaluate(raw: Dataset, config: PortConfig, trials: int | None = None,
                      warm_start: int | None = None, with_baseline: bool = False):
    pair = preprocess_splits(raw)
    result = tune(pair.split_a, pair.split_b, config, trials=trials, warm_start=warm_start)
    hp = Hyperparameters.from_tuning(result)
    return result, cmd_evaluate(config, pair, hp, raw if with_baseline else None)


def cmd_ablate(config: PortConfig, raw: Dataset, axis: str, values=None, trials: int | None = None,
               warm_start: int | None = None) -> list:
    """Tune and evaluate once per axis value; failures become rows with an infinite mean."""
    rows = []
    for value in (values if values is not None else ABLATION_AXES[axis]):
        cfg = ablation_config(config, axis, value)
        t0 = time.perf_counter()
        try:
            _, report = tune_and_evaluate(restrict(raw, cfg), cfg, trials, warm_start)
            m = report.methods[0]
            rows.append(AblationRow(axis, float(value), report.hyperparameters, m.mean, m.std, m.note))
        except (EmptyDataError, ArithmeticError) as exc:
            rows.append(AblationRow(axis, float(value), None, math.inf, math.nan, f"{type(exc).__name__}: {exc}"))
        log.info("ablation %s=%s done in %.1fs", axis, value, time.perf_counter() - t0)
    return rows


def ablation_csv(rows) -> str:
    lines = ["axis,value,epsilon,min_points,n_components,mean,std"]
    for r in rows:
        hp = r.hyperparameters
        eps, mp, nc = (hp.epsilon, hp.min_points, hp.n_components) if hp else ("", "", "")
        lines.append(f"{r.axis},{r.value:g},{eps},{mp},{nc},{_fmt(r.bd_mean)},{_fmt(r.bd_std)}")
    return "\n".join(lines) + "\n"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """What a command was run with and what it produced; enough to replay it."""

    command: str
    argv: list
    config: dict | None
    seed: int | None
    tool_version: str = __version__
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def stage(self, name: str):
        manifest = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                manifest.timings[name] = round(time.perf_counter() - self.t0, 3)

        return _Timer()

    def add_input(self, path) -> None:
        if path is not None and Path(path).is_file():
            self.inputs[str(path)] = file_digest(path)

    def add_output(self, path) -> None:
        if path is not None and Path(path).is_file():
            self.outputs[str(path)] = file_digest(path)

    def to_dict(self) -> dict:
        return {"command": self.command, "argv": self.argv, "config": self.config, "seed": self.seed,
                "tool_version": self.tool_version, "inputs": self.inputs, "outputs": self.outputs,
                "timings": self.timings}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        return cls(d["command"], d["argv"], d.get("config"), d.get("seed"), d.get("tool_version", ""),
                   d.get("inputs", {}), d.get("outputs", {}), d.get("timings", {}))
