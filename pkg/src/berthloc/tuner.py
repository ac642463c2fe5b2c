"""Tree-structured Parzen Estimator search over DBSCAN hyperparameters."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .augment import augment_dataset, snap_cloud
from .divergence import kl_symm
from .exceptions import AllTrialsFailedError, BerthlocError, ConfigError
from .ingest import Dataset
from .mixture import FitOptions, select_n_components
from .preprocess import fit_standardizer
from .seeding import derive_rng, derive_seed
from .stopdetect import EPSILON_BOUNDS, MIN_POINTS_BOUNDS, DbscanParams, filter_stops

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    """Log-uniform epsilon (meters) and uniform integer min_points."""

    epsilon: tuple = EPSILON_BOUNDS
    min_points: tuple = MIN_POINTS_BOUNDS

    def __post_init__(self):
        lo, hi = self.epsilon
        if not 0 < lo < hi:
            raise ConfigError(f"invalid epsilon bounds {self.epsilon}")
        a, b = self.min_points
        if not 1 <= a <= b:
            raise ConfigError(f"invalid min_points bounds {self.min_points}")

    @property
    def log_epsilon(self) -> tuple:
        return math.log(self.epsilon[0]), math.log(self.epsilon[1])

    def sample_prior(self, rng: np.random.Generator) -> DbscanParams:
        lo, hi = self.log_epsilon
        eps = math.exp(rng.uniform(lo, hi))
        mp = int(rng.integers(self.min_points[0], self.min_points[1] + 1))
        return self.clip(eps, mp)

    def clip(self, epsilon: float, min_points: int) -> DbscanParams:
        eps = min(max(float(epsilon), self.epsilon[0]), self.epsilon[1])
        mp = min(max(int(min_points), self.min_points[0]), self.min_points[1])
        return DbscanParams(eps, mp)


@dataclass(frozen=True)
class TuningTrial:
    index: int
    params: DbscanParams
    n_components: Optional[int]
    objective: float
    wall_time: float
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.objective)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "epsilon": self.params.epsilon,
            "min_points": self.params.min_points,
            "n_components": self.n_components,
            "objective": self.objective if math.isfinite(self.objective) else None,
            "wall_time": self.wall_time,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TuningTrial":
        obj = d.get("objective")
        return cls(int(d["index"]), DbscanParams(float(d["epsilon"]), int(d["min_points"])),
                   d.get("n_components"), math.inf if obj is None else float(obj),
                   float(d.get("wall_time", 0.0)), d.get("error"))


@dataclass(frozen=True)
class TpeOptions:
    trials: int = 100
    warm_start: int = 30
    gamma: float = 0.1
    candidates: int = 24
    bandwidth_floor: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= self.warm_start:
            raise ConfigError("warm_start must be >= 0")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.candidates < 1:
            raise ConfigError("candidates must be >= 1")


def _silverman(x: np.ndarray, floor: float) -> float:
    n = len(x)
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    iqr = float(np.subtract(*np.percentile(x, [75, 25]))) / 1.34 if n > 1 else 0.0
    spread = min(sd, iqr) if iqr > 0 else sd
    return max(0.9 * spread * n ** -0.2, floor)


class _LogEpsilonKde:
    """Gaussian KDE in log-epsilon, renormalized to the bounded interval."""

    def __init__(self, centers, bounds, floor_frac):
        self.centers = np.asarray(centers, dtype=float)
        self.lo, self.hi = bounds
        self.bw = _silverman(self.centers, floor_frac * (self.hi - self.lo))

    def sample(self, n, rng):
        idx = rng.integers(0, len(self.centers), n)
        x = self.centers[idx] + self.bw * rng.standard_normal(n)
        return np.clip(x, self.lo, self.hi)

    def log_pdf(self, x):
        from scipy.special import ndtr

        z = (np.asarray(x)[:, None] - self.centers[None, :]) / self.bw
        mass = ndtr((self.hi - self.centers) / self.bw) - ndtr((self.lo - self.centers) / self.bw)
        k = np.exp(-0.5 * z**2) / (self.bw * math.sqrt(2 * math.pi)) / mass[None, :]
        return np.log(np.mean(k, axis=1) + 1e-300)


class _IntegerSmoothing:
    """Categorical distribution over integer levels with add-one counts."""

    def __init__(self, values, bounds):
        self.levels = np.arange(bounds[0], bounds[1] + 1)
        counts = np.ones(len(self.levels))
        np.add.at(counts, np.asarray(values, dtype=int) - bounds[0], 1.0)
        self.p = counts / counts.sum()

    def sample(self, n, rng):
        return self.levels[rng.choice(len(self.levels), size=n, p=self.p)]

    def log_pdf(self, x):
        return np.log(self.p[np.asarray(x, dtype=int) - self.levels[0]])


def tpe_suggest(history, space: SearchSpace, options: TpeOptions, rng: np.random.Generator) -> DbscanParams:
    """Next hyperparameters: prior draws during warm start, then argmax of l(x)/g(x).

    Failed trials (infinite objective) count as bad observations.
    """
    if len(history) < max(options.warm_start, 1):
        return space.sample_prior(rng)
    order = sorted(range(len(history)), key=lambda i: (history[i].objective, i))
    n_good = max(1, math.ceil(options.gamma * len(history)))
    good = [history[i].params for i in order[:n_good]]
    bad = [history[i].params for i in order[n_good:]]
    if not bad:
        return space.sample_prior(rng)
    bounds = space.log_epsilon
    le_good = _LogEpsilonKde([math.log(p.epsilon) for p in good], bounds, options.bandwidth_floor)
    le_bad = _LogEpsilonKde([math.log(p.epsilon) for p in bad], bounds, options.bandwidth_floor)
    mp_good = _IntegerSmoothing([p.min_points for p in good], space.min_points)
    mp_bad = _IntegerSmoothing([p.min_points for p in bad], space.min_points)

    x_eps = le_good.sample(options.candidates, rng)
    x_mp = mp_good.sample(options.candidates, rng)
    score = (le_good.log_pdf(x_eps) + mp_good.log_pdf(x_mp)) - (le_bad.log_pdf(x_eps) + mp_bad.log_pdf(x_mp))
    best = int(np.argmax(score))
    return space.clip(math.exp(x_eps[best]), int(x_mp[best]))


@dataclass
class TrialContext:
    """Per-split inputs shared across trials, including the distance-matrix caches."""

    split_a: Dataset
    split_b: Dataset
    caches: tuple = field(default_factory=lambda: ({}, {}))


def trial_clouds(params: DbscanParams, ctx: TrialContext, n_aug: int, geohash_enabled: bool,
                 precision: int, seed: int):
    """Stop-filter, augment and optionally snap both splits; returns (clouds, filtered datasets)."""
    filtered = [filter_stops(s, params, cache) for s, cache in zip((ctx.split_a, ctx.split_b), ctx.caches)]
    clouds = []
    for d in filtered:
        cloud = augment_dataset(d, n_aug, derive_rng(seed, 0))
        if geohash_enabled:
            cloud = snap_cloud(cloud, precision)
        clouds.append(cloud)
    return clouds, filtered


def run_trial(params: DbscanParams, split_a, split_b=None, config=None, seed: int = 0,
              index: int = 0) -> TuningTrial:
    """Evaluate one hyperparameter setting; any pipeline failure scores +inf.

    ``split_a`` may be a :class:`TrialContext` (with ``split_b`` None) so that
    distance matrices are reused across trials.
    """
    ctx = split_a if isinstance(split_a, TrialContext) else TrialContext(split_a, split_b)
    config = config or ctx.split_a.port
    t0 = time.perf_counter()
    try:
        clouds, filtered = trial_clouds(params, ctx, config.train_aug_points, config.geohash_enabled,
                                        config.geohash_precision, derive_seed(seed, 1))
        transform = fit_standardizer(np.vstack([d.lonlat() for d in filtered]))
        xa, xb = (transform.apply(c.points) for c in clouds)
        options = FitOptions(config.tune_tolerance, config.tune_restarts, config.max_iterations,
                             config.covariance_floor, derive_seed(seed, 2))
        report = select_n_components(xa, xb, config.ncomponents_range, options, config.ncomponents_step,
                                     transform, jobs=config.jobs)
        gmm_a, gmm_b = report.models[report.selected_n_components]
        objective = kl_symm(gmm_a, gmm_b, config.kl_samples, derive_seed(seed, 3))
        if not math.isfinite(objective):
            raise BerthlocError("non-finite divergence")
        return TuningTrial(index, params, report.selected_n_components, objective, time.perf_counter() - t0)
    except BerthlocError as exc:
        log.info("trial %d %s failed: %s", index, params, exc)
        return TuningTrial(index, params, None, math.inf, time.perf_counter() - t0, type(exc).__name__)


@dataclass(frozen=True)
class TuningResult:
    best: TuningTrial
    history: tuple

    def to_dict(self) -> dict:
        return {"best": self.best.to_dict(), "history": [t.to_dict() for t in self.history]}


def read_trials(path) -> list:
    p = Path(path)
    if not p.exists():
        return []
    out = []
    for line in p.read_text().splitlines():
        if line.strip():
            try:
                out.append(TuningTrial.from_dict(json.loads(line)))
            except (ValueError, KeyError):
                break  # a torn final line from an interrupted run
    return out


def optimize(objective: Callable[[DbscanParams, int], tuple], options: TpeOptions,
             space: SearchSpace = SearchSpace(), history=None, log_path=None) -> TuningResult:
    """Generic TPE loop; ``objective(params, index)`` returns (value, n_components).

    Suggestions at trial ``i`` use an RNG derived from (seed, i), so a resumed
    history replays identically.
    """
    history = list(history or [])
    fh = Path(log_path).open("a") if log_path is not None else None
    try:
        for i in range(len(history), options.trials):
            params = tpe_suggest(history, space, options, derive_rng(options.seed, i))
            t0 = time.perf_counter()
            result = objective(params, i)
            trial = result if isinstance(result, TuningTrial) else \
                TuningTrial(i, params, result[1], float(result[0]), time.perf_counter() - t0)
            history.append(trial)
            if fh is not None:
                fh.write(json.dumps(trial.to_dict()) + "\n")
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    finite = [t for t in history if not t.failed]
    if not finite:
        raise AllTrialsFailedError(f"all {len(history)} trials failed")
    best = min(finite, key=lambda t: (t.objective, t.index))
    return TuningResult(best, tuple(history))


def tune(split_a: Dataset, split_b: Dataset, config=None, trials_path=None, trials: int | None = None,
         warm_start: int | None = None) -> TuningResult:
    """Run the configured number of trials and return the lowest-divergence one.

    With ``trials_path`` every finished trial is appended as a JSON line and an
    existing file resumes the search where it stopped.
    """
    config = config or split_a.port
    n_trials = trials if trials is not None else config.tpe_trials
    n_warm = warm_start if warm_start is not None else config.tpe_warm_start
    options = TpeOptions(trials=n_trials, warm_start=min(n_warm, n_trials), seed=derive_seed(config.rng_seed, 11))
    ctx = TrialContext(split_a, split_b)
    history = read_trials(trials_path)[:n_trials] if trials_path is not None else []

    def objective(params, i):
        trial = run_trial(params, ctx, None, config, derive_seed(config.rng_seed, 12, i), i)
        log.info("trial %d eps=%.2f minpts=%d nc=%s obj=%.4g (%.1fs)", i, params.epsilon, params.min_points,
                 trial.n_components, trial.objective, trial.wall_time)
        return trial

    return optimize(objective, options, history=history, log_path=trials_path)


def branin(params: DbscanParams, space: SearchSpace = SearchSpace()) -> float:
    """Branin function with log-epsilon mapped to [-5, 10] and min_points to [0, 15]."""
    lo, hi = space.log_epsilon
    x1 = -5.0 + 15.0 * (math.log(params.epsilon) - lo) / (hi - lo)
    a, b = space.min_points
    x2 = 15.0 * (params.min_points - a) / (b - a)
    t = 1.0 / (8 * math.pi)
    return (x2 - 5.1 / (4 * math.pi**2) * x1**2 + 5 / math.pi * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10


def random_search(objective: Callable[[DbscanParams], float], trials: int, seed: int = 0,
                  space: SearchSpace = SearchSpace()) -> list:
    """Objective values of ``trials`` independent prior draws."""
    return [objective(space.sample_prior(derive_rng(seed, i))) for i in range(trials)]
