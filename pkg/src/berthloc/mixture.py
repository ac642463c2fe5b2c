"""Full-covariance bivariate Gaussian mixtures: EM fitting, MDL, and component-count selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DegenerateFitError, NumericError, TooFewPointsError
from .preprocess import StandardizationTransform
from .seeding import as_generator, derive_seed

log = logging.getLogger(__name__)

N_FEATURES = 2
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FitOptions:
    tolerance: float = 1e-4
    restarts: int = 2
    max_iterations: int = 500
    covariance_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


TUNING_FIT = FitOptions(tolerance=1e-4, restarts=2)
FINAL_FIT = FitOptions(tolerance=1e-5, restarts=5)


@dataclass(frozen=True, eq=False)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    transform: Optional[StandardizationTransform] = None
    fit_log_likelihood: float = float("nan")
    n_iterations: int = 0
    converged: bool = False

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {
            "n_components": self.n_components,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": [c.ravel().tolist() for c in self.covariances],
            "transform": self.transform.to_dict() if self.transform else None,
            "fit": {
                "log_likelihood": self.fit_log_likelihood,
                "iterations": self.n_iterations,
                "converged": self.converged,
            },
        }

    @classmethod
    def from_dict(cls, d) -> "GmmModel":
        fit = d.get("fit", {})
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            means=np.asarray(d["means"], dtype=float).reshape(-1, 2),
            covariances=np.asarray(d["covariances"], dtype=float).reshape(-1, 2, 2),
            transform=StandardizationTransform.from_dict(d["transform"]) if d.get("transform") else None,
            fit_log_likelihood=float(fit.get("log_likelihood", float("nan"))),
            n_iterations=int(fit.get("iterations", 0)),
            converged=bool(fit.get("converged", False)),
        )


def logsumexp(a, axis=0, keepdims=False):
    """Log-sum-exp along ``axis``, safe when a whole slice is -inf."""
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    return out if keepdims else np.squeeze(out, axis=axis)


def _component_log_pdf(X, means, covariances):
    """(k, n) log N(x | mu_c, Sigma_c) using the closed-form 2x2 inverse.

    Component-major layout keeps the reductions over points contiguous.
    """
    a = covariances[:, 0, 0][:, None]
    b = covariances[:, 0, 1][:, None]
    c = covariances[:, 1, 1][:, None]
    det = a * c - b * b
    if np.any(det <= 0):
        raise NumericError("non positive-definite covariance")
    dx = X[:, 0][None, :] - means[:, 0][:, None]
    dy = X[:, 1][None, :] - means[:, 1][:, None]
    maha = c * dx * dx
    maha -= 2.0 * b * dx * dy
    maha += a * dy * dy
    maha *= -0.5 / det
    maha += -LOG_2PI - 0.5 * np.log(det)
    return maha


def _weighted_log_pdf(X, weights, means, covariances):
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return _component_log_pdf(X, means, covariances) + logw[:, None]


def log_density(m: GmmModel, points) -> np.ndarray:
    """log sum_c w_c N(x | mu_c, Sigma_c) in nats, for an (n, 2) array or a single point."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    return logsumexp(_weighted_log_pdf(X, m.weights, m.means, m.covariances), axis=0)


def responsibilities(m: GmmModel, points) -> np.ndarray:
    """(n, k) posterior component probabilities."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    lp = _weighted_log_pdf(X, m.weights, m.means, m.covariances)
    return np.exp(lp - logsumexp(lp, axis=0, keepdims=True)).T


def hard_assign(m: GmmModel, points) -> np.ndarray:
    """Index of the component with the highest posterior; ties go to the lowest index."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    return np.argmax(_weighted_log_pdf(X, m.weights, m.means, m.covariances), axis=0)


def sample(m: GmmModel, n: int, random_state=None) -> np.ndarray:
    """Ancestral sampling of ``n`` points."""
    rng = as_generator(random_state)
    counts = rng.multinomial(n, m.weights / m.weights.sum())
    chol = np.linalg.cholesky(m.covariances)
    parts = []
    for k, cnt in enumerate(counts):
        if cnt:
            z = rng.standard_normal((cnt, 2))
            parts.append(m.means[k] + z @ chol[k].T)
    return np.vstack(parts) if parts else np.empty((0, 2))


def _clamp_eigenvalues(cov, floor):
    """Raise every eigenvalue of each 2x2 covariance to at least ``floor``."""
    vals, vecs = np.linalg.eigh(cov)
    if np.all(vals >= floor):
        return cov
    vals = np.maximum(vals, floor)
    out = np.einsum("kij,kj,klj->kil", vecs, vals, vecs)
    return 0.5 * (out + np.transpose(out, (0, 2, 1)))


def _kmeans_pp(X, k, rng):
    n = len(X)
    centers = np.empty((k, 2))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[j] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))
    return centers


@dataclass
class EMTrace:
    """Per-iteration log-likelihoods of one EM run; reseeds restart the monotone segment."""

    log_likelihoods: list = field(default_factory=list)
    reseed_iterations: list = field(default_factory=list)
    responsibility_row_error: float = 0.0


def _m_step(X, resp, floor):
    nk = resp.sum(axis=1)
    weights = nk / X.shape[0]
    safe = np.maximum(nk, np.finfo(float).tiny)
    means = (resp @ X) / safe[:, None]
    dx = X[:, 0][None, :] - means[:, 0][:, None]
    dy = X[:, 1][None, :] - means[:, 1][:, None]
    rdx = resp * dx
    covs = np.empty((len(nk), 2, 2))
    covs[:, 0, 0] = np.sum(rdx * dx, axis=1) / safe
    covs[:, 0, 1] = covs[:, 1, 0] = np.sum(rdx * dy, axis=1) / safe
    covs[:, 1, 1] = np.sum(resp * dy * dy, axis=1) / safe
    return weights, means, _clamp_eigenvalues(covs, floor), nk


def run_em(X, n_components, options: FitOptions, rng, trace: Optional[EMTrace] = None):
    """One EM run from k-means++ seeded means, identity covariances and uniform weights.

    Returns (weights, means, covariances, log_likelihood, iterations, converged).
    """
    n = len(X)
    k = n_components
    floor = options.covariance_floor
    means = _kmeans_pp(X, k, rng)
    covs = np.repeat(np.eye(2)[None], k, axis=0)
    weights = np.full(k, 1.0 / k)
    collapse = 1.0 / (10.0 * n)
    reseeded = False
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, options.max_iterations + 1):
        lp = _weighted_log_pdf(X, weights, means, covs)
        ll_i = logsumexp(lp, axis=0)
        ll = float(np.sum(ll_i))
        if not np.isfinite(ll):
            raise NumericError("log-likelihood is not finite")
        resp = np.exp(lp - ll_i[None, :])
        if trace is not None:
            trace.log_likelihoods.append(ll)
            trace.responsibility_row_error = max(
                trace.responsibility_row_error, float(np.max(np.abs(resp.sum(axis=0) - 1.0)))
            )
        if np.isfinite(prev) and abs(ll - prev) < options.tolerance * max(abs(prev), 1.0):
            converged = True
            break
        prev = ll
        weights, means, covs, nk = _m_step(X, resp, floor)
        dead = np.flatnonzero(weights < collapse)
        if dead.size:
            if reseeded:
                raise DegenerateFitError(f"component weight collapsed twice (k={k}, n={n})")
            reseeded = True
            worst = np.argsort(ll_i)[: dead.size]
            means[dead] = X[worst]
            covs[dead] = np.eye(2) * max(floor, float(np.mean(np.var(X, axis=0))) / k)
            weights[dead] = 1.0 / k
            weights /= weights.sum()
            prev = -np.inf
            if trace is not None:
                trace.reseed_iterations.append(it)
    else:
        lp = _weighted_log_pdf(X, weights, means, covs)
        ll = float(np.sum(logsumexp(lp, axis=0)))
        if trace is not None:
            trace.log_likelihoods.append(ll)
    return weights, means, covs, ll, it, converged


def fit_gmm(points, n_components: int, options: FitOptions = TUNING_FIT,
            transform: Optional[StandardizationTransform] = None) -> GmmModel:
    """Best-of-``options.restarts`` EM fit on standardized (n, 2) points.

    Restart ``r`` draws its seeding from ``derive_seed(options.seed, r)``; the
    restart with the highest final log-likelihood wins (ties to the lowest index).
    """
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if len(X) < n_components:
        raise TooFewPointsError(f"{len(X)} points cannot support {n_components} components")
    best = None
    errors = []
    for r in range(options.restarts):
        rng = np.random.default_rng(derive_seed(options.seed, r))
        try:
            result = run_em(X, n_components, options, rng)
        except (DegenerateFitError, NumericError) as exc:
            errors.append(exc)
            continue
        if best is None or result[3] > best[3]:
            best = result
    if best is None:
        raise DegenerateFitError(f"all {options.restarts} restarts failed: {errors[-1]}")
    w, mu, cov, ll, it, conv = best
    return GmmModel(w, mu, cov, transform, ll, it, conv)


def n_parameters(n_components: int, n_features: int = N_FEATURES) -> int:
    """Free parameter count: means, covariance entries and weights, minus the simplex constraint."""
    return n_components * (2 * n_features + (n_features**2 - n_features) // 2 + 1) - 1


def mdl(m: GmmModel, points) -> float:
    """Description length in bits: parameter cost plus the negative log2-likelihood."""
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(X)
    if n < 1:
        raise ValueError("mdl needs at least one point")
    param_bits = 0.5 * n_parameters(m.n_components) * math.log2(n)
    data_bits = -float(np.sum(log_density(m, X))) / math.log(2.0)
    return param_bits + data_bits


@dataclass(frozen=True)
class MdlRow:
    n_components: int
    n_parameters: int
    dl_a: float
    dl_b: float

    @property
    def average(self) -> float:
        return 0.5 * (self.dl_a + self.dl_b)


@dataclass(frozen=True, eq=False)
class MdlReport:
    rows: tuple
    selected_n_components: int
    models: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "selected_n_components": self.selected_n_components,
            "rows": [
                {"n_components": r.n_components, "n_parameters": r.n_parameters,
                 "dl_a": r.dl_a, "dl_b": r.dl_b, "average": r.average}
                for r in self.rows
            ],
        }


def _fit_candidate(k, xa, xb, options, transform):
    fits = []
    for split_idx, X in enumerate((xa, xb)):
        opts = FitOptions(options.tolerance, options.restarts, options.max_iterations,
                          options.covariance_floor, derive_seed(options.seed, k, split_idx))
        fits.append(fit_gmm(X, k, opts, transform))
    return k, fits


def select_n_components(points_a, points_b, ncomponents_range, options: FitOptions = TUNING_FIT,
                        step: int = 1, transform=None, jobs: int = 1) -> MdlReport:
    """Sweep candidate component counts, one fit per split, pick the lowest mean MDL.

    Each split's description length is computed on the split the model was
    fitted to. Ties go to the smaller component count. Candidates whose fit
    fails are skipped with a warning.
    """
    xa = np.asarray(points_a, dtype=float).reshape(-1, 2)
    xb = np.asarray(points_b, dtype=float).reshape(-1, 2)
    if len(xa) == 0 or len(xb) == 0:
        raise TooFewPointsError("both splits must be non-empty")
    lo, hi = ncomponents_range
    candidates = list(range(int(lo), int(hi) + 1, max(int(step), 1)))

    def safe(k):
        try:
            return _fit_candidate(k, xa, xb, options, transform)
        except (TooFewPointsError, DegenerateFitError, NumericError) as exc:
            log.warning("skipping n_components=%d: %s", k, exc)
            return k, None

    if jobs > 1 and len(candidates) > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs, prefer="threads")(delayed(safe)(k) for k in candidates)
    else:
        results = [safe(k) for k in candidates]

    rows, models = [], {}
    for k, fits in results:
        if fits is None:
            continue
        rows.append(MdlRow(k, n_parameters(k), mdl(fits[0], xa), mdl(fits[1], xb)))
        models[k] = tuple(fits)
    if not rows:
        raise DegenerateFitError(f"no candidate in {ncomponents_range} could be fitted")
    best = min(rows, key=lambda r: (r.average, r.n_components))
    return MdlReport(tuple(rows), best.n_components, models)


class MDLGaussianMixture(DensityMixin, BaseEstimator):
    """Estimator interface to :func:`fit_gmm` on already standardized 2-D data.

    ``n_components`` may be an int, or a ``(low, high)`` range in which case
    the count minimizing the description length of ``X`` itself is chosen.
    """

    def __init__(self, n_components=1, tol=1e-4, n_init=2, max_iter=500,
                 covariance_floor=1e-6, random_state=0):
        self.n_components = n_components
        self.tol = tol
        self.n_init = n_init
        self.max_iter = max_iter
        self.covariance_floor = covariance_floor
        self.random_state = random_state

    def _options(self, seed):
        return FitOptions(self.tol, self.n_init, self.max_iter, self.covariance_floor, seed)

    def fit(self, X, y=None):
        X = check_array(X)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {X.shape[1]}")
        seed = check_random_state(self.random_state).randint(2**31 - 1)
        if isinstance(self.n_components, (tuple, list)):
            lo, hi = self.n_components
            scored = []
            for k in range(lo, hi + 1):
                try:
                    m = fit_gmm(X, k, self._options(derive_seed(seed, k)))
                except (TooFewPointsError, DegenerateFitError):
                    continue
                scored.append((mdl(m, X), k, m))
            if not scored:
                raise DegenerateFitError("no candidate component count could be fitted")
            self.description_lengths_ = {k: dl for dl, k, _ in scored}
            _, _, self.model_ = min(scored, key=lambda t: (t[0], t[1]))
        else:
            self.model_ = fit_gmm(X, int(self.n_components), self._options(seed))
        self.weights_ = self.model_.weights
        self.means_ = self.model_.means
        self.covariances_ = self.model_.covariances
        self.n_features_in_ = N_FEATURES
        return self

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return log_density(self.model_, check_array(X))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return hard_assign(self.model_, check_array(X))

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return responsibilities(self.model_, check_array(X))

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "model_")
        return sample(self.model_, n_samples, random_state)

    def description_length(self, X):
        check_is_fitted(self, "model_")
        return mdl(self.model_, check_array(X))
