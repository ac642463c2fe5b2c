"""Monte Carlo divergences between fitted mixtures.

Symmetric KL drives hyperparameter tuning; the Bhattacharyya distance,
integrated uniformly over the port area, is the evaluation metric. Binary
membership models (density 1 inside a polygon set, 0 outside) plug into the
same Bhattacharyya estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .exceptions import AllRerunsInfiniteError, MismatchedTransformsError
from .mixture import GmmModel, log_density, sample
from .planar import points_in_polygon, shoelace_area
from .preprocess import StandardizationTransform
from .seeding import as_generator, derive_rng
from .types import RoiPolygon


class DensityModel(Protocol):
    def density(self, points: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class PortArea:
    """ROI mapped into standardized coordinates."""

    ring: np.ndarray
    area: float
    bbox: tuple

    @classmethod
    def from_roi(cls, roi: RoiPolygon, transform: StandardizationTransform) -> "PortArea":
        return cls.from_ring(transform.apply(roi.ring))

    @classmethod
    def from_ring(cls, ring) -> "PortArea":
        ring = np.asarray(ring, dtype=float)
        area = shoelace_area(ring)
        if not area > 0:
            raise ValueError("port area must be positive")
        bbox = (float(ring[:, 0].min()), float(ring[:, 1].min()), float(ring[:, 0].max()), float(ring[:, 1].max()))
        return cls(ring, float(area), bbox)

    @property
    def acceptance_rate(self) -> float:
        """Expected fraction of bounding-box draws that land inside the region."""
        x0, y0, x1, y1 = self.bbox
        return self.area / ((x1 - x0) * (y1 - y0))

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` points uniform over the region by rejection from the bounding box."""
        x0, y0, x1, y1 = self.bbox
        out = []
        have = 0
        batch = max(int(n / max(self.acceptance_rate, 1e-3) * 1.1), 16)
        while have < n:
            cand = np.column_stack([rng.uniform(x0, x1, batch), rng.uniform(y0, y1, batch)])
            cand = cand[points_in_polygon(cand, self.ring)]
            out.append(cand)
            have += len(cand)
        return np.vstack(out)[:n]


def _density(model, points) -> np.ndarray:
    if isinstance(model, GmmModel):
        return np.exp(log_density(model, points))
    return np.asarray(model.density(points), dtype=float)


def _check_transforms(p, q):
    tp = getattr(p, "transform", None)
    tq = getattr(q, "transform", None)
    if tp is not None and tq is not None and tp != tq:
        raise MismatchedTransformsError("models live in different standardized coordinate systems")


def kl_divergence_mc(p: GmmModel, q: GmmModel, n_samples: int = 10_000, random_state=None) -> float:
    """Monte Carlo KL(p || q) in nats from ``n_samples`` ancestral draws of ``p``."""
    _check_transforms(p, q)
    rng = as_generator(random_state)
    x = sample(p, n_samples, rng)
    return float(np.mean(log_density(p, x) - log_density(q, x)))


def kl_symm(p: GmmModel, q: GmmModel, n_samples: int = 10_000, seed: int = 0) -> float:
    """max(KL(p||q), KL(q||p)), each direction sampling its first argument.

    Both directions start from the same seed so the result does not depend
    on argument order.
    """
    forward = kl_divergence_mc(p, q, n_samples, np.random.default_rng(seed))
    backward = kl_divergence_mc(q, p, n_samples, np.random.default_rng(seed))
    return max(forward, backward)


def bhattacharyya_coefficient_mci(p, q, area: PortArea, n_samples: int = 10_000, random_state=None) -> float:
    """A * mean(sqrt(p(x) q(x))) over ``n_samples`` uniform draws from the port area."""
    _check_transforms(p, q)
    rng = as_generator(random_state)
    x = area.sample_uniform(n_samples, rng)
    return float(area.area * np.mean(np.sqrt(_density(p, x) * _density(q, x))))


def bhattacharyya_mci(p, q, area: PortArea, n_samples: int = 10_000, random_state=None) -> float:
    """Single-rerun Bhattacharyya distance; +inf when the sampled overlap is zero."""
    bc = bhattacharyya_coefficient_mci(p, q, area, n_samples, random_state)
    return math.inf if bc <= 0 else -math.log(bc)


@dataclass(frozen=True)
class BhattacharyyaEstimate:
    mean: float
    std: float
    lower: float
    upper: float
    samples_per_rerun: int
    reruns: int
    n_infinite: int
    values: tuple

    def to_dict(self) -> dict:
        return {
            "mean": self.mean, "std": self.std, "lower_95": self.lower, "upper_95": self.upper,
            "samples_per_rerun": self.samples_per_rerun, "reruns": self.reruns,
            "n_infinite": self.n_infinite,
        }


def evaluate(p, q, area: PortArea, n_samples: int = 10_000, reruns: int = 200, seed: int = 0) -> BhattacharyyaEstimate:
    """Bhattacharyya distance over independent reruns with seeds derived from ``seed``.

    Statistics cover the finite reruns; infinite ones are counted separately.
    The 95% bounds are a normal interval on the mean.
    """
    values = [bhattacharyya_mci(p, q, area, n_samples, derive_rng(seed, i)) for i in range(reruns)]
    finite = np.array([v for v in values if math.isfinite(v)])
    if finite.size == 0:
        raise AllRerunsInfiniteError(f"all {reruns} reruns had zero overlap")
    mean = float(finite.mean())
    std = float(finite.std(ddof=1)) if finite.size > 1 else 0.0
    half = 1.96 * std / math.sqrt(finite.size)
    return BhattacharyyaEstimate(mean, std, mean - half, mean + half, n_samples, reruns,
                                 reruns - int(finite.size), tuple(values))
