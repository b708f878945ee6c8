"""Image norms, distances, and the natural alignment distance.

The k-norm of an image treats the pixel grid as a flat vector:
``norm_k = (sum |v|**k) ** (1/k)`` for real k >= 1, and ``max |v|`` for
k = infinity.  Distances are norms of pixel-wise differences between
images on identical geometries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .actions import ActionBinding, apply
from .detector import Image
from .errors import BadK, GeometryMismatch, LengthMismatch, NonFiniteInput, ValidationError
from .groups import GroupElement


@dataclass(frozen=True)
class MetricSpec:
    """Norm order; k = math.inf selects the max norm."""

    k: float = 2.0

    def __post_init__(self) -> None:
        k = float(self.k)
        if math.isnan(k) or k < 1.0:
            raise BadK(f"norm order must satisfy k >= 1, got {self.k!r}")
        object.__setattr__(self, "k", k)

    @property
    def label(self) -> str:
        return "inf" if math.isinf(self.k) else f"{self.k:g}"


def _vector_norm_k(x: np.ndarray, k: float) -> float:
    a = np.abs(np.asarray(x, dtype=np.float64)).ravel()
    if a.size == 0:
        return 0.0
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput("norm of a non-finite vector")
    if math.isinf(k):
        return float(a.max())
    if k == 1.0:
        return float(a.sum())
    if k == 2.0:
        return float(np.sqrt(np.dot(a, a)))
    peak = float(a.max())
    if peak == 0.0:
        return 0.0
    # scale by the peak so that large k cannot overflow
    return peak * float(np.sum((a / peak) ** k) ** (1.0 / k))


def norm_k(img: Image, m: MetricSpec) -> float:
    return _vector_norm_k(img.values, m.k)


def distance_k(a: Image, b: Image, m: MetricSpec) -> float:
    if a.geometry != b.geometry:
        raise GeometryMismatch("distance between images on different geometries")
    return _vector_norm_k(a.values - b.values, m.k)


# ---------------------------------------------------------------------------
# Degeneracy diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilizerReport:
    """Per-factor sensitivity of one image to the induced action."""

    factor_names: tuple[str, ...]
    sensitivities: tuple[float, ...]
    degenerate: tuple[str, ...]
    perturbation_rank: int
    step: float
    tolerance: float
    metric: MetricSpec

    def sensitivity_of(self, name: str) -> float:
        return self.sensitivities[self.factor_names.index(name)]

    def to_json_dict(self) -> dict:
        return {
            "factor_names": list(self.factor_names),
            "sensitivities": {
                n: s for n, s in zip(self.factor_names, self.sensitivities)
            },
            "degenerate": list(self.degenerate),
            "perturbation_rank": self.perturbation_rank,
            "step": self.step,
            "tolerance": self.tolerance,
            "metric_k": self.metric.label,
        }


def stabilizer_diagnostic(
    img: Image,
    binding: ActionBinding,
    m: MetricSpec = MetricSpec(2.0),
    step: float = 1e-3,
    tol: float | None = None,
) -> StabilizerReport:
    """Flag factors whose induced action leaves this image unchanged.

    Sensitivity per factor j is the central-difference response
    ``||apply(+step e_j) - apply(-step e_j)||_2 / (2 step)``; factors
    below ``tol`` (default 1e-8 * ||img||_2) are reported degenerate.
    The rank is that of the matrix of perturbation directions.
    """
    if tol is None:
        tol = 1e-8 * img.norm2
    spec = binding.spec
    names = spec.names
    dirs = []
    sens = []
    for j in range(spec.dim):
        e = [0.0] * spec.dim
        e[j] = step
        plus = apply(GroupElement(spec, tuple(e)), img, binding)
        e[j] = -step
        minus = apply(GroupElement(spec, tuple(e)), img, binding)
        d = (plus.values - minus.values).ravel()
        dirs.append(d)
        sens.append(float(np.linalg.norm(d)) / (2.0 * step))
    degenerate = tuple(n for n, s in zip(names, sens) if s < tol)
    mat = np.stack(dirs, axis=1)
    if np.any(mat):
        svals = np.linalg.svd(mat, compute_uv=False)
        rank = int(np.sum(svals > 1e-8 * svals[0]))
    else:
        rank = 0
    return StabilizerReport(
        factor_names=tuple(names),
        sensitivities=tuple(sens),
        degenerate=degenerate,
        perturbation_rank=rank,
        step=step,
        tolerance=tol,
        metric=m,
    )


# ---------------------------------------------------------------------------
# Natural alignment distance
# ---------------------------------------------------------------------------


class DistanceForm(str, Enum):
    QUADRATIC = "quadratic"
    GENERAL_NORM = "general_norm"
    LINEAR = "linear"


@dataclass(frozen=True)
class WeightVector:
    """Non-negative factor weights, normalized to sum to 1."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        w = tuple(float(x) for x in self.weights)
        if not w:
            raise ValidationError("weight vector must be non-empty")
        if any(not math.isfinite(x) for x in w):
            raise NonFiniteInput("weights must be finite")
        if any(x < 0.0 for x in w):
            raise ValidationError("weights must be non-negative")
        total = sum(w)
        if total <= 0.0:
            raise ValidationError("weights must not all be zero")
        object.__setattr__(self, "weights", tuple(x / total for x in w))

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls((1.0,) * n)

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)


def natural_distance(
    coords: Sequence[float],
    w: WeightVector,
    form: DistanceForm = DistanceForm.QUADRATIC,
    metric: MetricSpec = MetricSpec(2.0),
) -> float:
    """Scalar misalignment figure from quotient coordinates.

    * quadratic:     sum w_j |y_j|**2
    * general_norm:  k-norm of the weighted coordinates {w_j y_j}
    * linear:        signed sum w_j y_j (sign cancellation is possible;
                     the report path also carries the absolute variant)

    Circle coordinates should be passed as their signed representatives
    so that magnitudes mean arc length from the identity.
    """
    y = [float(v) for v in coords]
    if len(y) != len(w):
        raise LengthMismatch(f"{len(y)} coordinates vs {len(w)} weights")
    if any(not math.isfinite(v) for v in y):
        raise NonFiniteInput("coordinates must be finite")
    form = DistanceForm(form)
    if form is DistanceForm.QUADRATIC:
        return float(sum(wi * yi * yi for wi, yi in zip(w, y)))
    if form is DistanceForm.GENERAL_NORM:
        return _vector_norm_k(np.array([wi * yi for wi, yi in zip(w, y)]), metric.k)
    return float(sum(wi * yi for wi, yi in zip(w, y)))


def natural_distance_forms(
    coords: Sequence[float],
    w: WeightVector,
    metric: MetricSpec = MetricSpec(2.0),
) -> dict[str, float]:
    """All supported forms at once, plus the absolute linear variant."""
    return {
        "quadratic": natural_distance(coords, w, DistanceForm.QUADRATIC),
        "general_norm": natural_distance(coords, w, DistanceForm.GENERAL_NORM, metric),
        "linear": natural_distance(coords, w, DistanceForm.LINEAR),
        "linear_abs": natural_distance(
            [abs(float(v)) for v in coords], w, DistanceForm.LINEAR
        ),
    }
