"""Device gauge group: an ordered product of one-parameter factors.

Every factor kind uses an additive canonical coordinate, so composition
is coordinate-wise addition throughout:

* ``circle`` - radians, wrapped into [0, 2*pi);
* ``line`` - plain additive real;
* ``positive_scale`` and ``intensity`` - multiplicative factors stored in
  log-space (the stored coordinate is ln of the physical multiplier).

Factors may carry closed coordinate bounds containing 0.  Composition and
inversion check bounds by default; circle coordinates are checked through
their signed representative in (-pi, pi].
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    BoundsViolation,
    NonFiniteInput,
    OutOfRange,
    SpecMismatch,
    UnknownFactor,
    ValidationError,
)

TWO_PI = 2.0 * math.pi


class FactorKind(str, Enum):
    CIRCLE = "circle"
    LINE = "line"
    POSITIVE_SCALE = "positive_scale"
    INTENSITY = "intensity"

    @property
    def periodic(self) -> bool:
        return self is FactorKind.CIRCLE


def normalize_coord(kind: FactorKind, x: float) -> float:
    """Canonical representative: [0, 2*pi) for circle, identity otherwise."""
    if kind.periodic:
        x = x % TWO_PI
        if x == TWO_PI:  # guard against rounding in the modulo itself
            x = 0.0
    return x


def signed_representative(kind: FactorKind, x: float) -> float:
    """Representative nearest 0; circle maps into (-pi, pi].

    The antipodal value pi maps to +pi (positive direction wins ties).
    """
    if not kind.periodic:
        return x
    r = x % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


def circle_delta(a: float, b: float) -> float:
    """Signed shorter-arc step from a to b, in (-pi, pi]."""
    return signed_representative(FactorKind.CIRCLE, b - a)


@dataclass(frozen=True)
class Factor:
    """One named one-parameter factor, with optional coordinate bounds."""

    name: str
    kind: FactorKind
    bounds: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("factor name must be non-empty")
        if not isinstance(self.kind, FactorKind):
            object.__setattr__(self, "kind", FactorKind(self.kind))
        if self.bounds is not None:
            lo, hi = float(self.bounds[0]), float(self.bounds[1])
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValidationError(f"factor {self.name}: bounds must be finite")
            if not (lo <= 0.0 <= hi):
                raise ValidationError(
                    f"factor {self.name}: bounds must contain 0, got [{lo}, {hi}]"
                )
            object.__setattr__(self, "bounds", (lo, hi))

    def in_bounds(self, x: float) -> bool:
        if self.bounds is None:
            return True
        lo, hi = self.bounds
        return lo <= signed_representative(self.kind, x) <= hi

    def to_json_dict(self) -> dict:
        d: dict = {"name": self.name, "kind": self.kind.value}
        if self.bounds is not None:
            d["bounds"] = list(self.bounds)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "Factor":
        bounds = d.get("bounds")
        return cls(
            name=d["name"],
            kind=FactorKind(d["kind"]),
            bounds=tuple(bounds) if bounds is not None else None,
        )


@dataclass(frozen=True)
class GaugeGroupSpec:
    """Ordered factor list defining the product group."""

    factors: tuple[Factor, ...]

    def __post_init__(self) -> None:
        factors = tuple(self.factors)
        object.__setattr__(self, "factors", factors)
        names = [f.name for f in factors]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate factor names: {names}")

    @property
    def dim(self) -> int:
        return len(self.factors)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.factors):
            if f.name == name:
                return i
        raise UnknownFactor(f"no factor named {name!r} in {self.names}")

    def factor(self, name: str) -> Factor:
        return self.factors[self.index_of(name)]

    def element(self, coords: Sequence[float], check_bounds: bool = True) -> "GroupElement":
        return GroupElement.of(self, coords, check_bounds=check_bounds)

    def to_json_dict(self) -> dict:
        return {"factors": [f.to_json_dict() for f in self.factors]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d: dict) -> "GaugeGroupSpec":
        return cls(tuple(Factor.from_json_dict(f) for f in d["factors"]))

    @classmethod
    def from_json(cls, text: str) -> "GaugeGroupSpec":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class GroupElement:
    """Immutable element: canonical coordinates against a fixed spec."""

    spec: GaugeGroupSpec
    coords: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.coords) != self.spec.dim:
            raise ValidationError(
                f"expected {self.spec.dim} coordinates, got {len(self.coords)}"
            )
        normalized = []
        for f, x in zip(self.spec.factors, self.coords):
            x = float(x)
            if not math.isfinite(x):
                raise NonFiniteInput(f"factor {f.name}: coordinate {x!r}")
            normalized.append(normalize_coord(f.kind, x))
        object.__setattr__(self, "coords", tuple(normalized))

    @classmethod
    def of(
        cls,
        spec: GaugeGroupSpec,
        coords: Sequence[float],
        check_bounds: bool = True,
    ) -> "GroupElement":
        g = cls(spec, tuple(coords))
        if check_bounds:
            _check_bounds(g)
        return g

    def coord(self, name: str) -> float:
        return self.coords[self.spec.index_of(name)]

    def coords_by_name(self) -> dict[str, float]:
        return dict(zip(self.spec.names, self.coords))

    def signed_coords(self) -> tuple[float, ...]:
        """Coordinates with circle entries mapped into (-pi, pi]."""
        return tuple(
            signed_representative(f.kind, x)
            for f, x in zip(self.spec.factors, self.coords)
        )

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return compose(self, other)


def _check_bounds(g: GroupElement) -> None:
    for f, x in zip(g.spec.factors, g.coords):
        if not f.in_bounds(x):
            raise BoundsViolation(
                f"factor {f.name}: coordinate {signed_representative(f.kind, x):g} "
                f"outside bounds {f.bounds}"
            )


def identity(spec: GaugeGroupSpec) -> GroupElement:
    return GroupElement(spec, (0.0,) * spec.dim)


def compose(a: GroupElement, b: GroupElement, check_bounds: bool = True) -> GroupElement:
    """Coordinate-wise group product (addition in canonical coordinates)."""
    if a.spec != b.spec:
        raise SpecMismatch("cannot compose elements over different specs")
    coords = tuple(x + y for x, y in zip(a.coords, b.coords))
    return GroupElement.of(a.spec, coords, check_bounds=check_bounds)


def inverse(g: GroupElement, check_bounds: bool = True) -> GroupElement:
    return GroupElement.of(
        g.spec, tuple(-x for x in g.coords), check_bounds=check_bounds
    )


def quotient_spec(spec: GaugeGroupSpec, kernel_factors: Iterable[str]) -> GaugeGroupSpec:
    """Spec with the named factors removed; order of the rest is kept."""
    drop = set(kernel_factors)
    unknown = drop - set(spec.names)
    if unknown:
        raise UnknownFactor(f"not in spec: {sorted(unknown)}")
    return GaugeGroupSpec(tuple(f for f in spec.factors if f.name not in drop))


@dataclass(frozen=True)
class GroupCurve:
    """Piecewise path in the group: samples (t_k, g_k) with t strictly increasing."""

    samples: tuple[tuple[float, GroupElement], ...]

    def __post_init__(self) -> None:
        samples = tuple((float(t), g) for t, g in self.samples)
        object.__setattr__(self, "samples", samples)
        if not samples:
            raise ValidationError("curve needs at least one sample")
        ts = [t for t, _ in samples]
        if any(not math.isfinite(t) for t in ts):
            raise NonFiniteInput("curve parameters must be finite")
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            raise ValidationError("curve parameters must be strictly increasing")
        spec = samples[0][1].spec
        if any(g.spec != spec for _, g in samples):
            raise SpecMismatch("all curve samples must share one spec")

    @property
    def spec(self) -> GaugeGroupSpec:
        return self.samples[0][1].spec

    @property
    def t_range(self) -> tuple[float, float]:
        return self.samples[0][0], self.samples[-1][0]


def evaluate_curve(curve: GroupCurve, t: float) -> GroupElement:
    """Per-factor linear interpolation; circle factors move along the
    shorter arc (ties at pi resolved in the positive direction).

    Multi-turn paths are represented by sampling densely enough that
    consecutive circle steps stay below pi.
    """
    t = float(t)
    t0, t1 = curve.t_range
    if not (t0 <= t <= t1):
        raise OutOfRange(f"t={t:g} outside sampled range [{t0:g}, {t1:g}]")
    ts = [s for s, _ in curve.samples]
    i = bisect_right(ts, t) - 1
    if i >= len(ts) - 1:
        return curve.samples[-1][1]
    ta, ga = curve.samples[i]
    tb, gb = curve.samples[i + 1]
    u = (t - ta) / (tb - ta)
    coords = []
    for f, xa, xb in zip(curve.spec.factors, ga.coords, gb.coords):
        if f.kind.periodic:
            coords.append(xa + u * circle_delta(xa, xb))
        else:
            coords.append(xa + u * (xb - xa))
    # samples are already bounds-checked and linear interpolation between
    # in-bounds representatives cannot leave a closed interval
    return GroupElement.of(curve.spec, coords, check_bounds=False)
