"""Recovery of natural coordinates from a reference/measured image pair.

The objective F(y) = ||inverse(y).reference - measured||_k scores a
candidate correction y by carrying the reference through the misalignment
it implies.  It is minimized over a compact per-factor search box: a
full-factorial coarse grid first, then
derivative-free simplex refinement from several well-separated starts,
then clustering of the refined minimizers.  Near-degenerate problems
produce a whole set of equally good minima; the reported natural
coordinates are the member of that set closest to the identity, with
circle coordinates measured along the shorter arc.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .actions import ActionBinding, apply
from .detector import Image
from .errors import (
    AllZeroMeasured,
    BudgetExceeded,
    GeometryMismatch,
    NonFiniteInput,
    OutOfBounds,
    ValidationError,
)
from .groups import GroupElement, GaugeGroupSpec, inverse, signed_representative
from .metrics import (
    DistanceForm,
    MetricSpec,
    StabilizerReport,
    WeightVector,
    distance_k,
    natural_distance,
    natural_distance_forms,
    stabilizer_diagnostic,
)

REPRESENTATIVE_RULE = "minimum-set member closest to the identity (circle coordinates by shorter arc)"


def _worker_count() -> int:
    raw = os.environ.get("NATCALIB_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"NATCALIB_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def _parallel_chunks(fn, items):
    """Ordered map, optionally fanned out over a small thread pool."""
    items = list(items)
    workers = _worker_count()
    if workers <= 1 or len(items) < 2 * workers:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.array_split(np.arange(len(items)), workers * 4)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda idx: [fn(items[i]) for i in idx], bounds))
    return [r for part in parts for r in part]


@dataclass(frozen=True)
class OptimizerConfig:
    coarse_grid: int = 9
    refine_max_iter: int = 500
    refine_tol: float = 1e-10
    multistart_count: int = 8
    minima_cluster_tol: float = 1e-6
    coordinate_cluster_tol: float = 0.05

    def __post_init__(self) -> None:
        if self.coarse_grid < 2:
            raise ValidationError("coarse_grid must be at least 2")
        if self.refine_max_iter < 1 or self.multistart_count < 1:
            raise ValidationError("iteration and start counts must be positive")
        for attr in ("refine_tol", "minima_cluster_tol", "coordinate_cluster_tol"):
            if getattr(self, attr) <= 0:
                raise ValidationError(f"{attr} must be positive")

    def to_json_dict(self) -> dict:
        return {
            "coarse_grid": self.coarse_grid,
            "refine_max_iter": self.refine_max_iter,
            "refine_tol": self.refine_tol,
            "multistart_count": self.multistart_count,
            "minima_cluster_tol": self.minima_cluster_tol,
            "coordinate_cluster_tol": self.coordinate_cluster_tol,
        }


@dataclass(frozen=True)
class ObjectiveSpec:
    """Alignment problem: how far a candidate correction leaves the
    misaligned reference from what was actually measured."""

    reference: Image
    measured: Image
    binding: ActionBinding
    metric: MetricSpec
    bounds: tuple[tuple[float, float], ...]  # per factor, spec order

    def __post_init__(self) -> None:
        if self.reference.geometry != self.measured.geometry:
            raise GeometryMismatch("reference and measured geometries differ")
        if self.reference.geometry != self.binding.geometry:
            raise GeometryMismatch("binding geometry differs from the images'")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(bounds) != self.binding.spec.dim:
            raise ValidationError(
                f"need one bound pair per factor ({self.binding.spec.dim})"
            )
        for (lo, hi), name in zip(bounds, self.binding.spec.names):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValidationError(f"bounds for {name} must be finite")
            if not lo < hi:
                raise ValidationError(f"bounds for {name} must satisfy lo < hi")
            if not (lo <= 0.0 <= hi):
                raise ValidationError(
                    f"bounds for {name} must contain 0 so the identity is admissible"
                )
        object.__setattr__(self, "bounds", bounds)

    @property
    def spec(self) -> GaugeGroupSpec:
        return self.binding.spec

    @classmethod
    def of(
        cls,
        reference: Image,
        measured: Image,
        binding: ActionBinding,
        bounds_by_name: dict[str, tuple[float, float]],
        metric: MetricSpec = MetricSpec(2.0),
    ) -> "ObjectiveSpec":
        missing = set(binding.spec.names) - set(bounds_by_name)
        if missing:
            raise ValidationError(f"missing search bounds for {sorted(missing)}")
        ordered = tuple(bounds_by_name[n] for n in binding.spec.names)
        return cls(reference, measured, binding, metric, ordered)


def _objective_value(obj: ObjectiveSpec, y) -> float:
    # The hypothesized misalignment is the inverse of the candidate
    # correction y.  Acting with it on the reference puts one resampling
    # pass on each side of the comparison, so the noiseless minimum is
    # exactly zero at the true correction instead of carrying the extra
    # smoothing of a twice-resampled measured image.
    est = inverse(
        GroupElement(obj.spec, tuple(float(v) for v in y)), check_bounds=False
    )
    moved = apply(est, obj.reference, obj.binding)
    return distance_k(moved, obj.measured, obj.metric)


def evaluate_objective(y, obj: ObjectiveSpec) -> float:
    y = [float(v) for v in y]
    if len(y) != obj.spec.dim:
        raise ValidationError(f"expected {obj.spec.dim} coordinates")
    if any(not math.isfinite(v) for v in y):
        raise NonFiniteInput("objective coordinates must be finite")
    for v, (lo, hi), name in zip(y, obj.bounds, obj.spec.names):
        if not (lo <= v <= hi):
            raise OutOfBounds(f"{name}={v:g} outside search bounds [{lo:g}, {hi:g}]")
    return _objective_value(obj, y)


def _simplex_minimize(f, x0, lo, hi, max_iter, f_tol):
    """Nelder-Mead with reflection, expansion, contraction and shrink,
    candidates clipped into the search box.  Returns (x, fx, converged,
    evaluations)."""
    n = len(x0)
    clip = lambda x: np.minimum(np.maximum(x, lo), hi)
    verts = [clip(np.array(x0, dtype=float))]
    for i in range(n):
        step = 0.06 * (hi[i] - lo[i])
        v = verts[0].copy()
        v[i] += step
        v = clip(v)
        if v[i] == verts[0][i]:
            v[i] = verts[0][i] - step
        verts.append(clip(v))
    fv = [f(v) for v in verts]
    evals = n + 1
    converged = False
    for _ in range(max_iter):
        order = np.argsort(fv, kind="stable")
        verts = [verts[i] for i in order]
        fv = [fv[i] for i in order]
        if fv[-1] - fv[0] < f_tol:
            converged = True
            break
        centroid = np.mean(verts[:-1], axis=0)
        xr = clip(centroid + (centroid - verts[-1]))
        fr = f(xr)
        evals += 1
        if fr < fv[0]:
            xe = clip(centroid + 2.0 * (centroid - verts[-1]))
            fe = f(xe)
            evals += 1
            if fe < fr:
                verts[-1], fv[-1] = xe, fe
            else:
                verts[-1], fv[-1] = xr, fr
        elif fr < fv[-2]:
            verts[-1], fv[-1] = xr, fr
        else:
            if fr < fv[-1]:
                xc = clip(centroid + 0.5 * (xr - centroid))
            else:
                xc = clip(centroid + 0.5 * (verts[-1] - centroid))
            fc = f(xc)
            evals += 1
            if fc < min(fr, fv[-1]):
                verts[-1], fv[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    verts[i] = clip(verts[0] + 0.5 * (verts[i] - verts[0]))
                    fv[i] = f(verts[i])
                evals += n
    best = int(np.argmin(fv))
    return verts[best], fv[best], converged, evals


def _signed(spec: GaugeGroupSpec, coords) -> tuple[float, ...]:
    return tuple(
        signed_representative(f.kind, float(x))
        for f, x in zip(spec.factors, coords)
    )


def _coord_gap(spec: GaugeGroupSpec, a, b) -> np.ndarray:
    """Per-factor separation; circle factors measured along the arc."""
    gaps = []
    for f, x, y in zip(spec.factors, a, b):
        d = abs(float(x) - float(y))
        if f.kind.periodic:
            d = abs(signed_representative(f.kind, float(x) - float(y)))
        gaps.append(d)
    return np.array(gaps)


@dataclass(frozen=True)
class MinimumRecord:
    coords: tuple[float, ...]  # signed representatives
    objective: float

    def to_json_dict(self) -> dict:
        return {"coords": list(self.coords), "objective": self.objective}


@dataclass(frozen=True)
class AlignmentResult:
    factor_names: tuple[str, ...]
    natural_coords: tuple[float, ...]
    residual: float
    minima_set: tuple[MinimumRecord, ...]
    degenerate_directions: tuple[str, ...]
    chosen_representative_rule: str
    d_nat: float
    d_nat_form: str
    d_nat_forms: dict[str, float]
    weights: WeightVector
    correction: GroupElement
    estimated_misalignment: GroupElement
    stabilizer: StabilizerReport
    converged: bool
    warnings: tuple[str, ...]
    n_evaluations: int
    stage_best: dict[str, float]

    def coords_by_name(self) -> dict[str, float]:
        return dict(zip(self.factor_names, self.natural_coords))

    def to_json_dict(self) -> dict:
        return {
            "factor_names": list(self.factor_names),
            "natural_coords": self.coords_by_name(),
            "residual": self.residual,
            "minima_set": [m.to_json_dict() for m in self.minima_set],
            "degenerate_directions": list(self.degenerate_directions),
            "chosen_representative_rule": self.chosen_representative_rule,
            "d_nat": self.d_nat,
            "d_nat_form": self.d_nat_form,
            "d_nat_forms": dict(self.d_nat_forms),
            "weights": dict(zip(self.factor_names, self.weights)),
            "correction": self.correction.coords_by_name(),
            "estimated_misalignment": self.estimated_misalignment.coords_by_name(),
            "stabilizer": self.stabilizer.to_json_dict(),
            "converged": self.converged,
            "warnings": list(self.warnings),
            "n_evaluations": self.n_evaluations,
            "stage_best": dict(self.stage_best),
        }


def _diverse_starts(pts, values, count, cell):
    """Best grid points spaced at least one cell apart (Chebyshev)."""
    order = np.argsort(values, kind="stable")
    chosen = []
    for idx in order:
        p = pts[idx]
        if all(np.max(np.abs(p - pts[j]) / cell) >= 0.999 for j in chosen):
            chosen.append(idx)
            if len(chosen) == count:
                break
    if len(chosen) < count:
        seen = set(chosen)
        for idx in order:
            if idx not in seen:
                chosen.append(idx)
                seen.add(idx)
                if len(chosen) == count:
                    break
    return [pts[i] for i in chosen]


def calibrate(
    obj: ObjectiveSpec,
    cfg: OptimizerConfig | None = None,
    weights: WeightVector | None = None,
    form: DistanceForm = DistanceForm.QUADRATIC,
    dnat_metric: MetricSpec | None = None,
) -> AlignmentResult:
    """Three-stage search for the correction bringing measured onto
    reference, with degeneracy handling via a reported minimum set."""
    cfg = cfg or OptimizerConfig()
    spec = obj.spec
    if weights is None:
        weights = WeightVector.uniform(spec.dim)
    if len(weights) != spec.dim:
        raise ValidationError("one weight per factor is required")
    if not np.any(obj.measured.values):
        raise AllZeroMeasured("measured image carries no signal")
    dnat_metric = dnat_metric or obj.metric

    lo = np.array([b[0] for b in obj.bounds])
    hi = np.array([b[1] for b in obj.bounds])
    cell = (hi - lo) / (cfg.coarse_grid - 1)
    f = lambda y: _objective_value(obj, y)

    # stage 1: full-factorial coarse grid, identity always included
    axes = [np.linspace(l, h, cfg.coarse_grid) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    pts = np.vstack([pts, np.zeros(spec.dim)])
    values = np.array(_parallel_chunks(f, pts))
    n_evals = len(pts)
    coarse_best = float(values.min())

    # stage 2: simplex refinement from well-separated starts
    starts = _diverse_starts(pts, values, cfg.multistart_count, cell)
    runs = _parallel_chunks(
        lambda s: _simplex_minimize(
            f, s, lo, hi, cfg.refine_max_iter, cfg.refine_tol
        ),
        starts,
    )
    candidates = [(np.asarray(x), fx, conv) for x, fx, conv, _ in runs]
    n_evals += sum(r[3] for r in runs)
    f0 = float(values[-1])  # identity row appended last
    candidates.append((np.zeros(spec.dim), f0, True))
    refined_best = min(c[1] for c in candidates)

    # stage 3: keep near-optimal candidates, merge duplicates
    keep_tol = cfg.minima_cluster_tol * (1.0 + abs(refined_best))
    kept = sorted(
        (c for c in candidates if c[1] <= refined_best + keep_tol),
        key=lambda c: (c[1], tuple(c[0])),
    )
    reps: list[tuple[np.ndarray, float, bool]] = []
    for c in kept:
        if all(
            float(np.max(_coord_gap(spec, c[0], r[0]))) > cfg.coordinate_cluster_tol
            for r in reps
        ):
            reps.append(c)
    minima = tuple(
        MinimumRecord(coords=_signed(spec, x), objective=float(fx))
        for x, fx, _ in reps
    )

    origin_norm = lambda rec: math.sqrt(sum(v * v for v in rec.coords))
    natural_idx = min(
        range(len(minima)),
        key=lambda i: (origin_norm(minima[i]), minima[i].objective, i),
    )
    natural = minima[natural_idx]
    nat_converged = reps[natural_idx][2]

    stab = stabilizer_diagnostic(obj.reference, obj.binding, obj.metric)
    forms = natural_distance_forms(natural.coords, weights, dnat_metric)
    form = DistanceForm(form)
    d_nat = (
        forms["quadratic"]
        if form is DistanceForm.QUADRATIC
        else forms["general_norm"]
        if form is DistanceForm.GENERAL_NORM
        else forms["linear"]
    )

    warnings = []
    n_failed = sum(1 for _, _, conv in candidates if not conv)
    if n_failed:
        warnings.append(
            f"refinement hit the iteration cap in {n_failed} of "
            f"{len(candidates)} starts"
        )

    correction = GroupElement(spec, reps[natural_idx][0])
    return AlignmentResult(
        factor_names=spec.names,
        natural_coords=natural.coords,
        residual=natural.objective,
        minima_set=minima,
        degenerate_directions=stab.degenerate,
        chosen_representative_rule=REPRESENTATIVE_RULE,
        d_nat=d_nat,
        d_nat_form=form.value,
        d_nat_forms=forms,
        weights=weights,
        correction=correction,
        estimated_misalignment=inverse(correction, check_bounds=False),
        stabilizer=stab,
        converged=nat_converged,
        warnings=tuple(warnings),
        n_evaluations=n_evals,
        stage_best={"coarse": coarse_best, "refined": float(refined_best)},
    )


def brute_force_oracle(
    obj: ObjectiveSpec, grid_density: int = 101
) -> tuple[tuple[float, ...], float]:
    """Exhaustive dense-grid argmin; the slow reference implementation.

    Capped at 10**7 evaluations.
    """
    if grid_density < 2:
        raise ValidationError("grid_density must be at least 2")
    total = grid_density ** obj.spec.dim
    if total > 10**7:
        raise BudgetExceeded(
            f"{total} oracle evaluations exceed the 1e7 cap"
        )
    axes = [np.linspace(lo, hi, grid_density) for lo, hi in obj.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    values = _parallel_chunks(lambda y: _objective_value(obj, y), pts)
    best = int(np.argmin(values))
    return tuple(float(v) for v in pts[best]), float(values[best])
