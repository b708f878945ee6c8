"""End-to-end treatment-device scenario on a cylindrical detector.

A planned dose distribution is laid down as a helical sweep of Gaussian
spots (a curve in the gauge group applied to a single spot template), a
known misalignment is injected through the induced action, optional
noise is added, and calibration recovers the correction.  Everything is
seeded and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .actions import apply, generate_gaussian_plan, standard_binding
from .align import (
    AlignmentResult,
    ObjectiveSpec,
    OptimizerConfig,
    calibrate,
)
from .detector import DetectorGeometry, Image
from .errors import ValidationError
from .groups import (
    Factor,
    FactorKind,
    GaugeGroupSpec,
    GroupCurve,
    GroupElement,
    evaluate_curve,
    inverse,
    signed_representative,
)
from .metrics import DistanceForm, MetricSpec, WeightVector

FACTOR_ORDER = ("phi", "z", "c", "i")


def linac_gauge_spec() -> GaugeGroupSpec:
    """Rotation, axial shift, radial magnification, beam intensity."""
    return GaugeGroupSpec(
        (
            Factor("phi", FactorKind.CIRCLE),
            Factor("z", FactorKind.LINE),
            Factor("c", FactorKind.POSITIVE_SCALE),
            Factor("i", FactorKind.INTENSITY),
        )
    )


# the kind-based binding is the right one for this scenario
default_binding = standard_binding


@dataclass(frozen=True)
class SweepSpec:
    """Helical beam sweep: spot template carried along a group curve."""

    turns: float = 2.5
    z_fraction: float = 0.6
    spot_count: int = 48
    curve_samples: int = 25
    spot_width: float = 0.3
    amplitude: float = 1.0
    intensity_wobble: float = 0.35
    wobble_cycles: float = 2.0

    def __post_init__(self) -> None:
        if self.spot_count < 1 or self.curve_samples < 2:
            raise ValidationError("sweep needs spots and at least two curve samples")
        if not 0.0 < self.z_fraction < 1.0:
            raise ValidationError("z_fraction must lie in (0, 1)")
        if self.spot_width <= 0.0 or self.amplitude <= 0.0:
            raise ValidationError("spot width and amplitude must be positive")
        step = abs(self.turns) * 2.0 * math.pi / (self.curve_samples - 1)
        if step >= math.pi:
            raise ValidationError(
                "curve sampling too coarse to carry the winding; "
                "raise curve_samples"
            )

    def to_json_dict(self) -> dict:
        return {
            "turns": self.turns,
            "z_fraction": self.z_fraction,
            "spot_count": self.spot_count,
            "curve_samples": self.curve_samples,
            "spot_width": self.spot_width,
            "amplitude": self.amplitude,
            "intensity_wobble": self.intensity_wobble,
            "wobble_cycles": self.wobble_cycles,
        }


def sweep_curve(sweep: SweepSpec, spec: GaugeGroupSpec, height: float) -> GroupCurve:
    ts = np.linspace(0.0, 1.0, sweep.curve_samples)
    samples = []
    for t in ts:
        coords = (
            2.0 * math.pi * sweep.turns * t,
            (t - 0.5) * sweep.z_fraction * height,
            0.0,
            sweep.intensity_wobble * math.sin(2.0 * math.pi * sweep.wobble_cycles * t),
        )
        samples.append((float(t), GroupElement(spec, coords)))
    return GroupCurve(tuple(samples))


def build_sweep_plan(
    geometry: DetectorGeometry, sweep: SweepSpec, spec: GaugeGroupSpec | None = None
) -> Image:
    """Evaluate the sweep curve and stamp the transported spot template."""
    spec = spec or linac_gauge_spec()
    curve = sweep_curve(sweep, spec, geometry.height)
    base_z = 0.5 * geometry.height
    spots = []
    for t in np.linspace(0.0, 1.0, sweep.spot_count):
        g = evaluate_curve(curve, float(t))
        spots.append(
            (
                g.coord("phi"),
                base_z + g.coord("z"),
                sweep.amplitude * math.exp(g.coord("i")),
                sweep.spot_width * math.exp(g.coord("c")),
            )
        )
    return generate_gaussian_plan(geometry, spots)


def ring_plan(
    geometry: DetectorGeometry, z0_fraction: float = 0.55, width: float = 0.3
) -> Image:
    """Rotationally uniform ring: one spot per circumferential pixel.

    The overlapping periodic Gaussians sum to a profile constant in phi
    to floating precision, which makes the rotation factor degenerate.
    """
    n = geometry.n_phi
    z0 = z0_fraction * geometry.height
    step = 2.0 * math.pi / n
    spots = [(k * step, z0, 1.0, width) for k in range(n)]
    return generate_gaussian_plan(geometry, spots)


def _default_bounds() -> dict[str, tuple[float, float]]:
    return {
        "phi": (-0.7, 0.7),
        "z": (-0.15, 0.15),
        "c": (-0.2, 0.2),
        "i": (-0.35, 0.35),
    }


def default_tolerances(geometry: DetectorGeometry) -> dict[str, float]:
    """Pass bands for recovered coordinates: one circumferential pixel in
    phi, one axial pixel pitch in z, 0.01 in log-magnification, 0.005 in
    log-intensity."""
    return {
        "phi": 2.0 * math.pi / geometry.n_phi,
        "z": geometry.height / geometry.n_z,
        "c": 0.01,
        "i": 0.005,
    }


def _uniform_weights() -> dict[str, float]:
    return {n: 0.25 for n in FACTOR_ORDER}


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: DetectorGeometry = field(
        default_factory=lambda: DetectorGeometry.cylinder(64, 64, 1.0)
    )
    sweep: SweepSpec = field(default_factory=SweepSpec)
    spots: tuple[tuple[float, float, float, float], ...] | None = None
    perturbation: dict[str, float] = field(
        default_factory=lambda: {"phi": 0.49, "z": 0.05, "c": 0.0, "i": math.log(1.1)}
    )
    noise_sigma: float = 0.0
    metric_k: float = 2.0
    weights: dict[str, float] = field(default_factory=_uniform_weights)
    seed: int = 0
    bounds: dict[str, tuple[float, float]] = field(default_factory=_default_bounds)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    tolerances: dict[str, float] | None = None
    distance_form: str = "quadratic"

    def __post_init__(self) -> None:
        if self.geometry.kind != "cylinder":
            raise ValidationError("the scenario runs on a cylindrical detector")
        unknown = set(self.perturbation) - set(FACTOR_ORDER)
        if unknown:
            raise ValidationError(f"unknown perturbation factors: {sorted(unknown)}")
        if self.noise_sigma < 0.0:
            raise ValidationError("noise_sigma must be >= 0")
        DistanceForm(self.distance_form)  # early validation

    def resolved_tolerances(self) -> dict[str, float]:
        tol = default_tolerances(self.geometry)
        if self.tolerances:
            tol.update(self.tolerances)
        return tol

    def to_json_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_json_dict(),
            "sweep": self.sweep.to_json_dict(),
            "spots": [list(s) for s in self.spots] if self.spots else None,
            "perturbation": {k: self.perturbation.get(k, 0.0) for k in FACTOR_ORDER},
            "noise_sigma": self.noise_sigma,
            "metric_k": "inf" if math.isinf(self.metric_k) else self.metric_k,
            "weights": dict(self.weights),
            "seed": self.seed,
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "optimizer": self.optimizer.to_json_dict(),
            "tolerances": self.resolved_tolerances(),
            "distance_form": self.distance_form,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ScenarioConfig":
        base = cls()
        known = {
            "geometry", "sweep", "spots", "perturbation", "noise_sigma",
            "metric_k", "weights", "seed", "bounds", "optimizer",
            "tolerances", "distance_form",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown scenario config keys: {sorted(unknown)}")
        kw: dict = {}
        if "geometry" in d:
            kw["geometry"] = DetectorGeometry.from_json_dict(d["geometry"])
        if "sweep" in d:
            kw["sweep"] = replace(base.sweep, **d["sweep"])
        if "spots" in d and d["spots"] is not None:
            kw["spots"] = tuple(tuple(float(x) for x in s) for s in d["spots"])
        if "perturbation" in d:
            kw["perturbation"] = {k: float(v) for k, v in d["perturbation"].items()}
        if "noise_sigma" in d:
            kw["noise_sigma"] = float(d["noise_sigma"])
        if "metric_k" in d:
            raw = d["metric_k"]
            kw["metric_k"] = math.inf if raw in ("inf", "Infinity") else float(raw)
        if "weights" in d:
            kw["weights"] = {k: float(v) for k, v in d["weights"].items()}
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        if "bounds" in d:
            merged = dict(base.bounds)
            merged.update(
                {k: (float(v[0]), float(v[1])) for k, v in d["bounds"].items()}
            )
            kw["bounds"] = merged
        if "optimizer" in d:
            kw["optimizer"] = replace(base.optimizer, **d["optimizer"])
        if "tolerances" in d and d["tolerances"] is not None:
            kw["tolerances"] = {k: float(v) for k, v in d["tolerances"].items()}
        if "distance_form" in d:
            kw["distance_form"] = str(d["distance_form"])
        return cls(**kw)


@dataclass(frozen=True)
class ScenarioArtifacts:
    """In-memory products kept around for rendering and inspection."""

    plan: Image
    measured: Image
    corrected: Image
    objective: ObjectiveSpec
    result: AlignmentResult
    injected: GroupElement


def build_plan(cfg: ScenarioConfig) -> Image:
    if cfg.spots is not None:
        return generate_gaussian_plan(cfg.geometry, list(cfg.spots))
    return build_sweep_plan(cfg.geometry, cfg.sweep)


def perturbation_element(cfg: ScenarioConfig, spec: GaugeGroupSpec) -> GroupElement:
    coords = tuple(cfg.perturbation.get(n, 0.0) for n in spec.names)
    return GroupElement(spec, coords)


def run_scenario(
    cfg: ScenarioConfig | None = None, with_artifacts: bool = False
):
    """Simulate, calibrate, and judge recovery; returns the report dict.

    With ``with_artifacts=True`` also returns the in-memory images and
    alignment result for rendering.
    """
    cfg = cfg or ScenarioConfig()
    spec = linac_gauge_spec()
    geometry = cfg.geometry
    binding = default_binding(spec, geometry)
    plan = build_plan(cfg)
    injected = perturbation_element(cfg, spec)
    measured = apply(injected, plan, binding)
    if cfg.noise_sigma > 0.0:
        rng = np.random.default_rng(cfg.seed)
        noisy = measured.values + rng.normal(0.0, cfg.noise_sigma, measured.values.shape)
        measured = Image(geometry, np.maximum(noisy, 0.0))

    obj = ObjectiveSpec.of(
        plan, measured, binding, cfg.bounds, MetricSpec(cfg.metric_k)
    )
    weights = WeightVector(tuple(cfg.weights.get(n, 0.0) for n in spec.names))
    result = calibrate(
        obj,
        cfg.optimizer,
        weights,
        DistanceForm(cfg.distance_form),
    )

    expected = inverse(injected, check_bounds=False).signed_coords()
    tolerances = cfg.resolved_tolerances()
    per_factor = []
    all_ok = True
    for name, rec, exp in zip(spec.names, result.natural_coords, expected):
        err = rec - exp
        if spec.factor(name).kind.periodic:
            err = signed_representative(FactorKind.CIRCLE, err)
        ok = abs(err) <= tolerances[name]
        all_ok = all_ok and ok
        per_factor.append(
            {
                "factor": name,
                "recovered": rec,
                "expected": exp,
                "abs_error": abs(err),
                "tolerance": tolerances[name],
                "within_tolerance": ok,
            }
        )

    from . import __version__  # deferred to avoid import cycles at package init

    report = {
        "report_kind": "scenario",
        "tool": {"name": "natcalib", "version": __version__},
        "config": cfg.to_json_dict(),
        "plan": {
            "peak": float(plan.values.max()),
            "norm2": plan.norm2,
            "spot_count": len(cfg.spots) if cfg.spots else cfg.sweep.spot_count,
        },
        "alignment": result.to_json_dict(),
        "recovery": {
            "injected": injected.coords_by_name(),
            "expected_correction": dict(zip(spec.names, expected)),
            "per_factor": per_factor,
            "all_within_tolerance": all_ok,
        },
    }
    if not with_artifacts:
        return report
    corrected = apply(result.correction, measured, binding)
    return report, ScenarioArtifacts(
        plan=plan,
        measured=measured,
        corrected=corrected,
        objective=obj,
        result=result,
        injected=injected,
    )
