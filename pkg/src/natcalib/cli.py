"""Command-line interface.

Exit codes: 0 on success, 1 for invalid input or arguments, 2 for
numerical failures (degenerate data, budget exhaustion, recovery out of
tolerance).  Output bytes depend only on inputs and seeds; timing
information is attached only when ``--timing`` is passed.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .actions import apply, standard_binding
from .align import ObjectiveSpec, OptimizerConfig, calibrate
from .detector import DetectorGeometry, read_image, write_image, write_image_csv
from .errors import NatcalibError, NumericalError, ValidationError
from .groups import Factor, FactorKind, GaugeGroupSpec
from .kernels import (
    compute_kernel_analytic,
    compute_kernel_numeric,
    enumerate_detector_types,
    misaligned_line_kernel_demo,
)
from .metrics import DistanceForm, MetricSpec, WeightVector
from .report import (
    build_alignment_report,
    build_catalog_report,
    build_distance_report,
    build_kernel_report,
    build_misaligned_line_report,
    dump_csv,
    dump_json,
    render_image_panel,
    render_objective_profiles,
    render_scenario_figures,
    validate_report,
    write_report,
)
from .scenario import (
    ScenarioConfig,
    linac_gauge_spec,
    run_scenario,
)

_LINAC_KINDS = {
    "phi": FactorKind.CIRCLE,
    "z": FactorKind.LINE,
    "c": FactorKind.POSITIVE_SCALE,
    "i": FactorKind.INTENSITY,
}

_DEFAULT_BOUNDS = {
    "phi": (-0.7, 0.7),
    "z": (-0.15, 0.15),
    "c": (-0.2, 0.2),
    "i": (-0.35, 0.35),
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the error hierarchy."""

    def error(self, message: str):
        raise ValidationError(message)


def parse_geometry(text: str) -> DetectorGeometry:
    """cylinder:PHIxZ:HEIGHT | plane:XxY:WxH | line:N:LENGTH | point"""
    parts = text.split(":")
    kind = parts[0]
    try:
        if kind == "point":
            if len(parts) != 1:
                raise ValueError
            return DetectorGeometry.point()
        if kind == "line":
            if len(parts) != 3:
                raise ValueError
            return DetectorGeometry.line(int(parts[1]), float(parts[2]))
        if kind == "cylinder":
            if len(parts) != 3:
                raise ValueError
            a, b = parts[1].lower().split("x")
            return DetectorGeometry.cylinder(int(a), int(b), float(parts[2]))
        if kind == "plane":
            if len(parts) != 3:
                raise ValueError
            a, b = parts[1].lower().split("x")
            w, h = parts[2].lower().split("x")
            return DetectorGeometry.plane(int(a), int(b), float(w), float(h))
    except (ValueError, IndexError):
        pass
    raise ValidationError(
        f"cannot parse geometry {text!r}; expected forms: "
        "cylinder:64x64:1.0, plane:32x32:1.0x1.0, line:64:1.0, point"
    )


def parse_factors(text: str | None) -> GaugeGroupSpec:
    """Comma list of names; unknown names need an explicit :kind suffix."""
    if not text:
        return linac_gauge_spec()
    factors = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        name, sep, kind_name = token.partition(":")
        if sep:
            try:
                kind = FactorKind(kind_name)
            except ValueError:
                raise ValidationError(
                    f"unknown factor kind {kind_name!r}; choose from "
                    f"{[k.value for k in FactorKind]}"
                ) from None
        elif name in _LINAC_KINDS:
            kind = _LINAC_KINDS[name]
        else:
            raise ValidationError(
                f"factor {name!r} is not a standard device factor; "
                "append a kind, e.g. tilt:line"
            )
        factors.append(Factor(name, kind))
    if not factors:
        raise ValidationError("no factors given")
    return GaugeGroupSpec(tuple(factors))


def _parse_assignments(pairs: list[str] | None, what: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for pair in pairs or []:
        name, sep, raw = pair.partition("=")
        if not sep or not name:
            raise ValidationError(f"{what} expects name=value, got {pair!r}")
        try:
            out[name] = float(raw)
        except ValueError:
            raise ValidationError(
                f"{what}: cannot parse {raw!r} as a number in {pair!r}"
            ) from None
    return out


def _parse_bounds(pairs: list[str] | None) -> dict[str, tuple[float, float]]:
    out: dict[str, tuple[float, float]] = {}
    for pair in pairs or []:
        name, sep, raw = pair.partition("=")
        lo_hi = raw.split(":")
        if not sep or not name or len(lo_hi) != 2:
            raise ValidationError(f"--bounds expects name=lo:hi, got {pair!r}")
        try:
            out[name] = (float(lo_hi[0]), float(lo_hi[1]))
        except ValueError:
            raise ValidationError(f"--bounds: bad numbers in {pair!r}") from None
    return out


def _parse_k(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return float("inf")
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"--k expects a number >= 1 or 'inf', got {text!r}") from None


def _load_scenario_config(path: str | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    import json

    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("scenario config must be a JSON object")
    return ScenarioConfig.from_json_dict(raw)


def _apply_scenario_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "noise", None) is not None:
        kw["noise_sigma"] = args.noise
    perturb = _parse_assignments(getattr(args, "perturb", None), "--perturb")
    if perturb:
        merged = dict(cfg.perturbation)
        merged.update(perturb)
        kw["perturbation"] = merged
    return replace(cfg, **kw) if kw else cfg


def _emit_report(doc: dict, args) -> None:
    validate_report(doc)
    if getattr(args, "timing", False):
        # opt-in: wall-clock content makes output bytes run-dependent
        doc["timing"] = {"elapsed_seconds": time.perf_counter() - args._t0}
    fmt = getattr(args, "format", "json")
    out = getattr(args, "out", None)
    if out:
        write_report(doc, out, fmt)
        print(f"report written to {out}")
    else:
        text = dump_json(doc) if fmt == "json" else dump_csv(doc)
        sys.stdout.write(text)


def _figure_dir(args) -> Path | None:
    if getattr(args, "no_figures", False):
        return None
    explicit = getattr(args, "figures_dir", None)
    if explicit:
        return Path(explicit)
    out = getattr(args, "out", None)
    if out:
        return Path(out).resolve().parent
    return None


# -- subcommands ------------------------------------------------------------

def _cmd_simulate(args) -> int:
    cfg = _apply_scenario_overrides(_load_scenario_config(args.config), args)
    from .scenario import build_plan, perturbation_element

    spec = linac_gauge_spec()
    plan = build_plan(cfg)
    binding = standard_binding(spec, cfg.geometry)
    measured = apply(perturbation_element(cfg, spec), plan, binding)
    if cfg.noise_sigma > 0.0:
        import numpy as np

        rng = np.random.default_rng(cfg.seed)
        from .detector import Image

        noisy = measured.values + rng.normal(
            0.0, cfg.noise_sigma, measured.values.shape
        )
        measured = Image(cfg.geometry, np.maximum(noisy, 0.0))
    writer = write_image if args.format == "json" else write_image_csv
    writer(measured, args.out)
    print(f"measured image written to {args.out}")
    if args.plan_out:
        writer(plan, args.plan_out)
        print(f"plan image written to {args.plan_out}")
    return 0


def _cmd_calibrate(args) -> int:
    reference = read_image(args.reference)
    measured = read_image(args.measured)
    spec = parse_factors(args.factors)
    bounds = dict(_DEFAULT_BOUNDS)
    bounds.update(_parse_bounds(args.bounds))
    missing = [n for n in spec.names if n not in bounds]
    if missing:
        raise ValidationError(
            f"no search bounds for factors {missing}; pass --bounds name=lo:hi"
        )
    binding = standard_binding(spec, reference.geometry)
    obj = ObjectiveSpec.of(
        reference,
        measured,
        binding,
        {n: bounds[n] for n in spec.names},
        MetricSpec(_parse_k(args.k)),
    )
    opt = OptimizerConfig(
        coarse_grid=args.grid, multistart_count=args.starts
    )
    weights = None
    w_map = _parse_assignments(args.weights, "--weights")
    if w_map:
        unknown = set(w_map) - set(spec.names)
        if unknown:
            raise ValidationError(f"--weights names unknown: {sorted(unknown)}")
        weights = WeightVector(tuple(w_map.get(n, 0.0) for n in spec.names))
    result = calibrate(obj, opt, weights, DistanceForm(args.form))
    doc = build_alignment_report(
        obj,
        result,
        settings={
            "distance_form": args.form,
            "optimizer": opt.to_json_dict(),
        },
    )
    _emit_report(doc, args)
    fig_dir = _figure_dir(args)
    if fig_dir is not None:
        fig_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(args.out).stem if args.out else "calibrate"
        corrected = apply(result.correction, measured, binding)
        p1 = render_image_panel(
            [
                ("reference", reference),
                ("measured", measured),
                ("after correction", corrected),
            ],
            fig_dir / f"{stem}_images.png",
        )
        p2 = render_objective_profiles(
            obj,
            result.natural_coords,
            fig_dir / f"{stem}_profiles.png",
            minima=[tuple(m.coords) for m in result.minima_set],
        )
        print(f"figures written to {p1} and {p2}")
    return 0


def _cmd_analyze_kernel(args) -> int:
    if args.line_tilt is not None:
        geometry = (
            parse_geometry(args.geometry)
            if args.geometry
            else DetectorGeometry.line(64, 1.0)
        )
        demo = misaligned_line_kernel_demo(
            args.line_tilt,
            parse_factors(args.factors),
            geometry,
            backing_resolution=args.backing_resolution,
            seed=args.seed,
        )
        _emit_report(build_misaligned_line_report(demo), args)
        return 0
    geometry = (
        parse_geometry(args.geometry)
        if args.geometry
        else DetectorGeometry.cylinder(64, 64, 1.0)
    )
    spec = parse_factors(args.factors)
    binding = standard_binding(spec, geometry)
    if args.method == "analytic":
        analytic = compute_kernel_analytic(binding)
        doc = {
            "report_kind": "kernel",
            "tool": {"name": "natcalib", "version": __version__},
            "geometry": geometry.to_json_dict(),
            "factors": list(spec.names),
            "kernel": analytic.to_json_dict(),
        }
    else:
        numeric = compute_kernel_numeric(binding)
        analytic = (
            compute_kernel_analytic(binding) if args.method == "both" else None
        )
        doc = build_kernel_report(geometry, spec, numeric, analytic)
    _emit_report(doc, args)
    return 0


def _cmd_enumerate_detectors(args) -> int:
    catalog = enumerate_detector_types(parse_factors(args.factors))
    _emit_report(build_catalog_report(catalog), args)
    return 0


def _cmd_distance(args) -> int:
    spec = parse_factors(args.factors)
    coords_map = _parse_assignments(args.coords, "--coords")
    unknown = set(coords_map) - set(spec.names)
    if unknown:
        raise ValidationError(f"--coords names unknown: {sorted(unknown)}")
    coords = tuple(coords_map.get(n, 0.0) for n in spec.names)
    w_map = _parse_assignments(args.weights, "--weights")
    if w_map:
        unknown = set(w_map) - set(spec.names)
        if unknown:
            raise ValidationError(f"--weights names unknown: {sorted(unknown)}")
        weights = WeightVector(tuple(w_map.get(n, 0.0) for n in spec.names))
    else:
        weights = WeightVector.uniform(spec.dim)
    doc = build_distance_report(
        spec.names, coords, weights, MetricSpec(_parse_k(args.k))
    )
    _emit_report(doc, args)
    return 0


def _cmd_demo_linac(args) -> int:
    cfg = _apply_scenario_overrides(_load_scenario_config(args.config), args)
    doc, artifacts = run_scenario(cfg, with_artifacts=True)
    _emit_report(doc, args)
    fig_dir = _figure_dir(args)
    if fig_dir is not None:
        stem = Path(args.out).stem if args.out else "demo_linac"
        paths = render_scenario_figures(artifacts, fig_dir, stem)
        print("figures written to " + " and ".join(str(p) for p in paths))
    if not doc["recovery"]["all_within_tolerance"]:
        raise NumericalError(
            "recovered coordinates fall outside the configured tolerances"
        )
    return 0


# -- parser wiring ----------------------------------------------------------

def _add_report_flags(p: _Parser, with_figures: bool = False) -> None:
    p.add_argument("--out", help="report file; omitted means stdout")
    p.add_argument(
        "--format", choices=("json", "csv"), default="json",
        help="report serialization (default json)",
    )
    p.add_argument(
        "--timing", action="store_true",
        help="attach wall-clock timing (makes output bytes run-dependent)",
    )
    if with_figures:
        p.add_argument(
            "--figures-dir",
            help="directory for rendered figures (default: alongside --out)",
        )
        p.add_argument(
            "--no-figures", action="store_true", help="skip figure rendering"
        )


def build_parser() -> _Parser:
    parser = _Parser(
        prog="natcalib",
        description="gauge-group calibration for pixel-array dose detectors",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser(
        "simulate", help="write the synthetic measured image for a scenario"
    )
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--out", required=True, help="measured image output path")
    p.add_argument("--plan-out", help="also write the unperturbed plan image")
    p.add_argument(
        "--format", choices=("json", "csv"), default="json",
        help="image file form (default json)",
    )
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--noise", type=float, help="override noise sigma")
    p.add_argument(
        "--perturb", nargs="*", metavar="NAME=VALUE",
        help="override injected coordinates, e.g. phi=0.3 i=0.1",
    )
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser(
        "calibrate", help="recover natural coordinates from two images"
    )
    p.add_argument("--reference", required=True, help="planned image file")
    p.add_argument("--measured", required=True, help="measured image file")
    p.add_argument("--factors", help="comma list, default phi,z,c,i")
    p.add_argument("--k", default="2", help="discrepancy norm order (or 'inf')")
    p.add_argument("--bounds", nargs="*", metavar="NAME=LO:HI")
    p.add_argument("--weights", nargs="*", metavar="NAME=W")
    p.add_argument(
        "--form",
        choices=("quadratic", "general_norm", "linear", "linear_abs"),
        default="quadratic",
        help="natural distance form reported as d_nat",
    )
    p.add_argument("--grid", type=int, default=9, help="coarse grid per factor")
    p.add_argument("--starts", type=int, default=8, help="refinement starts")
    _add_report_flags(p, with_figures=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser(
        "analyze-kernel", help="which factors a detector cannot see"
    )
    p.add_argument("--geometry", help="e.g. cylinder:64x64:1.0 or point")
    p.add_argument("--factors", help="comma list, default phi,z,c,i")
    p.add_argument(
        "--method", choices=("numeric", "analytic", "both"), default="both"
    )
    p.add_argument("--seed", type=int, default=7, help="probe seed")
    p.add_argument(
        "--line-tilt", type=float,
        help="run the tilted line demo at this angle (radians per length unit)",
    )
    p.add_argument(
        "--backing-resolution", type=int, default=128,
        help="cylinder resolution backing the tilted line demo",
    )
    _add_report_flags(p)
    p.set_defaults(func=_cmd_analyze_kernel)

    p = sub.add_parser(
        "enumerate-detectors",
        help="catalog detector types by invisible factor subset",
    )
    p.add_argument("--factors", help="comma list, default phi,z,c,i")
    _add_report_flags(p)
    p.set_defaults(func=_cmd_enumerate_detectors)

    p = sub.add_parser(
        "distance", help="natural distance forms for given coordinates"
    )
    p.add_argument("--factors", help="comma list, default phi,z,c,i")
    p.add_argument(
        "--coords", nargs="*", metavar="NAME=VALUE", help="e.g. phi=0.3 z=0.1"
    )
    p.add_argument("--weights", nargs="*", metavar="NAME=W")
    p.add_argument("--k", default="2", help="norm order (or 'inf')")
    _add_report_flags(p)
    p.set_defaults(func=_cmd_distance)

    p = sub.add_parser(
        "demo-linac",
        help="full scenario: simulate, calibrate, judge recovery, render",
    )
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--noise", type=float, help="override noise sigma")
    p.add_argument(
        "--perturb", nargs="*", metavar="NAME=VALUE",
        help="override injected coordinates",
    )
    _add_report_flags(p, with_figures=True)
    p.set_defaults(func=_cmd_demo_linac)

    return parser


def main(argv: list[str] | None = None) -> int:
    t0 = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        args._t0 = t0
        return args.func(args)
    except SystemExit as exc:  # argparse --help / --version
        code = exc.code
        return code if isinstance(code, int) else 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except NatcalibError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
