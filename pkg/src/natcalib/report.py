"""Report assembly, deterministic serialization, and figure rendering.

Reports are plain JSON-serializable dicts validated against the bundled
schema.  JSON output is byte-stable (sorted keys, fixed indentation, no
timestamps unless explicitly requested) and the CSV form is a flat
key/value table derived from the same dict.
"""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path

import jsonschema

from . import __version__
from .align import AlignmentResult, ObjectiveSpec, evaluate_objective
from .detector import Image
from .errors import ValidationError
from .kernels import DetectorTypeCatalog, KernelReport, MisalignedLineReport
from .metrics import MetricSpec, WeightVector, natural_distance_forms

SCHEMA_RESOURCE = "report.schema.json"


def tool_stamp() -> dict:
    return {"name": "natcalib", "version": __version__}


def build_alignment_report(
    obj: ObjectiveSpec, result: AlignmentResult, settings: dict | None = None
) -> dict:
    return {
        "report_kind": "alignment",
        "tool": tool_stamp(),
        "geometry": obj.reference.geometry.to_json_dict(),
        "settings": {
            "metric_k": obj.metric.label,
            "bounds": {
                n: list(b) for n, b in zip(obj.binding.spec.names, obj.bounds)
            },
            **(settings or {}),
        },
        "alignment": result.to_json_dict(),
    }


def build_kernel_report(
    geometry, spec, numeric: KernelReport, analytic: KernelReport | None = None
) -> dict:
    doc = {
        "report_kind": "kernel",
        "tool": tool_stamp(),
        "geometry": geometry.to_json_dict(),
        "factors": list(spec.names),
        "kernel": numeric.to_json_dict(),
    }
    if analytic is not None:
        doc["analytic"] = analytic.to_json_dict()
        doc["methods_agree"] = (
            numeric.kernel_factors == analytic.kernel_factors
            and numeric.rank == analytic.rank
        )
    return doc


def build_misaligned_line_report(demo: MisalignedLineReport) -> dict:
    return {
        "report_kind": "misaligned_line",
        "tool": tool_stamp(),
        "demo": demo.to_json_dict(),
    }


def build_catalog_report(catalog: DetectorTypeCatalog) -> dict:
    return {
        "report_kind": "detector_catalog",
        "tool": tool_stamp(),
        "catalog": catalog.to_json_dict(),
    }


def build_distance_report(
    factor_names, coords, weights: WeightVector, metric: MetricSpec
) -> dict:
    values = natural_distance_forms(tuple(coords), weights, metric)
    return {
        "report_kind": "distance",
        "tool": tool_stamp(),
        "factor_names": list(factor_names),
        "coords": dict(zip(factor_names, (float(c) for c in coords))),
        "weights": dict(zip(factor_names, weights)),
        "metric_k": metric.label,
        "values": values,
    }


def load_schema() -> dict:
    text = (
        resources.files("natcalib").joinpath("schema", SCHEMA_RESOURCE).read_text()
    )
    return json.loads(text)


def validate_report(doc: dict) -> None:
    """Raises ValidationError when the dict does not match the schema."""
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"report does not match schema: {exc.message}") from exc


def dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _csv_scalar(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def flatten_rows(doc: dict) -> list[tuple[str, str]]:
    """Depth-first key/value rows with dotted paths and [i] list indices."""
    rows: list[tuple[str, str]] = []

    def walk(prefix: str, node) -> None:
        if isinstance(node, dict):
            for key in sorted(node):
                walk(f"{prefix}.{key}" if prefix else str(key), node[key])
        elif isinstance(node, (list, tuple)):
            for idx, item in enumerate(node):
                walk(f"{prefix}[{idx}]", item)
        else:
            rows.append((prefix, _csv_scalar(node)))

    walk("", doc)
    return rows


def dump_csv(doc: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(flatten_rows(doc))
    return buf.getvalue()


def write_report(doc: dict, path: str | Path, fmt: str = "json") -> Path:
    path = Path(path)
    if fmt == "json":
        path.write_text(dump_json(doc))
    elif fmt == "csv":
        path.write_text(dump_csv(doc))
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    return path


# -- figures ----------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


_PNG_META = {"Date": None}  # keep output bytes independent of wall clock


def _draw_image(ax, img: Image, title: str) -> None:
    geom = img.geometry
    if geom.kind in ("line", "point"):
        ax.plot(img.values.ravel(), drawstyle="steps-mid")
        ax.set_xlabel("pixel")
    else:
        ax.imshow(
            img.values.T,
            origin="lower",
            aspect="auto",
            interpolation="nearest",
            cmap="magma",
        )
        ax.set_xlabel("axis 1 [px]")
        ax.set_ylabel("axis 2 [px]")
    ax.set_title(title)


def render_image_panel(
    images: list[tuple[str, Image]], path: str | Path
) -> Path:
    plt = _pyplot()
    n = len(images)
    ncols = 2 if n > 1 else 1
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(5.2 * ncols, 4.2 * nrows), squeeze=False
    )
    flat = axes.ravel()
    for ax, (title, img) in zip(flat, images):
        _draw_image(ax, img, title)
    for ax in flat[n:]:
        ax.axis("off")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def render_objective_profiles(
    obj: ObjectiveSpec,
    center: tuple[float, ...],
    path: str | Path,
    points: int = 41,
    minima: list[tuple[float, ...]] | None = None,
) -> Path:
    """One axis per factor: objective along that coordinate through center."""
    import numpy as np

    plt = _pyplot()
    names = obj.binding.spec.names
    fig, axes = plt.subplots(
        1, len(names), figsize=(3.4 * len(names), 3.2), squeeze=False
    )
    for j, (ax, name) in enumerate(zip(axes[0], names)):
        lo, hi = obj.bounds[j]
        xs = np.linspace(lo, hi, points)
        ys = []
        for x in xs:
            coords = list(center)
            coords[j] = float(x)
            ys.append(evaluate_objective(tuple(coords), obj))
        ax.plot(xs, ys, lw=1.2)
        ax.axvline(center[j], color="tab:red", lw=0.9, ls="--")
        if minima:
            ax.scatter(
                [m[j] for m in minima],
                [evaluate_objective(m, obj) for m in minima],
                s=18,
                color="tab:orange",
                zorder=3,
            )
        ax.set_title(name)
        ax.set_xlabel("coordinate")
    axes[0][0].set_ylabel("discrepancy")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def render_scenario_figures(artifacts, out_dir: str | Path, stem: str) -> list[Path]:
    """Overview panel plus per-factor objective profiles; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = artifacts.plan
    measured = artifacts.measured
    corrected = artifacts.corrected
    residual_img = Image(plan.geometry, abs(corrected.values - plan.values))
    panel = render_image_panel(
        [
            ("planned dose", plan),
            ("measured (misaligned)", measured),
            ("after correction", corrected),
            ("|corrected - planned|", residual_img),
        ],
        out_dir / f"{stem}_images.png",
    )
    minima = [tuple(m.coords) for m in artifacts.result.minima_set]
    profiles = render_objective_profiles(
        artifacts.objective,
        artifacts.result.natural_coords,
        out_dir / f"{stem}_profiles.png",
        minima=minima,
    )
    return [panel, profiles]
