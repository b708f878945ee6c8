"""Detector geometries and the images they record.

Pixel grids by geometry kind (axis order fixed):

* cylinder  - (n_phi, n_z); axis 0 runs around the circumference and is
  periodic, axis 1 runs along the device axis over ``height`` length units.
* plane     - (n_x, n_y) over ``width`` x ``height``.
* line      - (n, 1); a strip of n pixels spanning ``length`` along the axis.
* point     - (1, 1).

Pixel centers sit at (index + 0.5) * pitch.  Values are finite and
non-negative (recorded dose).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryMismatch, NonFiniteInput, ValidationError

CYLINDER = "cylinder"
PLANE = "plane"
LINE = "line"
POINT = "point"


@dataclass(frozen=True)
class DetectorGeometry:
    kind: str
    n_phi: int | None = None
    n_z: int | None = None
    height: float | None = None
    n_x: int | None = None
    n_y: int | None = None
    width: float | None = None
    n: int | None = None
    length: float | None = None

    def __post_init__(self) -> None:
        k = self.kind
        if k == CYLINDER:
            self._need(n_phi=2, n_z=1)
            self._positive("height")
        elif k == PLANE:
            self._need(n_x=1, n_y=1)
            self._positive("width")
            self._positive("height")
        elif k == LINE:
            self._need(n=1)
            self._positive("length")
        elif k != POINT:
            raise ValidationError(f"unknown geometry kind {k!r}")

    def _need(self, **minima: int) -> None:
        for attr, lo in minima.items():
            v = getattr(self, attr)
            if v is None or int(v) < lo:
                raise ValidationError(f"{self.kind}: {attr} must be an int >= {lo}")
            object.__setattr__(self, attr, int(v))

    def _positive(self, attr: str) -> None:
        v = getattr(self, attr)
        if v is None or not math.isfinite(float(v)) or float(v) <= 0:
            raise ValidationError(f"{self.kind}: {attr} must be positive and finite")
        object.__setattr__(self, attr, float(v))

    @classmethod
    def cylinder(cls, n_phi: int, n_z: int, height: float) -> "DetectorGeometry":
        return cls(CYLINDER, n_phi=n_phi, n_z=n_z, height=height)

    @classmethod
    def plane(cls, n_x: int, n_y: int, width: float, height: float) -> "DetectorGeometry":
        return cls(PLANE, n_x=n_x, n_y=n_y, width=width, height=height)

    @classmethod
    def line(cls, n: int, length: float) -> "DetectorGeometry":
        return cls(LINE, n=n, length=length)

    @classmethod
    def point(cls) -> "DetectorGeometry":
        return cls(POINT)

    @property
    def grid_shape(self) -> tuple[int, int]:
        if self.kind == CYLINDER:
            return (self.n_phi, self.n_z)
        if self.kind == PLANE:
            return (self.n_x, self.n_y)
        if self.kind == LINE:
            return (self.n, 1)
        return (1, 1)

    @property
    def pixel_count(self) -> int:
        a, b = self.grid_shape
        return a * b

    # unit conversions used by the induced action and by plan generation

    @property
    def pixels_per_radian(self) -> float:
        """Only meaningful for the cylinder's circumferential axis."""
        if self.kind != CYLINDER:
            raise GeometryMismatch(f"{self.kind} has no circumferential axis")
        return self.n_phi / (2.0 * math.pi)

    @property
    def axial_pixels_per_unit(self) -> float:
        if self.kind == CYLINDER:
            return self.n_z / self.height
        if self.kind == PLANE:
            return self.n_y / self.height
        if self.kind == LINE:
            return self.n / self.length
        raise GeometryMismatch("point detector has no axial extent")

    def to_json_dict(self) -> dict:
        out = {"kind": self.kind}
        for attr in ("n_phi", "n_z", "height", "n_x", "n_y", "width", "n", "length"):
            v = getattr(self, attr)
            if v is not None:
                out[attr] = v
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "DetectorGeometry":
        known = {"kind", "n_phi", "n_z", "height", "n_x", "n_y", "width", "n", "length"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown geometry fields: {sorted(extra)}")
        if "kind" not in d:
            raise ValidationError("geometry requires a 'kind'")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Image:
    """A recorded dose distribution on one detector."""

    geometry: DetectorGeometry
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1 and self.geometry.kind in (LINE, POINT):
            v = v.reshape(-1, 1)
        if v.shape != self.geometry.grid_shape:
            raise GeometryMismatch(
                f"values shape {v.shape} != grid {self.geometry.grid_shape}"
            )
        if not np.all(np.isfinite(v)):
            raise NonFiniteInput("image values must be finite")
        if np.any(v < 0.0):
            raise ValidationError("image values must be non-negative")
        if v.flags.writeable:
            v = v.copy()  # defensive: keep caller mutations out
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, geometry: DetectorGeometry) -> "Image":
        return cls(geometry, np.zeros(geometry.grid_shape))

    @property
    def norm2(self) -> float:
        return float(np.linalg.norm(self.values))

    def with_values(self, values: np.ndarray) -> "Image":
        return Image(self.geometry, values)


# ---------------------------------------------------------------------------
# File formats.  Two on-disk forms are accepted:
#
#   1. a self-contained JSON document
#        {"geometry": {...}, "values": [[...], ...]}
#   2. a JSON header line {"geometry": {...}, "rows": R, "cols": C}
#      followed by R lines of C comma-separated pixel values
#
# The writer emits form 1.
# ---------------------------------------------------------------------------


def write_image(img: Image, path: str | Path) -> None:
    doc = {
        "geometry": img.geometry.to_json_dict(),
        "values": img.values.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def read_image(path: str | Path) -> Image:
    text = Path(path).read_text()
    first_newline = text.find("\n")
    head = text if first_newline < 0 else text[:first_newline]
    try:
        doc = json.loads(text)
        single_doc = True
    except json.JSONDecodeError:
        single_doc = False
    if single_doc:
        if not isinstance(doc, dict) or "geometry" not in doc:
            raise ValidationError("image JSON must carry a 'geometry' object")
        if "values" not in doc:
            raise ValidationError("self-contained image JSON must carry 'values'")
        geom = DetectorGeometry.from_json_dict(doc["geometry"])
        return Image(geom, np.asarray(doc["values"], dtype=np.float64))
    # header + CSV body
    try:
        header = json.loads(head)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"unreadable image header: {exc}") from exc
    for key in ("geometry", "rows", "cols"):
        if key not in header:
            raise ValidationError(f"image header missing {key!r}")
    geom = DetectorGeometry.from_json_dict(header["geometry"])
    rows, cols = int(header["rows"]), int(header["cols"])
    body = text[first_newline + 1 :]
    lines = [ln for ln in body.splitlines() if ln.strip()]
    if len(lines) != rows:
        raise ValidationError(f"expected {rows} CSV rows, found {len(lines)}")
    try:
        values = np.array(
            [[float(cell) for cell in ln.split(",")] for ln in lines],
            dtype=np.float64,
        )
    except ValueError as exc:
        raise ValidationError(f"unreadable CSV pixel row: {exc}") from exc
    if values.shape != (rows, cols):
        raise ValidationError(
            f"CSV body shape {values.shape} != header ({rows}, {cols})"
        )
    return Image(geom, values)


def write_image_csv(img: Image, path: str | Path) -> None:
    """Header+CSV form; kept for interoperability tests."""
    rows, cols = img.values.shape
    header = {"geometry": img.geometry.to_json_dict(), "rows": rows, "cols": cols}
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in img.values:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
