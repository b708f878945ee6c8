"""Induced action of gauge factors on detector images.

Semantics, applied in a fixed order (geometry first, intensity last):

* rotate_phi          output[u, v] = input[u - d_u, v], circular in u
* translate_z         output[u, v] = input[u, v - d_v], zero fill
* scale_radial        magnification m = exp(c) about the chart center
* multiply_intensity  output = input * exp(log_i)

The three geometric maps collapse into one inverse map, per axis

    q_a(p_a) = center_a + (p_a - center_a) / m_a - d_a

so each application costs a single bilinear resampling.  Conventions:

* the cylinder's circumferential axis has no seam: sampling wraps in u
  under every geometric map, while running off the ends in v reads 0
  ("the beam leaves the detector");
* a plane zero-fills on both axes and has no circumferential coordinate,
  so rotate_phi acts trivially on it, as on lines and points;
* translate_z moves a line image along itself and does nothing to a point;
* magnification stretches both axes of a flat panel.  A cylindrical
  detector has a fixed radius, so radial motion of the pattern preserves
  azimuth angles and stretches the axial coordinate only; a line
  stretches along itself.  On a single pixel no geometry is left to act
  on; what remains observable of radial motion is the dose-rate change,
  so scale_radial multiplies a point reading by m.  On the other
  geometries it is a pure resampling with no amplitude factor.

Sub-pixel offsets within 1e-9 of an integer are snapped so that identity
and whole-pixel shifts reproduce stored values bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .detector import CYLINDER, LINE, PLANE, POINT, DetectorGeometry, Image
from .errors import (
    BadSpotParameters,
    GeometryMismatch,
    SpecMismatch,
    UnknownFactor,
    ValidationError,
    ZeroImage,
)
from .groups import FactorKind, GaugeGroupSpec, GroupElement, compose

_SNAP = 1e-9


class ActionSemantic(str, Enum):
    ROTATE_PHI = "rotate_phi"
    TRANSLATE_Z = "translate_z"
    SCALE_RADIAL = "scale_radial"
    MULTIPLY_INTENSITY = "multiply_intensity"


@dataclass(frozen=True)
class ActionBinding:
    """Maps factor names to semantics for one detector geometry.

    Unbound factors act trivially.  ``scale_center`` overrides the
    magnification fixed point, in pixel-index coordinates per axis;
    the default is the grid center.  The boundary fill value is 0.
    """

    spec: GaugeGroupSpec
    geometry: DetectorGeometry
    semantics: tuple[tuple[str, ActionSemantic], ...]
    scale_center: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        sem = tuple((n, ActionSemantic(s)) for n, s in dict(self.semantics).items())
        object.__setattr__(self, "semantics", sem)
        for name, _ in sem:
            if name not in self.spec.names:
                raise UnknownFactor(f"bound factor {name!r} not in spec")
        if self.scale_center is not None:
            c = (float(self.scale_center[0]), float(self.scale_center[1]))
            if not all(math.isfinite(x) for x in c):
                raise ValidationError("scale_center must be finite")
            object.__setattr__(self, "scale_center", c)

    @classmethod
    def of(
        cls,
        spec: GaugeGroupSpec,
        geometry: DetectorGeometry,
        mapping: dict[str, ActionSemantic | str],
        scale_center: tuple[float, float] | None = None,
    ) -> "ActionBinding":
        return cls(spec, geometry, tuple(mapping.items()), scale_center)

    def semantic_of(self, name: str) -> ActionSemantic | None:
        for n, s in self.semantics:
            if n == name:
                return s
        return None

    def center(self) -> tuple[float, float]:
        if self.scale_center is not None:
            return self.scale_center
        rows, cols = self.geometry.grid_shape
        return ((rows - 1) / 2.0, (cols - 1) / 2.0)

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.to_json_dict(),
            "geometry": self.geometry.to_json_dict(),
            "semantics": {n: s.value for n, s in self.semantics},
            "scale_center": list(self.scale_center) if self.scale_center else None,
        }


def _pull_coords(g: GroupElement, binding: ActionBinding):
    """Accumulate per-axis pixel shifts and log multipliers.

    Returns (du, dv, log_mu, log_mv, log_i).  Lines keep their single
    axis in the v slot; on a point the scale contribution lands in
    log_mv and is consumed as a dose factor.
    """
    geom = binding.geometry
    du = dv = log_mu = log_mv = log_i = 0.0
    for (name, sem) in binding.semantics:
        x = g.coord(name)
        if sem is ActionSemantic.ROTATE_PHI:
            if geom.kind == CYLINDER:
                du += x * geom.pixels_per_radian
            # no circumferential axis elsewhere: trivial
        elif sem is ActionSemantic.TRANSLATE_Z:
            if geom.kind != POINT:
                dv += x * geom.axial_pixels_per_unit
        elif sem is ActionSemantic.SCALE_RADIAL:
            if geom.kind == PLANE:
                log_mu += x
            log_mv += x
        elif sem is ActionSemantic.MULTIPLY_INTENSITY:
            log_i += x
    return du, dv, log_mu, log_mv, log_i


def _snap(q: np.ndarray) -> np.ndarray:
    r = np.rint(q)
    return np.where(np.abs(q - r) < _SNAP, r, q)


def _gather_axis(idx_float, n, periodic):
    """Split a fractional index into neighbor indices, weight, validity."""
    lo = np.floor(idx_float)
    frac = idx_float - lo
    i0 = lo.astype(np.int64)
    i1 = i0 + 1
    if periodic:
        valid0 = valid1 = None
        i0 %= n
        i1 %= n
    else:
        valid0 = ((i0 >= 0) & (i0 < n)).astype(np.float64)
        valid1 = ((i1 >= 0) & (i1 < n)).astype(np.float64)
        i0 = np.clip(i0, 0, n - 1)
        i1 = np.clip(i1, 0, n - 1)
    return i0, i1, frac, valid0, valid1


def _resample_2d(values, qu, qv, wrap_u):
    """qu has shape (nu, 1) and qv (1, nv); fancy indexing broadcasts."""
    nu, nv = values.shape
    u0, u1, fu, mu0, mu1 = _gather_axis(qu, nu, periodic=wrap_u)
    v0, v1, fv, mv0, mv1 = _gather_axis(qv, nv, periodic=False)
    c00 = values[u0, v0]
    c10 = values[u1, v0]
    c01 = values[u0, v1]
    c11 = values[u1, v1]
    if not wrap_u:
        c00 = c00 * mu0
        c10 = c10 * mu1
        c01 = c01 * mu0
        c11 = c11 * mu1
    row0 = (1.0 - fu) * c00 + fu * c10
    row1 = (1.0 - fu) * c01 + fu * c11
    return (1.0 - fv) * (row0 * mv0) + fv * (row1 * mv1)


def _resample_1d(values, q):
    n = values.shape[0]
    i0, i1, f, m0, m1 = _gather_axis(q, n, periodic=False)
    return (1.0 - f) * values[i0] * m0 + f * values[i1] * m1


def sample_at(img: Image, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear point samples at fractional grid indices (u, v).

    Uses the image's boundary policy: wraps in u on a cylinder, reads 0
    outside otherwise.  Intended for resampling paths drawn on the grid.
    """
    if img.geometry.grid_shape[1] == 1:
        return _resample_1d(img.values[:, 0], np.asarray(u, dtype=np.float64))
    return _resample_2d(
        img.values,
        np.asarray(u, dtype=np.float64),
        np.asarray(v, dtype=np.float64),
        wrap_u=(img.geometry.kind == CYLINDER),
    )


def apply(g: GroupElement, img: Image, binding: ActionBinding) -> Image:
    """Act on an image; returns a new image on the same geometry."""
    if g.spec != binding.spec:
        raise SpecMismatch("element and binding disagree on the gauge spec")
    if img.geometry != binding.geometry:
        raise GeometryMismatch("image and binding disagree on the geometry")
    du, dv, log_mu, log_mv, log_i = _pull_coords(g, binding)
    geom = img.geometry
    vals = img.values

    if geom.kind == POINT:
        out = vals * math.exp(log_mv + log_i)
        return Image(geom, out)

    if du == 0.0 and dv == 0.0 and log_mu == 0.0 and log_mv == 0.0:
        out = vals  # identity on the geometric part
    elif geom.kind == LINE:
        m = math.exp(log_mv)
        cv = binding.center()[0]
        idx = np.arange(geom.n, dtype=np.float64)
        q = _snap(cv + (idx - cv) / m - dv)
        out = _resample_1d(vals[:, 0], q).reshape(-1, 1)
    else:
        cu, cv = binding.center()
        nu, nv = vals.shape
        iu = np.arange(nu, dtype=np.float64)[:, None]
        iv = np.arange(nv, dtype=np.float64)[None, :]
        qu = _snap(cu + (iu - cu) / math.exp(log_mu) - du)
        qv = _snap(cv + (iv - cv) / math.exp(log_mv) - dv)
        out = _resample_2d(vals, qu, qv, wrap_u=(geom.kind == CYLINDER))

    if log_i != 0.0:
        out = out * math.exp(log_i)
    elif out is vals:
        out = vals.copy()
    return Image(geom, out)


def action_defect(
    g: GroupElement, h: GroupElement, img: Image, binding: ActionBinding
) -> float:
    """Relative gap between acting twice and acting by the product.

    Zero in exact arithmetic for intensity factors and whole-pixel
    rotations; bounded by the interpolation error of the image class for
    general geometric elements.
    """
    denom = img.norm2
    if denom == 0.0:
        raise ZeroImage("action defect undefined on an all-zero image")
    twice = apply(g, apply(h, img, binding), binding)
    once = apply(compose(g, h, check_bounds=False), img, binding)
    return float(np.linalg.norm(twice.values - once.values)) / denom


# ---------------------------------------------------------------------------
# Plan generation
# ---------------------------------------------------------------------------


def _check_spot(phi0, z0, amplitude, width):
    for v in (phi0, z0, amplitude, width):
        if not math.isfinite(float(v)):
            raise BadSpotParameters(f"non-finite spot parameter {v!r}")
    if width <= 0.0:
        raise BadSpotParameters(f"spot width must be positive, got {width!r}")
    if amplitude < 0.0:
        raise BadSpotParameters(f"spot amplitude must be >= 0, got {amplitude!r}")


def generate_gaussian_plan(
    geometry: DetectorGeometry,
    spots: list[tuple[float, float, float, float]],
) -> Image:
    """Sum of Gaussian spots (phi0, z0, amplitude, width).

    Spot centers: phi0 in radians, z0 in length units from the bottom
    edge.  ``width`` is the standard deviation, in radians on a cylinder
    (the z direction uses the same width in pixels, so spots are round on
    the unrolled grid) and in length units on a line.  Cylinder spots wrap
    around the circumference: wide spots tend to a phi-uniform ring.  On a
    point detector each spot contributes its amplitude.
    """
    for s in spots:
        _check_spot(*s)
    if geometry.kind == POINT:
        return Image(geometry, np.array([[sum(s[2] for s in spots)]]))

    if geometry.kind == LINE:
        idx = np.arange(geometry.n, dtype=np.float64)
        k = geometry.axial_pixels_per_unit
        vals = np.zeros(geometry.n)
        for _phi0, z0, amp, width in spots:
            c = z0 * k - 0.5
            s = width * k
            vals += amp * np.exp(-((idx - c) ** 2) / (2.0 * s * s))
        return Image(geometry, vals.reshape(-1, 1))

    nu, nv = geometry.grid_shape
    iu = np.arange(nu, dtype=np.float64)[:, None]
    iv = np.arange(nv, dtype=np.float64)[None, :]
    vals = np.zeros((nu, nv))
    if geometry.kind == CYLINDER:
        ku = geometry.pixels_per_radian
        kv = geometry.axial_pixels_per_unit
        for phi0, z0, amp, width in spots:
            cu = phi0 * ku - 0.5
            cv = z0 * kv - 0.5
            s = width * ku
            # wrap enough periodic copies that the truncated tails are
            # negligible even for widths far beyond one turn
            copies = int(np.ceil(4.0 * s / nu)) + 1
            dv2 = (iv - cv) ** 2
            for mcopy in range(-copies, copies + 1):
                du2 = (iu - cu + mcopy * nu) ** 2
                vals += amp * np.exp(-(du2 + dv2) / (2.0 * s * s))
    else:  # plane: spot centers (x0, y0) in length units, width likewise
        kx = geometry.n_x / geometry.width
        ky = geometry.axial_pixels_per_unit
        for x0, y0, amp, width in spots:
            cu = x0 * kx - 0.5
            cv = y0 * ky - 0.5
            s = width * kx
            vals += amp * np.exp(
                -(((iu - cu) ** 2) + ((iv - cv) ** 2)) / (2.0 * s * s)
            )
    return Image(geometry, vals)


def random_gaussian_plan(
    geometry: DetectorGeometry,
    seed: int,
    n_spots: int = 4,
) -> Image:
    """Seeded generic plan; used as probe material in kernel analysis."""
    rng = np.random.default_rng(seed)
    if geometry.kind == POINT:
        return Image(geometry, np.array([[1.0 + rng.uniform(0.0, 1.0)]]))
    spots = []
    for _ in range(n_spots):
        if geometry.kind == CYLINDER:
            phi0 = rng.uniform(0.0, 2.0 * math.pi)
            z0 = rng.uniform(0.25, 0.75) * geometry.height
            width = rng.uniform(0.25, 0.5)
        elif geometry.kind == LINE:
            phi0 = 0.0
            z0 = rng.uniform(0.2, 0.8) * geometry.length
            width = rng.uniform(0.04, 0.1) * geometry.length
        else:
            phi0 = rng.uniform(0.25, 0.75) * geometry.width
            z0 = rng.uniform(0.25, 0.75) * geometry.height
            width = rng.uniform(0.05, 0.12) * geometry.width
        spots.append((phi0, z0, rng.uniform(0.5, 1.5), width))
    return generate_gaussian_plan(geometry, spots)


def linac_factor_kinds() -> dict[str, FactorKind]:
    """Factor-kind table for the standard four-coordinate device gauge."""
    return {
        "phi": FactorKind.CIRCLE,
        "z": FactorKind.LINE,
        "c": FactorKind.POSITIVE_SCALE,
        "i": FactorKind.INTENSITY,
    }


_KIND_SEMANTIC = {
    FactorKind.CIRCLE: ActionSemantic.ROTATE_PHI,
    FactorKind.LINE: ActionSemantic.TRANSLATE_Z,
    FactorKind.POSITIVE_SCALE: ActionSemantic.SCALE_RADIAL,
    FactorKind.INTENSITY: ActionSemantic.MULTIPLY_INTENSITY,
}


def standard_binding(
    spec: GaugeGroupSpec,
    geometry: DetectorGeometry,
    scale_center: tuple[float, float] | None = None,
) -> ActionBinding:
    """Bind every factor to the semantic matching its kind."""
    mapping = {f.name: _KIND_SEMANTIC[f.kind] for f in spec.factors}
    return ActionBinding.of(spec, geometry, mapping, scale_center)
