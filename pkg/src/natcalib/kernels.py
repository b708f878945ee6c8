"""What a detector cannot see: kernel and distinguishability analysis.

A factor lies in the kernel of the induced action when probing along it
leaves every probe image unchanged.  Factors outside the kernel can still
be mutually indistinguishable when their image perturbation directions
are linearly dependent (the classic case is a single pixel, where a
magnification and an intensity change both just rescale the reading).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .actions import (
    ActionBinding,
    ActionSemantic,
    apply,
    random_gaussian_plan,
    sample_at,
    standard_binding,
)
from .detector import CYLINDER, LINE, DetectorGeometry, Image
from .errors import (
    DegenerateProbes,
    GeometryMismatch,
    TooManyFactors,
    ValidationError,
)
from .groups import GaugeGroupSpec, GroupElement

PROBE_STEPS = (0.01, -0.01, 0.1, -0.1)
DEFAULT_PROBE_SEEDS = (101, 102, 103)


@dataclass(frozen=True)
class KernelReport:
    """Kernel factor set plus linear-dependence diagnostics.

    ``rank`` equals ``len(kernel_factors)`` whenever the kernel is a
    coordinate subgroup; a tilted line detector instead loses a coupled
    direction, reported through rank 1 with an empty factor set.
    """

    kernel_factors: frozenset[str]
    rank: int
    method: str  # "numeric" | "analytic"
    indistinguishable_groups: tuple[frozenset[str], ...] = ()
    max_relative_response: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "kernel_factors": sorted(self.kernel_factors),
            "rank": self.rank,
            "method": self.method,
            "indistinguishable_groups": [
                sorted(g) for g in self.indistinguishable_groups
            ],
            "max_relative_response": dict(sorted(self.max_relative_response.items())),
        }


def _probe_is_degenerate(img: Image) -> bool:
    v = img.values
    peak = float(np.max(np.abs(v)))
    if peak == 0.0:
        return True
    if v.size == 1:
        return False  # a single pixel cannot be anything but constant
    return float(np.ptp(v)) <= 1e-12 * peak


def default_probes(geometry: DetectorGeometry, count: int = 3, seed: int = 0):
    return [
        random_gaussian_plan(geometry, seed + s)
        for s in DEFAULT_PROBE_SEEDS[: max(1, count)]
    ]


def _dependence_groups(names, dirs, threshold=1e-8):
    """Group factors whose directions are pairwise parallel (union-find)."""
    parent = list(range(len(names)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    norms = [float(np.linalg.norm(d)) for d in dirs]
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            if norms[i] == 0.0 or norms[j] == 0.0:
                continue
            cos = abs(float(np.dot(dirs[i], dirs[j]))) / (norms[i] * norms[j])
            if 1.0 - cos < threshold:
                parent[find(i)] = find(j)
    groups: dict[int, set[str]] = {}
    for i, n in enumerate(names):
        groups.setdefault(find(i), set()).add(n)
    return tuple(
        frozenset(g) for g in sorted(
            (g for g in groups.values() if len(g) > 1),
            key=lambda g: sorted(g),
        )
    )


def compute_kernel_numeric(
    binding: ActionBinding,
    probes: list[Image] | None = None,
    tol: float = 1e-9,
) -> KernelReport:
    """Probe every factor along +-0.01 and +-0.1 on each probe image.

    Factor j joins the kernel when the largest relative image change
    ``||apply(step e_j, P) - P||_2 / ||P||_2`` stays below ``tol``.
    """
    spec = binding.spec
    geometry = binding.geometry
    if probes is None:
        probes = default_probes(geometry)
    if not probes:
        raise ValidationError("at least one probe image is required")
    for p in probes:
        if p.geometry != geometry:
            raise GeometryMismatch("probe geometry differs from the binding's")
    usable = [p for p in probes if not _probe_is_degenerate(p)]
    if not usable:
        raise DegenerateProbes("all probe images are constant")

    names = list(spec.names)
    max_resp = {n: 0.0 for n in names}
    dirs = []
    for j, name in enumerate(names):
        pieces = []
        for p in usable:
            ref = p.norm2
            for step in PROBE_STEPS:
                e = [0.0] * spec.dim
                e[j] = step
                moved = apply(GroupElement(spec, tuple(e)), p, binding)
                resp = float(np.linalg.norm(moved.values - p.values)) / ref
                if resp > max_resp[name]:
                    max_resp[name] = resp
            e = [0.0] * spec.dim
            e[j] = PROBE_STEPS[0]
            plus = apply(GroupElement(spec, tuple(e)), p, binding)
            e[j] = -PROBE_STEPS[0]
            minus = apply(GroupElement(spec, tuple(e)), p, binding)
            pieces.append((plus.values - minus.values).ravel())
        dirs.append(np.concatenate(pieces))

    kernel = frozenset(n for n in names if max_resp[n] < tol)
    visible = [n for n in names if n not in kernel]
    groups = _dependence_groups(
        visible, [dirs[names.index(n)] for n in visible]
    )
    return KernelReport(
        kernel_factors=kernel,
        rank=len(kernel),
        method="numeric",
        indistinguishable_groups=groups,
        max_relative_response=max_resp,
    )


def compute_kernel_analytic(binding: ActionBinding) -> KernelReport:
    """Kernel from the semantics/geometry table, no probing.

    Assumes non-degenerate grids (at least two pixels along any axis a
    geometric semantic acts on); single-pixel strips behave like points
    and should be analyzed numerically.
    """
    geometry = binding.geometry
    kernel = set()
    multiplicative_visible = []
    for f in binding.spec.factors:
        sem = binding.semantic_of(f.name)
        if sem is None:
            kernel.add(f.name)
        elif sem is ActionSemantic.ROTATE_PHI:
            if geometry.kind != CYLINDER:
                kernel.add(f.name)
        elif sem is ActionSemantic.TRANSLATE_Z:
            if geometry.kind == "point":
                kernel.add(f.name)
        else:
            # magnification and intensity always leave a visible trace
            if geometry.kind == "point":
                multiplicative_visible.append(f.name)
    groups = ()
    if len(multiplicative_visible) > 1:
        groups = (frozenset(multiplicative_visible),)
    return KernelReport(
        kernel_factors=frozenset(kernel),
        rank=len(kernel),
        method="analytic",
        indistinguishable_groups=groups,
    )


# ---------------------------------------------------------------------------
# Detector-type catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectorTypeCatalog:
    """All coordinate subgrogroups a detector could select as its kernel."""

    spec: GaugeGroupSpec
    entries: tuple[tuple[frozenset[str], frozenset[str]], ...]

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.to_json_dict(),
            "entries": [
                {
                    "normal_subgroup": sorted(kernel),
                    "visible_quotient": sorted(visible),
                    "rank": len(kernel),
                }
                for kernel, visible in self.entries
            ],
        }


def enumerate_detector_types(spec: GaugeGroupSpec) -> DetectorTypeCatalog:
    """Every subset of factors as a candidate kernel, with its quotient.

    Ordered by kernel rank, then lexicographically by factor names.
    """
    if spec.dim > 20:
        raise TooManyFactors(
            f"{spec.dim} factors means {2 ** spec.dim} detector types; refusing"
        )
    names = spec.names
    subsets = []
    for mask in range(2 ** spec.dim):
        kernel = frozenset(n for i, n in enumerate(names) if mask >> i & 1)
        visible = frozenset(n for n in names if n not in kernel)
        subsets.append((kernel, visible))
    subsets.sort(key=lambda kv: (len(kv[0]), sorted(kv[0])))
    return DetectorTypeCatalog(spec=spec, entries=tuple(subsets))


# ---------------------------------------------------------------------------
# Misaligned line detector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MisalignedLineReport:
    kernel: KernelReport
    fitted_slope: float
    curve_description: str
    tilt_angle: float
    direction_ratio_rank: int

    def to_json_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_json_dict(),
            "fitted_slope": self.fitted_slope,
            "curve_description": self.curve_description,
            "tilt_angle": self.tilt_angle,
            "direction_ratio_rank": self.direction_ratio_rank,
        }


def _stripe_probe(geometry: DetectorGeometry, angle: float, seed: int) -> Image:
    """Cylinder plan varying along the tilted direction only.

    A one-pixel-wide detector resolves structure along itself; fields
    constant perpendicular (in canonical coordinates) to the tilt are the
    class it can fully represent.  Stripes are periodic around the
    circumference and ride on a plateau envelope so the interior carries
    no axial boundary artifacts.
    """
    rng = np.random.default_rng(seed)
    nu, nv = geometry.grid_shape
    ku = geometry.pixels_per_radian
    kv = geometry.axial_pixels_per_unit
    iu = np.arange(nu, dtype=np.float64)[:, None]
    iv = np.arange(nv, dtype=np.float64)[None, :]
    phi = (iu + 0.5) / ku
    z = (iv + 0.5) / kv
    s = angle * phi + z  # constant exactly along gauge direction (1, -angle)
    period = abs(angle) * 2.0 * math.pi
    # keep every stripe wavelength resolvable on the backing grid; the
    # circumferential period constrains the fundamental to angle * 2pi
    harmonics = [h for h in (1, 2, 3) if period * kv / h >= 8.0]
    if not harmonics:
        raise ValidationError(
            "tilt too small for the backing resolution; raise backing_resolution"
        )
    vals = np.zeros((nu, nv))
    amp_total = 0.0
    for harmonic in harmonics:
        amp = rng.uniform(0.4, 1.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        vals = vals + amp * np.cos(2.0 * math.pi * harmonic * s / period + phase)
        amp_total += amp
    vals = vals + amp_total + 0.5  # keep strictly positive
    ramp = max(4, nv // 8)
    envelope = np.ones(nv)
    edge = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp)
    envelope[:ramp] = edge
    envelope[nv - ramp :] = edge[::-1]
    return Image(geometry, vals * envelope[None, :])


def misaligned_line_kernel_demo(
    angle: float,
    spec: GaugeGroupSpec,
    geometry: DetectorGeometry,
    probe: Image | None = None,
    backing_resolution: int = 128,
    seed: int = 7,
) -> MisalignedLineReport:
    """Kernel structure of a line detector tilted by ``angle`` rad per
    unit z across the cylinder surface.

    The line samples the backing cylinder along phi(z) = angle * z.
    Rotation and axial translation then move the sampled pattern along a
    single image direction, so their joint sensitivity block has rank
    one: the detector keeps a coupled phi-z direction and loses its
    complement.  The least-squares ratio of the phi response to the z
    response recovers the tilt.

    With angle = 0 this reduces to the axis-aligned line, whose kernel is
    the plain rotation factor.
    """
    if geometry.kind != LINE:
        raise GeometryMismatch("the demo expects a line geometry")
    if not math.isfinite(angle):
        raise ValidationError("tilt angle must be finite")

    if angle == 0.0:
        line_binding = standard_binding(spec, geometry)
        report = compute_kernel_numeric(line_binding)
        return MisalignedLineReport(
            kernel=report,
            fitted_slope=0.0,
            curve_description="phi(z) = 0 (aligned)",
            tilt_angle=0.0,
            direction_ratio_rank=2 - min(1, len(report.kernel_factors)),
        )

    n = backing_resolution
    cyl = DetectorGeometry.cylinder(n, n, geometry.length)
    cyl_binding = standard_binding(spec, cyl)
    if probe is None:
        probe = _stripe_probe(cyl, angle, seed)
    elif probe.geometry != cyl:
        raise GeometryMismatch(
            f"probe must live on the backing cylinder {n}x{n}"
        )

    # path of the line's pixels on the backing grid
    z_k = (np.arange(geometry.n) + 0.5) * geometry.length / geometry.n
    phi_k = angle * z_k
    u_k = phi_k * cyl.pixels_per_radian - 0.5
    v_k = z_k * cyl.axial_pixels_per_unit - 0.5

    ramp_units = max(4, n // 8) / cyl.axial_pixels_per_unit
    interior = (z_k > ramp_units) & (z_k < geometry.length - ramp_units)
    if interior.sum() < 8:
        raise ValidationError("line too short for the interior fit window")

    def line_view(element_coords):
        moved = apply(GroupElement(spec, tuple(element_coords)), probe, cyl_binding)
        return sample_at(moved, u_k, v_k)

    steps = {
        "phi": 0.75 / cyl.pixels_per_radian,
        "z": 0.75 / cyl.axial_pixels_per_unit,
        "c": 5e-3,
        "i": 5e-3,
    }
    dirs = {}
    for name in spec.names:
        j = spec.index_of(name)
        step = steps.get(name, 1e-3)
        e = [0.0] * spec.dim
        e[j] = step
        plus = line_view(e)
        e[j] = -step
        minus = line_view(e)
        dirs[name] = (plus - minus) / (2.0 * step)

    d_phi = dirs["phi"][interior]
    d_z = dirs["z"][interior]
    scale = float(np.linalg.norm(sample_at(probe, u_k, v_k)[interior]))
    if (
        scale == 0.0
        or float(np.linalg.norm(d_z)) < 1e-6 * scale
        or float(np.linalg.norm(d_phi)) < 1e-6 * float(np.linalg.norm(d_z))
    ):
        raise DegenerateProbes(
            "probe cannot excite the coupled rotation/translation directions"
        )

    slope = float(np.dot(d_phi, d_z) / np.dot(d_z, d_z))
    pair = np.stack([d_phi, d_z], axis=1)
    svals = np.linalg.svd(pair, compute_uv=False)
    pair_rank = int(np.sum(svals > 0.1 * svals[0]))

    # rank of the span of responses; columns are normalized so the test
    # sees independence, not the magnitude imbalance between factors
    cols = []
    for name in spec.names:
        d = dirs[name][interior]
        nrm = float(np.linalg.norm(d))
        if nrm > 1e-9 * scale:
            cols.append(d / nrm)
    full_rank = 0
    if cols:
        fsv = np.linalg.svd(np.stack(cols, axis=1), compute_uv=False)
        full_rank = int(np.sum(fsv > 0.05 * fsv[0]))
    kernel_rank = spec.dim - full_rank

    groups = ()
    if pair_rank == 1:
        groups = (frozenset({"phi", "z"}),)
    report = KernelReport(
        kernel_factors=frozenset(),
        rank=kernel_rank,
        method="numeric",
        indistinguishable_groups=groups,
        max_relative_response={
            name: float(np.linalg.norm(dirs[name][interior])) / scale
            for name in spec.names
        },
    )
    return MisalignedLineReport(
        kernel=report,
        fitted_slope=slope,
        curve_description=f"phi(z) = {slope:.6g} * z",
        tilt_angle=float(angle),
        direction_ratio_rank=pair_rank,
    )
