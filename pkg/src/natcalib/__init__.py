"""Gauge-group calibration for pixel-array dose detectors.

The library models device misalignment as an element of a product of
one-parameter groups (rotation, axial shift, magnification, intensity),
pushes group elements onto recorded images through an induced action,
and recovers natural coordinates for the misalignment by minimizing a
group-parameterized discrepancy.
"""

__version__ = "0.1.0"

from .actions import (
    ActionBinding,
    ActionSemantic,
    action_defect,
    apply,
    generate_gaussian_plan,
    random_gaussian_plan,
    sample_at,
    standard_binding,
)
from .align import (
    AlignmentResult,
    MinimumRecord,
    ObjectiveSpec,
    OptimizerConfig,
    brute_force_oracle,
    calibrate,
    evaluate_objective,
)
from .detector import (
    DetectorGeometry,
    Image,
    read_image,
    write_image,
    write_image_csv,
)
from .errors import (
    NatcalibError,
    NumericalError,
    ValidationError,
)
from .groups import (
    Factor,
    FactorKind,
    GaugeGroupSpec,
    GroupCurve,
    GroupElement,
    compose,
    evaluate_curve,
    identity,
    inverse,
    quotient_spec,
    signed_representative,
)
from .kernels import (
    DetectorTypeCatalog,
    KernelReport,
    MisalignedLineReport,
    compute_kernel_analytic,
    compute_kernel_numeric,
    default_probes,
    enumerate_detector_types,
    misaligned_line_kernel_demo,
)
from .metrics import (
    DistanceForm,
    MetricSpec,
    StabilizerReport,
    WeightVector,
    distance_k,
    natural_distance,
    natural_distance_forms,
    norm_k,
    stabilizer_diagnostic,
)
from .scenario import (
    ScenarioConfig,
    SweepSpec,
    build_sweep_plan,
    default_tolerances,
    linac_gauge_spec,
    ring_plan,
    run_scenario,
)

__all__ = [
    "__version__",
    "ActionBinding",
    "ActionSemantic",
    "AlignmentResult",
    "DetectorGeometry",
    "DetectorTypeCatalog",
    "DistanceForm",
    "Factor",
    "FactorKind",
    "GaugeGroupSpec",
    "GroupCurve",
    "GroupElement",
    "Image",
    "KernelReport",
    "MetricSpec",
    "MinimumRecord",
    "MisalignedLineReport",
    "NatcalibError",
    "NumericalError",
    "ObjectiveSpec",
    "OptimizerConfig",
    "ScenarioConfig",
    "StabilizerReport",
    "SweepSpec",
    "ValidationError",
    "WeightVector",
    "action_defect",
    "apply",
    "brute_force_oracle",
    "build_sweep_plan",
    "calibrate",
    "compose",
    "compute_kernel_analytic",
    "compute_kernel_numeric",
    "default_probes",
    "default_tolerances",
    "distance_k",
    "enumerate_detector_types",
    "evaluate_curve",
    "evaluate_objective",
    "generate_gaussian_plan",
    "identity",
    "inverse",
    "linac_gauge_spec",
    "misaligned_line_kernel_demo",
    "natural_distance",
    "natural_distance_forms",
    "norm_k",
    "quotient_spec",
    "random_gaussian_plan",
    "read_image",
    "ring_plan",
    "run_scenario",
    "sample_at",
    "signed_representative",
    "stabilizer_diagnostic",
    "standard_binding",
    "write_image",
    "write_image_csv",
]
