"""Exception hierarchy.

Two families matter for the CLI: validation problems (bad inputs, exit
code 1) and numerical failures discovered mid-computation (exit code 2).
"""


class NatcalibError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NatcalibError):
    """Malformed or inconsistent input; maps to CLI exit code 1."""


class NumericalError(NatcalibError):
    """Numerically unusable data or exhausted budget; CLI exit code 2."""


class SpecMismatch(ValidationError):
    """Operands built against different gauge group specs."""


class BoundsViolation(ValidationError):
    """A bounded factor coordinate left its interval."""


class OutOfRange(ValidationError):
    """Curve parameter outside the sampled range."""


class UnknownFactor(ValidationError):
    """Factor name not present in the gauge group spec."""


class NonFiniteInput(ValidationError):
    """NaN or infinity where finite values are required."""


class BadSpotParameters(ValidationError):
    """Gaussian spot with nonpositive width or invalid amplitude."""


class GeometryMismatch(ValidationError):
    """Two images (or an image and a binding) with different geometries."""


class BadK(ValidationError):
    """Norm order k < 1."""


class LengthMismatch(ValidationError):
    """Coordinate and weight vectors of different lengths."""


class TooManyFactors(ValidationError):
    """Detector-type enumeration requested for an impractically large spec."""


class OutOfBounds(ValidationError):
    """Objective evaluated outside the declared search box."""


class ZeroImage(NumericalError):
    """Operation undefined on an all-zero image."""


class DegenerateProbes(NumericalError):
    """Probe images cannot excite the directions under analysis."""


class AllZeroMeasured(NumericalError):
    """Calibration target image has no signal."""


class BudgetExceeded(NumericalError):
    """Requested evaluation count above the safety cap."""
