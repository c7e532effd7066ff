"""Exception hierarchy for sqzstat.

Validation errors (bad inputs, malformed files, broken invariants) derive
from ValidationError; numerical failures (singular systems, degenerate
designs, fits that cannot be formed) derive from NumericalError.  The CLI
maps ValidationError to exit code 1 and NumericalError to exit code 2.
"""


class SqzError(Exception):
    """Base class for all sqzstat errors."""


class ValidationError(SqzError):
    """Invalid input, configuration, or file content."""


class NumericalError(SqzError):
    """A numerical procedure failed or was handed a degenerate problem."""


# -- parameter / model domain ------------------------------------------------

class InvalidParameter(ValidationError):
    """A physical parameter violates its domain (sign, range, consistency)."""


class InvalidFraction(InvalidParameter):
    """A dimensionless fraction is outside its allowed interval."""


class NonPositiveLoss(InvalidParameter):
    """Derived intracavity loss rate would be negative or zero where forbidden."""


class ZeroConversion(InvalidParameter):
    """Single-pass conversion coefficient must be positive."""


class ZeroPump(InvalidParameter):
    """Pump power must be positive."""


class SubThermalG2(InvalidParameter):
    """g2(0) <= 2: outside the super-bunched domain the pump model covers."""


class AboveThreshold(InvalidParameter):
    """Pump power at or above the oscillation threshold."""


class NonPositiveVariance(InvalidParameter):
    """Variance must be positive to convert to decibels."""


# -- simulation --------------------------------------------------------------

class ConfigInvalid(ValidationError):
    """Simulation configuration violates an invariant; message says which."""


# -- correlation -------------------------------------------------------------

class EmptyStream(ValidationError):
    """A time-tag stream with zero tags where tags are required."""


class UnsortedInput(ValidationError):
    """Timestamps are not sorted ascending."""


class MissingTotals(ValidationError):
    """Histogram lacks singles totals / acquisition time needed to normalize."""


class NotNormalized(ValidationError):
    """Operation requires a normalized histogram (g2 values present)."""


# -- fitting -----------------------------------------------------------------

class SingularJacobian(NumericalError):
    """Normal matrix is singular; the fit cannot proceed or be covaried."""


class DegenerateDesign(NumericalError):
    """Design matrix carries no information (e.g. all abscissae equal)."""


class NoCombDetected(NumericalError):
    """Histogram shows no comb structure to seed the model fit."""


# -- uncertainty propagation -------------------------------------------------

class TooManySampleFailures(NumericalError):
    """More than the allowed fraction of Monte Carlo samples errored out."""


# -- file formats ------------------------------------------------------------

class BadMagic(ValidationError):
    """Tag file does not start with the SQZT magic."""


class UnsupportedVersion(ValidationError):
    """Tag file version is not supported by this reader."""


class UnsortedChannel(ValidationError):
    """Tag file records are not sorted by timestamp within a channel."""


class TruncatedRecord(ValidationError):
    """Tag file ends mid-record or mid-trailer."""


class IoFailure(SqzError):
    """Underlying I/O failed."""


# -- pipeline ----------------------------------------------------------------

class StageFailure(SqzError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")
