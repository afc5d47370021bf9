"""Exception types raised by estimation and IO routines.

Every condition that callers may want to catch individually gets its own
class; all inherit from :class:`SurroPteError` so ``except SurroPteError``
catches any failure produced by this package on purpose.
"""


class SurroPteError(Exception):
    """Base class for all errors raised deliberately by this package."""


class DimensionError(SurroPteError):
    """Array arguments have incompatible shapes."""


class SchemaError(SurroPteError):
    """A required column is missing or a column mapping is invalid."""


class ParseError(SurroPteError):
    """A cell could not be parsed; the message names the offending row."""


class DegenerateArmError(SurroPteError):
    """One treatment arm is empty (or too small for the requested fit)."""


class SampleTooSmallError(SurroPteError):
    """Fewer records than the estimator requires."""


class InvalidBandwidthError(SurroPteError):
    """Bandwidth or grid configuration outside its legal range."""


class SingularDesignError(SurroPteError):
    """Design matrix is rank deficient on the weighted sample."""


class SeparationError(SurroPteError):
    """Logistic fit diverged; the data are (near) perfectly separated."""


class NoCovariateError(SurroPteError):
    """An index fit was requested with an empty covariate set."""


class DegenerateRanksError(SurroPteError):
    """All surrogate values tied; rank-correlation objective is flat."""


class EmptySupportError(SurroPteError):
    """Every grid point is degenerate; no local data anywhere."""


class NoOverlapError(SurroPteError):
    """A normalizing integral vanished; arms share no usable support."""


class UnstablePteError(SurroPteError):
    """Overall treatment effect is numerically zero; the ratio is undefined."""


class VglmFailureError(SurroPteError):
    """Varying-coefficient fit failed at every grid point."""


class ResamplingUnstableError(SurroPteError):
    """Too many perturbation replicates failed to produce estimates."""


#: Errors that a resampling replicate may hit on a bad perturbation draw
#: without invalidating the whole run; such replicates are dropped.
RECOVERABLE_ERRORS = (
    DegenerateArmError,
    SingularDesignError,
    SeparationError,
    DegenerateRanksError,
    EmptySupportError,
    NoOverlapError,
    UnstablePteError,
    VglmFailureError,
)
