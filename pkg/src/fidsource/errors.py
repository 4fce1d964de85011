"""Exception taxonomy shared across the package.

Numerical-degeneracy errors (``NotPositiveDefinite``, ``SingularJacobian``,
``DegenerateSample``) signal per-case failures: simulation drivers catch them,
record a failure flag, and keep going.  Contract errors (``LengthMismatch``,
``SchemaError``, ``ConfigError``) indicate caller bugs or bad input files and
are never swallowed.
"""


class FidsourceError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(FidsourceError):
    """A matrix required to be symmetric positive-definite is not."""


class InvalidDegreesOfFreedom(FidsourceError):
    """Degrees of freedom outside the distribution's valid range."""


class EmptyInput(FidsourceError):
    """An operation received an empty sequence it cannot act on."""


class LengthMismatch(FidsourceError):
    """Paired sequences have different lengths."""


class InsufficientReplication(FidsourceError):
    """Too few sources or repeat measurements for the requested estimator."""


class SingularDesign(FidsourceError):
    """Normal-equations matrix of a least-squares step is singular."""


class SingularJacobian(FidsourceError):
    """The Gram matrix of the data-generating gradient is numerically singular."""


class ChainInitializationFailed(FidsourceError):
    """No finite-density starting state could be found for an MCMC chain."""


class EmptyChain(FidsourceError):
    """A posterior average was requested over zero chain draws."""


class DegenerateSample(FidsourceError):
    """Sample scatter is singular even after the diagonal jitter policy."""


class SchemaError(FidsourceError):
    """An input file does not match the documented CSV schema."""


class NonPositiveConcentration(FidsourceError):
    """Log transform requested on a concentration value that is not positive."""


class EmptyClass(FidsourceError):
    """A discrimination or calibration diagnostic received an empty class."""


class InsufficientData(FidsourceError):
    """Too few scores for the requested calibration analysis."""


class EmptyResults(FidsourceError):
    """Plot-data emission was requested for an empty results table."""


class ConfigError(FidsourceError):
    """A simulation or engine configuration violates its constraints."""
