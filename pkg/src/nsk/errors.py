"""Exception types shared across the package."""


class NskError(Exception):
    """Base class for all solver errors."""


class ConfigError(NskError):
    """Scenario config failed schema validation."""


class OutOfAdmissibleRange(NskError):
    """(rho, theta) left the admissible rectangle around the reference state."""


class NonZeroMean(NskError):
    """A field that must be mean-free over the box has a nonzero mean."""


class ZeroModeSingular(NskError):
    """A Fourier multiplier singular at xi=0 met data with a nonzero mean."""


class DerivativeBudgetExceeded(NskError):
    """Requested derivative order exceeds what the grid resolves reliably."""


class DecompositionMismatch(NskError):
    """div v does not reassemble from the supplied (V1, V2) witnesses."""


class InnerLoopDiverged(NskError):
    """Advection relaxation inside the linear solve failed to converge."""


class NotContracting(NskError):
    """Outer fixed-point iteration stopped contracting."""


class CFLViolation(NskError):
    """Time step exceeds the advective CFL bound."""


class BlowUpDetected(NskError):
    """Evolution run left the admissible set or grew beyond the guard."""


class BoxTooSmall(NskError):
    """Constructed decaying data has a boundary tail above the allowed level."""


class MalformedArtifact(NskError):
    """A run artifact (CSV, snapshot, manifest) failed validation."""
