"""Exception taxonomy for the control-synthesis library."""


class EpbraidError(Exception):
    """Base class for all library errors."""


class DegenerateSpectrumError(EpbraidError):
    """Spectrum evaluated at (or too close to) an exceptional point."""


class SingularFrameError(EpbraidError):
    """Eigenframe parametrization hit a singular point."""


class CoalescenceError(DegenerateSpectrumError):
    """Eigenvectors coalesce; no independent pair exists."""


class BranchRefinementError(EpbraidError):
    """Branch-cut crossing localization failed (grid too coarse)."""


class InvalidDressingError(EpbraidError):
    """Dressing angle does not return to the identity sheet at the final time."""


class FieldDiscontinuityError(EpbraidError):
    """Synthesized control fields jump between adjacent samples."""


class IntegrationError(EpbraidError):
    """Flow integration failed."""


class StiffnessError(IntegrationError):
    """Step size underflow in the adaptive integrator."""


class GeneratorError(IntegrationError):
    """Generator returned non-finite matrix entries."""


class DegenerateProjectionError(EpbraidError):
    """All eigenmode projections of a state vanished."""


class PermutationExtractionError(EpbraidError):
    """Final flow has no clear permutation structure in the initial eigenbasis."""


class EPOnPathError(EpbraidError):
    """Instantaneous spectrum degenerates somewhere along a protocol."""


class InfeasibleTargetError(EpbraidError):
    """Target generator lies outside the reachable set of the platform."""

    def __init__(self, message, time=None, residual=None):
        super().__init__(message)
        self.time = time
        self.residual = residual


class ScheduleDomainError(EpbraidError, ValueError):
    """Time argument outside the schedule's domain [0, t0]."""


class ConfigError(EpbraidError, ValueError):
    """Run configuration failed validation."""
