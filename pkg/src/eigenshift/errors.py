"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ValidationError -> 2, solver-side
failures (SolverError and subclasses, MeshError) -> 3, threshold
failures raised by the harness -> 4.
"""


class EigenshiftError(Exception):
    """Base class for all package errors."""


class ValidationError(EigenshiftError):
    """A scene or argument violates a documented precondition."""


class DomainError(ValidationError):
    """Input outside the supported evaluation range."""


class MeshError(EigenshiftError):
    """Mesh generation failed or produced an inconsistent triangulation."""


class SolverError(EigenshiftError):
    """Linear or eigenvalue solve broke down."""


class ConvergenceError(SolverError):
    """An iterative procedure exhausted its budget without converging."""


class MatchingError(SolverError):
    """Perturbed/unperturbed eigen-group matching overlap fell below 0.5."""


class FitError(ValidationError):
    """Rate fitting received unusable samples."""


class CalibrationError(EigenshiftError):
    """No convention candidate met the calibration requirement."""


class ThresholdError(EigenshiftError):
    """A configured acceptance threshold was not met (CLI exit code 4)."""
