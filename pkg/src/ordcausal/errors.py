"""Exception types shared across the package.

Input/data problems subclass ValueError; numerical/runtime failures subclass
RuntimeError. The CLI maps the two families to exit codes 1 and 2.
"""


class ParseError(ValueError):
    """A cell in an input file could not be parsed; message names row and column."""


class OrderingError(ValueError):
    """Record times within a subject are not strictly increasing."""


class DomainError(ValueError):
    """A value lies outside its documented domain."""


class CoverageError(ValueError):
    """A subject has no covariate row at or before a global event time."""


class CollinearityError(ValueError):
    """A regression design matrix is rank deficient."""


class DegeneracyError(ValueError):
    """An exposure model has (near-)zero residual variance."""


class BinningError(ValueError):
    """Exposure bins are empty or bin edges are not strictly increasing."""


class SeparationError(RuntimeError):
    """A slope diverged during fitting (complete separation / monotone likelihood)."""


class SingularHessianError(RuntimeError):
    """The Newton step could not be computed even after the ridge fallback."""


class ConvergenceError(RuntimeError):
    """An iterative fit stopped without meeting its gradient tolerance."""


class EstimationStageError(RuntimeError):
    """A pipeline stage failed; carries the stage name, chains the original error."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage={stage}: {message}")
        self.stage = stage


class StudyError(RuntimeError):
    """Too many replicate-level failures in a simulation study."""


class BootstrapError(RuntimeError):
    """Too many replicate-level failures in a bootstrap run."""
