"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: input problems exit 2,
algorithmic non-convergence exits 3, I/O failures exit 4.
"""


class ShrinkwrapError(Exception):
    """Base class for all package errors."""


class InputError(ShrinkwrapError):
    """Malformed or unusable input data (parse failures, empty sets)."""


class DegenerateInputError(InputError):
    """Input whose geometry is too degenerate for the requested operation."""


class AlgorithmError(ShrinkwrapError):
    """An algorithm failed to converge or reached an inconsistent state."""


class ManifoldFixError(AlgorithmError):
    """The manifold repair loop did not converge."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else []


class FieldLevelError(AlgorithmError):
    """The sampled scalar field does not straddle the requested iso level."""


class IoError(ShrinkwrapError):
    """Filesystem read/write failure."""
