"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes: validation errors exit 2,
numeric failures exit 3, artifact/I-O conflicts exit 4.
"""


class ValidationError(ValueError):
    """Bad user input: parameters, configs, ranges."""


class OutOfRangeError(ValidationError):
    """A query lies outside the tabulated or admissible range."""


class OnSpectrumError(ValidationError):
    """A spectral parameter coincides with an unperturbed eigenvalue."""


class DegenerateExtensionError(ValidationError):
    """The extension parameter U has -1 in its spectrum (or (Id+U)v = 0)."""


class NonSPrimeError(ValidationError):
    """A shifted lattice vector lands on an interval endpoint shell,
    which the subsequence conditions are supposed to rule out."""


class NumericError(RuntimeError):
    """A numerical procedure failed to converge or is infeasible."""


class ArtifactConflictError(OSError):
    """An output artifact already exists with different content."""
