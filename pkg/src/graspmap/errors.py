"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes, so new failure modes should
subclass one of the existing categories instead of raising bare exceptions.
"""


class GraspMapError(Exception):
    """Base class for all toolkit errors."""


class MeshFormatError(GraspMapError):
    """A mesh file could not be parsed.

    Carries the offending path and 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class MeshValidationError(GraspMapError):
    """Mesh content violates a structural invariant (degenerate faces, bad indices)."""


class ConfigError(GraspMapError):
    """Invalid configuration value or malformed config file."""


class NoGraspsInRegionError(GraspMapError):
    """Grasp-model filter produced an empty grasp list."""


class GraspUnreachableError(GraspMapError):
    """No feasible grasp pose exists within the search budget."""

    def __init__(self, message, reports=None):
        self.reports = reports or []
        super().__init__(message)


class NumericalError(GraspMapError):
    """A solver failed to converge or produced unusable output."""
