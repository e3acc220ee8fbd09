"""Error taxonomy shared by the library and the command-line frontend.

The CLI maps these onto process exit codes:

* ConfigError      -> 2   (bad parameters, contract violations, unusable input)
* NumericError     -> 3   (quadrature failure, resource limits, non-convergence)
* ConsistencyError -> 4   (internal cross-checks or golden fixtures disagree)
"""


class WorkbenchError(Exception):
    """Base class for all package errors."""


class ConfigError(WorkbenchError):
    """Invalid parameters or violated call contracts."""


class NumericError(WorkbenchError):
    """Numerical procedure failed to reach its target accuracy or budget."""


class ResourceError(NumericError):
    """A configured size or iteration budget was exceeded."""


class ConsistencyError(WorkbenchError):
    """An internal consistency invariant or stored fixture was violated."""
