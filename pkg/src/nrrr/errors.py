"""Exception types shared across the package.

The CLI maps these onto exit codes (config -> 1, data -> 2, numerical -> 3),
so raising the right class matters at every layer.
"""


class ConfigError(ValueError):
    """Invalid parameters: bad ranks, basis sizes, domains, flag combinations."""


class DataError(ValueError):
    """Invalid input data: malformed CSV, out-of-domain grids, shape mismatches."""


class NumericalError(RuntimeError):
    """A computation failed numerically: non-p.d. matrix, zero SSE, SVD failure."""


class NumericsWarning(UserWarning):
    """Non-fatal numerical event, e.g. singular normal equations handled by pinv."""
