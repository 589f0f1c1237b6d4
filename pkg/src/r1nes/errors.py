"""Error types shared across the package."""


class DimensionError(ValueError):
    """Vector or matrix argument has the wrong length for the operation."""


class DegenerateDirectionError(ValueError):
    """The predominant direction has zero (or underflowed) length, so the
    direction-dependent quantities (c, v, Fisher algebra) are undefined."""


class EvaluationError(RuntimeError):
    """An objective evaluation produced a non-finite value."""


class ConfigError(ValueError):
    """A campaign or optimizer configuration is invalid."""


class CovarianceError(RuntimeError):
    """A full-covariance factor stopped being usable (non-finite entries,
    i.e. positive definiteness can no longer be certified)."""
