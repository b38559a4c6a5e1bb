"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Malformed obstacle parameter vector."""


class GeometryError(ValueError):
    """Boundary curve fails the validity predicate for the given sources."""


class SolverError(RuntimeError):
    """The discretised boundary integral system is numerically singular."""


class ConfigError(ValueError):
    """Inconsistent experiment or chain configuration."""


class PriorMismatchError(RuntimeError):
    """Too many prior draws were rejected as invalid geometries."""
