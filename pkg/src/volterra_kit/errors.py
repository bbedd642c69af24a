"""Exception hierarchy shared by all solver modules."""

from __future__ import annotations


class VolterraError(Exception):
    """Base class for every error raised by volterra_kit."""


class InvalidHorizon(VolterraError):
    pass


class InvalidSpatialGrid(VolterraError):
    pass


class DegenerateDiffusion(VolterraError):
    pass


class DimensionMismatch(VolterraError):
    pass


class NonFiniteState(VolterraError):
    pass


class SingularTangent(VolterraError):
    pass


class CFLViolation(VolterraError):
    pass


class NonFiniteField(VolterraError):
    pass


class NonFiniteSolution(VolterraError):
    pass


class MissingDerivativeCallables(VolterraError):
    pass


class GridMismatch(VolterraError):
    pass


class PathsOutsideSpatialGrid(VolterraError):
    def __init__(self, fraction: float, limit: float):
        super().__init__(
            f"{fraction:.4%} of path states fall outside the spatial grid (limit {limit:.2%})"
        )
        self.fraction = fraction
        self.limit = limit


class NoConvergence(VolterraError):
    def __init__(self, max_iters: int, history: list[float]):
        last = history[-1] if history else float("nan")
        super().__init__(f"no convergence after {max_iters} iterations (last difference {last:.3e})")
        self.max_iters = max_iters
        self.history = list(history)


class InvalidStateModel(VolterraError):
    pass


class InvalidMVModel(VolterraError):
    pass


class SigmaFloorBreach(VolterraError):
    pass


class ConfigError(VolterraError):
    """Configuration could not be parsed or validated; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class SingularDesignMatrix(UserWarning):
    """Emitted when a regression design matrix is rank deficient and a ridge solve is used."""
