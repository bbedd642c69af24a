"""Model specifications, time/space grids and model validation.

All model callables are vectorized over a leading batch axis of ``P`` points:

* ``drift(s, x)``: ``x`` of shape ``(P, d)`` -> ``(P, d)``
* ``drift_jacobian(s, x)`` -> ``(P, d, d)``
* ``diffusion(s)`` -> ``(d, n_w)`` (state independent)
* ``generator(t, s, x, y, z, y_diag, z_diag)`` with ``y, y_diag`` of shape ``(P, k)``
  and ``z, z_diag`` of shape ``(P, k, n_w)`` -> ``(P, k)``
* ``terminal(t, x)`` -> ``(P, k)``

``t`` and ``s`` are always Python floats.  :func:`scalar_model` builds a
``d = k = n_w = 1`` model from functions acting on flat ``(P,)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DegenerateDiffusion, DimensionMismatch, InvalidHorizon, InvalidSpatialGrid

DEFAULT_ELLIPTICITY_FLOOR = 1e-8


@dataclass(frozen=True)
class MarkovianModel:
    state_dim: int
    sol_dim: int
    noise_dim: int
    drift: Callable
    drift_jacobian: Callable
    diffusion: Callable
    generator: Callable
    terminal: Callable
    generator_t: Callable | None = None
    terminal_t: Callable | None = None
    ellipticity_floor: float = DEFAULT_ELLIPTICITY_FLOOR
    # reflecting lower barrier applied to every state component after each Euler step
    reflect_floor: float | None = None
    name: str = "custom"

    def __post_init__(self):
        for attr in ("state_dim", "sol_dim", "noise_dim"):
            if int(getattr(self, attr)) < 1:
                raise DimensionMismatch(f"{attr} must be a positive integer")
        if not self.ellipticity_floor > 0:
            raise ValueError("ellipticity_floor must be positive")


def scalar_model(
    drift: Callable,
    drift_jacobian: Callable,
    diffusion: Callable | float,
    generator: Callable,
    terminal: Callable,
    generator_t: Callable | None = None,
    terminal_t: Callable | None = None,
    name: str = "custom",
    **kwargs,
) -> MarkovianModel:
    """Wrap scalar-valued callables acting on ``(P,)`` arrays into a ``MarkovianModel``.

    ``generator(t, s, x, y, z, yd, zd)`` receives flat arrays and must return a
    flat array; ``diffusion`` may be a constant.
    """

    if callable(diffusion):
        sig = diffusion

        def _diffusion(s):
            return np.array([[float(sig(s))]])
    else:
        const = float(diffusion)

        def _diffusion(s):
            return np.array([[const]])

    def _drift(s, x):
        return _col(drift(s, x[:, 0]), x.shape[0])

    def _drift_jac(s, x):
        return _col(drift_jacobian(s, x[:, 0]), x.shape[0])[:, :, None]

    def _wrap_gen(fn):
        def _g(t, s, x, y, z, yd, zd):
            return _col(fn(t, s, x[:, 0], y[:, 0], z[:, 0, 0], yd[:, 0], zd[:, 0, 0]), x.shape[0])

        return _g

    def _wrap_term(fn):
        def _h(t, x):
            return _col(fn(t, x[:, 0]), x.shape[0])

        return _h

    return MarkovianModel(
        state_dim=1,
        sol_dim=1,
        noise_dim=1,
        drift=_drift,
        drift_jacobian=_drift_jac,
        diffusion=_diffusion,
        generator=_wrap_gen(generator),
        terminal=_wrap_term(terminal),
        generator_t=_wrap_gen(generator_t) if generator_t is not None else None,
        terminal_t=_wrap_term(terminal_t) if terminal_t is not None else None,
        name=name,
        **kwargs,
    )


def _col(v, n: int) -> np.ndarray:
    # broadcast scalars (e.g. constant drift) to one column per point
    return np.broadcast_to(np.asarray(v, dtype=float), (n,)).reshape(n, 1).copy()


@dataclass(frozen=True)
class TriangularGrid:
    """Uniform grid on the triangle ``{(t, s): 0 <= t <= s <= T}``."""

    T: float
    N: int

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def time(self, n: int) -> float:
        return n * self.dt

    @property
    def node_count(self) -> int:
        return (self.N + 1) * (self.N + 2) // 2

    def nodes(self) -> Iterator[tuple[int, int]]:
        """Yield ``(m, n)`` in backward-solve order: decreasing ``n``, increasing ``m``."""
        for n in range(self.N, -1, -1):
            for m in range(n + 1):
                yield m, n

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if k < 0 or k > self.N or abs(k * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"time {t} is not a grid node")
        return k


def node_index(m: int, n: int) -> int:
    """Position of node ``(m, n)`` in level-packed triangle storage."""
    return n * (n + 1) // 2 + m


def build_grid(T: float, N: int) -> TriangularGrid:
    if not (np.isfinite(T) and T > 0):
        raise InvalidHorizon(f"horizon must be positive, got T={T}")
    if int(N) != N or N < 1:
        raise InvalidHorizon(f"step count must be a positive integer, got N={N}")
    return TriangularGrid(float(T), int(N))


@dataclass(frozen=True)
class SpatialGrid:
    x_lo: float
    x_hi: float
    M_x: int

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise InvalidSpatialGrid("x_lo must be smaller than x_hi")
        if int(self.M_x) != self.M_x or self.M_x < 2:
            raise InvalidSpatialGrid("M_x must be an integer >= 2")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.M_x

    @property
    def points(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.M_x + 1)


@dataclass
class ValidationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    min_eigenvalue: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _expect_shape(name: str, value, shape: tuple) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise DimensionMismatch(f"{name} returned shape {arr.shape}, expected {shape}")
    return arr


def validate_model(
    model: MarkovianModel, grid: TriangularGrid, probe_points: Sequence
) -> ValidationReport:
    """Check ellipticity on every grid time and output shapes at every probe point.

    Raises :class:`DegenerateDiffusion` or :class:`DimensionMismatch` on failure.
    """
    probes = np.asarray(probe_points, dtype=float)
    if probes.size == 0:
        raise ValueError("probe_points must be non-empty")
    d, k, nw = model.state_dim, model.sol_dim, model.noise_dim
    probes = probes.reshape(-1, d) if probes.ndim < 2 else probes
    if probes.shape[1] != d:
        raise DimensionMismatch(f"probe points have dimension {probes.shape[1]}, model has {d}")
    P = probes.shape[0]
    report = ValidationReport()

    min_eig = np.inf
    for s in grid.times:
        sig = _expect_shape("diffusion", model.diffusion(float(s)), (d, nw))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(sig @ sig.T).min()))
    report.min_eigenvalue = min_eig
    if min_eig < model.ellipticity_floor:
        raise DegenerateDiffusion(
            f"min eigenvalue of sigma sigma^T is {min_eig:.3e} < floor {model.ellipticity_floor:.1e}"
        )
    report.checks["ellipticity"] = True

    y = np.zeros((P, k))
    z = np.zeros((P, k, nw))
    repeat_equal = True
    for s in (0.0, grid.T):
        t = 0.0
        outs = [
            _expect_shape("drift", model.drift(s, probes), (P, d)),
            _expect_shape("drift_jacobian", model.drift_jacobian(s, probes), (P, d, d)),
            _expect_shape("terminal", model.terminal(t, probes), (P, k)),
            _expect_shape("generator", model.generator(t, s, probes, y, z, y, z), (P, k)),
        ]
        if model.generator_t is not None:
            outs.append(_expect_shape("generator_t", model.generator_t(t, s, probes, y, z, y, z), (P, k)))
        if model.terminal_t is not None:
            outs.append(_expect_shape("terminal_t", model.terminal_t(t, probes), (P, k)))
        again = [
            model.drift(s, probes),
            model.drift_jacobian(s, probes),
            model.terminal(t, probes),
            model.generator(t, s, probes, y, z, y, z),
        ]
        repeat_equal &= all(np.array_equal(a, np.asarray(b, dtype=float)) for a, b in zip(outs, again))
    report.checks["dimensions"] = True
    report.checks["deterministic"] = bool(repeat_equal)
    return report
