"""Finite differences for the nonlocal semilinear PDE on the triangle times a 1-d grid.

The equation solved backward in ``s`` for every external parameter ``t`` is::

    u_s + 1/2 sigma(s)^2 u_xx + b(s, x) u_x
        - g(t, s, x, u, u_x sigma, u(s, s, x), u_x(s, s, x) sigma) = 0,
    u(t, T, x) = h(t, x).

The diagonal arguments at level ``n`` are taken from the already computed
diagonal ``u(s_{n+1}, s_{n+1}, .)`` unless inner sweeps are requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ._parallel import map_ordered
from .errors import CFLViolation, DimensionMismatch, GridMismatch, NonFiniteField
from .model import MarkovianModel, SpatialGrid, TriangularGrid, node_index

SCHEMES = ("explicit", "semi-implicit-diffusion")
BOUNDARIES = ("linear-extrapolation", "frozen-terminal")


@dataclass(frozen=True)
class PDESolverConfig:
    scheme: str = "semi-implicit-diffusion"
    boundary: str = "linear-extrapolation"
    cfl_safety: float = 0.9
    inner_sweeps: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.inner_sweeps < 0:
            raise ValueError("inner_sweeps must be non-negative")


@dataclass(frozen=True)
class TwoTimeField:
    """Values ``u[m][n][i]`` stored level-packed as ``values[node_index(m, n), i]``."""

    values: np.ndarray
    grid: TriangularGrid
    space: SpatialGrid

    def row(self, m: int, n: int) -> np.ndarray:
        if not 0 <= m <= n <= self.grid.N:
            raise IndexError(f"node ({m}, {n}) is outside the triangle")
        return self.values[node_index(m, n)]

    def __getitem__(self, mn: tuple[int, int]) -> np.ndarray:
        return self.row(*mn)


def _check_scalar(model: MarkovianModel) -> None:
    if (model.state_dim, model.sol_dim, model.noise_dim) != (1, 1, 1):
        raise DimensionMismatch("the finite-difference solver handles d = k = n_w = 1 only")


def _sigma(model: MarkovianModel, s: float) -> float:
    return float(np.asarray(model.diffusion(s))[0, 0])


def check_cfl(model: MarkovianModel, grid: TriangularGrid, space: SpatialGrid, config: PDESolverConfig) -> float:
    """Return the CFL number ``dt * max sigma^2 / dx^2``; raise if the explicit scheme is unstable."""
    sig2 = max(_sigma(model, s) ** 2 for s in grid.times)
    ratio = grid.dt * sig2 / space.dx**2
    if config.scheme == "explicit" and ratio > config.cfl_safety:
        raise CFLViolation(
            f"dt*sigma^2/dx^2 = {ratio:.3f} exceeds cfl_safety {config.cfl_safety} for the explicit scheme"
        )
    return ratio


def _d1(u: np.ndarray, dx: float) -> np.ndarray:
    return np.gradient(u, dx, edge_order=2)


class _Stepper:
    """One backward time step for a single ``t``-row, shared by the nonlocal and local solvers."""

    def __init__(self, model: MarkovianModel, grid: TriangularGrid, space: SpatialGrid, config: PDESolverConfig):
        self.model = model
        self.grid = grid
        self.space = space
        self.config = config
        self.x = space.points
        self.xc = self.x[:, None]
        self._banded = {}

    def _matrix(self, n: int) -> np.ndarray:
        ab = self._banded.get(n)
        if ab is None:
            M = self.space.M_x
            a = 0.5 * _sigma(self.model, self.grid.time(n)) ** 2 * self.grid.dt / self.space.dx**2
            ab = np.zeros((3, M + 1))
            ab[1, :] = 1.0
            ab[1, 1:M] = 1.0 + 2.0 * a
            ab[0, 2 : M + 1] = -a  # super-diagonal of rows 1..M-1
            ab[2, 0 : M - 1] = -a  # sub-diagonal of rows 1..M-1
            self._banded[n] = ab
        return ab

    def __call__(self, t: float, n: int, u_next: np.ndarray, ubar: np.ndarray, ubar_x: np.ndarray) -> np.ndarray:
        model, dt, dx = self.model, self.grid.dt, self.space.dx
        s = self.grid.time(n)
        sig = _sigma(model, s)
        ux = _d1(u_next, dx)
        b = model.drift(s, self.xc)[:, 0]
        g = model.generator(
            t,
            s,
            self.xc,
            u_next[:, None],
            (ux * sig)[:, None, None],
            ubar[:, None],
            (ubar_x * sig)[:, None, None],
        )[:, 0]
        if self.config.scheme == "explicit":
            uxx = np.zeros_like(u_next)
            uxx[1:-1] = (u_next[2:] - 2.0 * u_next[1:-1] + u_next[:-2]) / dx**2
            new = u_next + dt * (0.5 * sig**2 * uxx + b * ux - g)
        else:
            rhs = u_next + dt * (b * ux - g)
            new = solve_banded((1, 1), self._matrix(n), rhs)
        if self.config.boundary == "frozen-terminal":
            ends = self.xc[[0, -1]]
            new[[0, -1]] = model.terminal(t, ends)[:, 0]
        return new


def solve_nonlocal_pde(
    model: MarkovianModel,
    grid: TriangularGrid,
    space: SpatialGrid,
    config: PDESolverConfig = PDESolverConfig(),
    workers: int = 1,
) -> TwoTimeField:
    _check_scalar(model)
    check_cfl(model, grid, space, config)
    step = _Stepper(model, grid, space, config)
    N, dx = grid.N, space.dx
    u = np.empty((grid.node_count, space.M_x + 1))
    x = step.xc
    for m in range(N + 1):
        u[node_index(m, N)] = model.terminal(grid.time(m), x)[:, 0]

    for n in range(N - 1, -1, -1):
        ubar = u[node_index(n + 1, n + 1)]
        ubar_x = _d1(ubar, dx)
        for _ in range(config.inner_sweeps):
            ubar = step(grid.time(n), n, u[node_index(n, n + 1)], ubar, ubar_x)
            ubar_x = _d1(ubar, dx)

        def one(m: int, n=n, ubar=ubar, ubar_x=ubar_x) -> np.ndarray:
            return step(grid.time(m), n, u[node_index(m, n + 1)], ubar, ubar_x)

        rows = map_ordered(one, range(n + 1), workers)
        lo = node_index(0, n)
        u[lo : lo + n + 1] = rows
        if not np.all(np.isfinite(u[lo : lo + n + 1])):
            raise NonFiniteField(f"non-finite values at level n={n} (s={grid.time(n):.4g})")
    u.flags.writeable = False
    return TwoTimeField(u, grid, space)


def solve_local_pde(
    model: MarkovianModel,
    grid: TriangularGrid,
    space: SpatialGrid,
    t_index: int,
    config: PDESolverConfig = PDESolverConfig(),
) -> np.ndarray:
    """Standard (local) semilinear solve for the single parameter ``t = t_index * dt``.

    The diagonal arguments are fed the local values, so the result coincides with the
    nonlocal solver only for generators that ignore them.  Rows ``n < t_index`` are NaN.
    """
    _check_scalar(model)
    check_cfl(model, grid, space, config)
    step = _Stepper(model, grid, space, config)
    t = grid.time(t_index)
    out = np.full((grid.N + 1, space.M_x + 1), np.nan)
    out[grid.N] = model.terminal(t, step.xc)[:, 0]
    for n in range(grid.N - 1, t_index - 1, -1):
        nxt = out[n + 1]
        out[n] = step(t, n, nxt, nxt, _d1(nxt, space.dx))
        if not np.all(np.isfinite(out[n])):
            raise NonFiniteField(f"non-finite values at level n={n}")
    return out


def diagonal_slice(field: TwoTimeField) -> np.ndarray:
    """``v[n, i] = u(s_n, s_n, x_i)``."""
    idx = [node_index(n, n) for n in range(field.grid.N + 1)]
    return field.values[idx].copy()


def gradient_x(field: TwoTimeField, space: SpatialGrid | None = None) -> TwoTimeField:
    """``u_x`` by central differences inside and second-order one-sided ones at the ends."""
    space = field.space if space is None else space
    if space != field.space:
        raise GridMismatch("spatial grid differs from the field's grid")
    grad = np.gradient(field.values, space.dx, axis=1, edge_order=2)
    grad.flags.writeable = False
    return TwoTimeField(grad, field.grid, space)


def interpolate(field: TwoTimeField, m: int, n: int, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``u(t_m, s_n, .)`` at arbitrary points."""
    return np.interp(x, field.space.points, field.row(m, n))
