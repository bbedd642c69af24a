"""Forward diffusion: Euler-Maruyama paths, tangent process and Malliavin derivative."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import map_ordered, path_blocks
from .errors import NonFiniteState, SingularTangent
from .model import MarkovianModel, TriangularGrid

_U64 = (1 << 64) - 1
TANGENT_COND_LIMIT = 1e12


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Counter-based substream for one path: Philox keyed by ``seed``, counter offset by ``path``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & _U64, counter=[0, 0, 0, int(path)]))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PathEnsemble:
    t0: float
    x0: np.ndarray  # (d,)
    paths: np.ndarray  # (J, N+1, d)
    increments: np.ndarray  # (J, N, n_w)
    seed: int
    grid: TriangularGrid

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def start_index(self) -> int:
        return self.grid.index_of(self.t0)

    def level(self, n: int) -> np.ndarray:
        """States at time ``s_n`` as a contiguous ``(J, d)`` array."""
        return np.ascontiguousarray(self.paths[:, n, :])


@dataclass(frozen=True)
class TangentField:
    values: np.ndarray  # (J, N+1, d, d)


def draw_increments(n_paths: int, grid: TriangularGrid, noise_dim: int, seed: int, workers: int = 1) -> np.ndarray:
    shape = (grid.N, noise_dim)
    scale = np.sqrt(grid.dt)

    def block(sl: slice) -> np.ndarray:
        out = np.empty((sl.stop - sl.start,) + shape)
        for i, j in enumerate(range(sl.start, sl.stop)):
            out[i] = path_rng(seed, j).standard_normal(shape)
        return out * scale

    return np.concatenate(map_ordered(block, path_blocks(n_paths), workers), axis=0)


def propagate(
    model: MarkovianModel,
    grid: TriangularGrid,
    start_index: int,
    x0,
    increments: np.ndarray,
    workers: int = 1,
) -> np.ndarray:
    """Euler-Maruyama recursion driven by the given Brownian increments."""
    x0 = np.asarray(x0, dtype=float).reshape(model.state_dim)
    J = increments.shape[0]
    dt = grid.dt
    sigmas = [np.asarray(model.diffusion(grid.time(n)), dtype=float) for n in range(grid.N)]
    floor = model.reflect_floor

    def block(sl: slice) -> np.ndarray:
        dW = increments[sl]
        X = np.empty((dW.shape[0], grid.N + 1, model.state_dim))
        X[:, : start_index + 1, :] = x0
        for n in range(start_index, grid.N):
            x = X[:, n, :]
            nxt = x + model.drift(grid.time(n), x) * dt + dW[:, n, :] @ sigmas[n].T
            if floor is not None:
                nxt = np.where(nxt < floor, 2.0 * floor - nxt, nxt)
                nxt = np.maximum(nxt, floor)
            X[:, n + 1, :] = nxt
        return X

    X = np.concatenate(map_ordered(block, path_blocks(J), workers), axis=0)
    if not np.all(np.isfinite(X)):
        raise NonFiniteState("simulated paths contain NaN or infinite values (exploding drift?)")
    return X


def simulate_paths(
    model: MarkovianModel,
    t0: float,
    x0,
    grid: TriangularGrid,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> PathEnsemble:
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    start = grid.index_of(t0)
    dW = draw_increments(n_paths, grid, model.noise_dim, seed, workers)
    X = propagate(model, grid, start, x0, dW, workers)
    x0 = np.asarray(x0, dtype=float).reshape(model.state_dim)
    return PathEnsemble(
        t0=float(t0),
        x0=_readonly(x0.copy()),
        paths=_readonly(X),
        increments=_readonly(dW),
        seed=int(seed),
        grid=grid,
    )


def tangent_process(model: MarkovianModel, ensemble: PathEnsemble) -> TangentField:
    """Derivative of the flow with respect to ``x0`` along every path."""
    grid = ensemble.grid
    X = ensemble.paths
    J, _, d = X.shape
    i0 = ensemble.start_index
    dt = grid.dt
    out = np.empty((J, grid.N + 1, d, d))
    out[:, : i0 + 1] = np.eye(d)
    with np.errstate(over="ignore", invalid="ignore"):
        if d == 1:
            acc = np.zeros(J)
            for n in range(i0, grid.N):
                acc = acc + model.drift_jacobian(grid.time(n), X[:, n, :])[:, 0, 0] * dt
                out[:, n + 1, 0, 0] = np.exp(acc)
        else:
            # time-ordered product: Jacobians at different times need not commute
            cur = np.broadcast_to(np.eye(d), (J, d, d)).copy()
            for n in range(i0, grid.N):
                bx = model.drift_jacobian(grid.time(n), X[:, n, :])
                cur = cur + dt * (bx @ cur)
                out[:, n + 1] = cur
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("tangent process overflowed")
    return TangentField(_readonly(out))


def malliavin_derivative_x(
    model: MarkovianModel,
    ensemble: PathEnsemble,
    theta_index: int,
    s_index: int,
    tangent: TangentField | None = None,
) -> np.ndarray:
    """``D_theta X(s) = grad X(s) (grad X(theta))^{-1} sigma(theta)`` per path, shape ``(J, d, n_w)``."""
    J = ensemble.n_paths
    d, nw = model.state_dim, model.noise_dim
    if theta_index > s_index or theta_index < ensemble.start_index:
        return np.zeros((J, d, nw))
    if tangent is None:
        tangent = tangent_process(model, ensemble)
    g_theta = tangent.values[:, theta_index]
    g_s = tangent.values[:, s_index]
    sig = np.asarray(model.diffusion(ensemble.grid.time(theta_index)), dtype=float)
    if d == 1:
        a = np.abs(g_theta[:, 0, 0])
        if not np.all(a > 1.0 / TANGENT_COND_LIMIT):
            raise SingularTangent("tangent process is numerically zero")
        return (g_s[:, 0, 0] / g_theta[:, 0, 0])[:, None, None] * sig[None, :, :]
    cond = np.linalg.cond(g_theta)
    if not np.all(cond < TANGENT_COND_LIMIT):
        raise SingularTangent(f"tangent condition number {cond.max():.3e} exceeds {TANGENT_COND_LIMIT:.0e}")
    return g_s @ np.linalg.solve(g_theta, np.broadcast_to(sig, (J, d, nw)))


def bump_initial(model: MarkovianModel, ensemble: PathEnsemble, eps: float, direction=None) -> PathEnsemble:
    """Re-propagate the same noise from ``x0 + eps * direction``."""
    d = model.state_dim
    e = np.zeros(d) if direction is None else np.asarray(direction, dtype=float).reshape(d)
    if direction is None:
        e[0] = 1.0
    x0 = ensemble.x0 + eps * e
    X = propagate(model, ensemble.grid, ensemble.start_index, x0, ensemble.increments)
    return PathEnsemble(ensemble.t0, _readonly(x0), _readonly(X), ensemble.increments, ensemble.seed, ensemble.grid)


def bump_increment(
    model: MarkovianModel, ensemble: PathEnsemble, theta_index: int, eps: float, direction=None
) -> np.ndarray:
    """Paths re-propagated after shifting the Brownian increment over ``[s_theta, s_theta+1]`` by ``eps``."""
    nw = model.noise_dim
    e = np.zeros(nw) if direction is None else np.asarray(direction, dtype=float).reshape(nw)
    if direction is None:
        e[0] = 1.0
    dW = ensemble.increments.copy()
    dW[:, theta_index, :] += eps * e
    return propagate(model, ensemble.grid, ensemble.start_index, ensemble.x0, dW)
