"""Least-squares Monte Carlo solvers for Markovian BSVIEs with diagonal dependence.

The backward equation on the triangle ``0 <= t <= s <= T`` is::

    dY(t, s) = g(t, s, X(s), Y(t, s), Z(t, s), Y(s, s), Z(s, s)) ds + Z(t, s) dB(s),
    Y(t, T) = h(t, X(T)),

so one step of the recursion reads ``Y_n = E_n[Y_{n+1}] - dt * g``.  Pathwise values
on the whole triangle do not fit in memory at desk-scale path counts, so solutions
keep full diagonals, per-node path statistics and regression coefficients for all
paths, plus the complete triangle on the first ``keep_paths`` paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._parallel import map_ordered
from .errors import GridMismatch, MissingDerivativeCallables, NoConvergence, NonFiniteSolution, PathsOutsideSpatialGrid
from .forward import PathEnsemble
from .model import MarkovianModel, TriangularGrid, node_index
from .pde import TwoTimeField, gradient_x
from .regression import Projector, RegressionBasis

MODES = ("explicit-diagonal", "picard-inner")
DEFAULT_KEEP = 2048
_FD_X = 1e-6
_FD_T = 1e-5


@dataclass(frozen=True)
class BsvieSolution:
    grid: TriangularGrid
    ensemble: PathEnsemble
    basis: RegressionBasis
    options: dict
    Y: np.ndarray  # (nodes, K, k) on the kept paths
    Z: np.ndarray  # (nodes, K, k, n_w)
    Yd: np.ndarray  # (N+1, J, k)
    Zd: np.ndarray  # (N+1, J, k, n_w)
    y_mean: np.ndarray  # (nodes, k), over all J paths
    y_std: np.ndarray
    z_mean: np.ndarray  # (nodes, k, n_w)
    z_std: np.ndarray
    coef_y: dict = field(repr=False)  # node index -> coefficients of the continuation value
    coef_z: dict = field(repr=False)

    @property
    def keep(self) -> int:
        return self.Y.shape[1]

    def y(self, m: int, n: int) -> np.ndarray:
        return self.Y[node_index(m, n)]

    def z(self, m: int, n: int) -> np.ndarray:
        return self.Z[node_index(m, n)]


class DerivativeSolution(BsvieSolution):
    """Same layout as :class:`BsvieSolution`; ``Y``/``Z`` hold ``Y_t``/``Z_t``."""


@dataclass(frozen=True)
class BsdeSolution:
    """Output of the standard BSDE solver for one frozen parameter ``t``."""

    t_index: int
    Y: np.ndarray  # (N+1, K, k), NaN before t
    Z: np.ndarray  # (N+1, K, k, n_w)
    y_mean: np.ndarray  # (N+1, k)
    z_mean: np.ndarray  # (N+1, k, n_w)


@dataclass
class BmoEstimate:
    profile: np.ndarray  # e[n]
    per_slice: np.ndarray  # e[m, n], NaN where undefined
    norm: float


@dataclass
class CrossValidationReport:
    rms_y: float
    max_y: float
    rms_z: float
    max_z: float
    rms_yd: float
    max_yd: float
    rms_zd: float
    max_zd: float
    outside_fraction: float
    nodes: list = field(default_factory=list)  # (m, n, t, s, rms_y, max_y, rms_z, max_z)

    def summary(self) -> str:
        return "\n".join(
            [
                "Feynman-Kac cross-validation (Monte Carlo vs finite differences)",
                f"  Y        : rms {self.rms_y:.4e}  max {self.max_y:.4e}",
                f"  Z        : rms {self.rms_z:.4e}  max {self.max_z:.4e}",
                f"  Y(s,s)   : rms {self.rms_yd:.4e}  max {self.max_yd:.4e}",
                f"  Z(s,s)   : rms {self.rms_zd:.4e}  max {self.max_zd:.4e}",
                f"  outside  : {self.outside_fraction:.4%} of path states",
            ]
        )


# ---------------------------------------------------------------------------
# finite-difference helpers


def terminal_gradient(fn: Callable, t: float, x: np.ndarray, k: int) -> np.ndarray:
    """Central-difference Jacobian of ``fn(t, x)`` in ``x``: shape ``(P, k, d)``."""
    P, d = x.shape
    out = np.empty((P, k, d))
    for i in range(d):
        h = _FD_X * (1.0 + np.abs(x[:, i]))
        xp = x.copy()
        xm = x.copy()
        xp[:, i] += h
        xm[:, i] -= h
        out[:, :, i] = (fn(t, xp) - fn(t, xm)) / (2.0 * h)[:, None]
    return out


def _jac_y(gen, t, s, x, y, z, yd, zd) -> np.ndarray:
    P, k = y.shape
    out = np.empty((P, k, k))
    for i in range(k):
        h = _FD_X * (1.0 + np.abs(y[:, i]))
        yp = y.copy()
        ym = y.copy()
        yp[:, i] += h
        ym[:, i] -= h
        out[:, :, i] = (gen(t, s, x, yp, z, yd, zd) - gen(t, s, x, ym, z, yd, zd)) / (2.0 * h)[:, None]
    return out


def _jac_z(gen, t, s, x, y, z, yd, zd) -> np.ndarray:
    P, k, nw = z.shape
    out = np.empty((P, k, k, nw))
    for i in range(k):
        for w in range(nw):
            h = _FD_X * (1.0 + np.abs(z[:, i, w]))
            zp = z.copy()
            zm = z.copy()
            zp[:, i, w] += h
            zm[:, i, w] -= h
            out[:, :, i, w] = (gen(t, s, x, y, zp, yd, zd) - gen(t, s, x, y, zm, yd, zd)) / (2.0 * h)[:, None]
    return out


def _continuation(proj: Projector, y_next: np.ndarray, dw: np.ndarray, dt: float):
    """Regressed continuation value and martingale integrand estimate."""
    yhat = proj.fit(y_next)
    z = proj.fit((y_next - yhat)[:, :, None] * dw[:, None, :]) / dt
    return yhat, z


# ---------------------------------------------------------------------------
# backward march


class _March:
    def __init__(
        self,
        model: MarkovianModel,
        grid: TriangularGrid,
        ensemble: PathEnsemble,
        basis: RegressionBasis,
        mode: str = "explicit-diagonal",
        sweeps: int = 3,
        theta: float = 1.0,
        implicit_y: bool = False,
        keep_paths: int = DEFAULT_KEEP,
        workers: int = 1,
        frozen: tuple[np.ndarray, np.ndarray] | None = None,
        single_row: int | None = None,
        derivative: dict | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if ensemble.grid != grid:
            raise GridMismatch("ensemble was simulated on a different grid")
        if ensemble.start_index != 0:
            raise ValueError("the BSVIE solvers need paths started at t0 = 0")
        self.model = model
        self.grid = grid
        self.ens = ensemble
        self.basis = basis
        self.mode = mode
        self.sweeps = sweeps
        self.theta = float(theta)
        self.implicit_y = implicit_y
        self.workers = workers
        self.frozen = frozen
        self.single_row = single_row
        self.deriv = derivative
        self.J = ensemble.n_paths
        self.K = min(int(keep_paths), self.J)
        self.k = model.sol_dim
        self.nw = model.noise_dim

    def options(self) -> dict:
        return {
            "mode": self.mode,
            "sweeps": self.sweeps,
            "theta": self.theta,
            "implicit_y": self.implicit_y,
            "keep_paths": self.K,
            "frozen": self.frozen is not None,
        }

    def rows(self, n: int) -> list[int]:
        if self.single_row is not None:
            return [self.single_row] if self.single_row <= n else []
        return list(range(n + 1))

    def _terminal_z(self, fn: Callable, t: float, x: np.ndarray) -> np.ndarray:
        sig = np.asarray(self.model.diffusion(self.grid.T), dtype=float)
        return terminal_gradient(fn, t, x, self.k) @ sig

    def _h_t(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.model.terminal_t is not None:
            return self.model.terminal_t(t, x)
        eps = _FD_T * self.grid.T
        return (self.model.terminal(t + eps, x) - self.model.terminal(t - eps, x)) / (2.0 * eps)

    def _g_t(self, t, s, x, y, z, yd, zd) -> np.ndarray:
        if self.model.generator_t is not None:
            return self.model.generator_t(t, s, x, y, z, yd, zd)
        eps = _FD_T * self.grid.T
        g = self.model.generator
        return (g(t + eps, s, x, y, z, yd, zd) - g(t - eps, s, x, y, z, yd, zd)) / (2.0 * eps)

    def run(self):
        model, grid, ens = self.model, self.grid, self.ens
        N, dt, J, K, k, nw = grid.N, grid.dt, self.J, self.K, self.k, self.nw
        gen = model.generator
        theta = self.theta
        nodes = grid.node_count if self.single_row is None else N + 1

        def slot(m, n):
            return node_index(m, n) if self.single_row is None else n

        store_y = np.full((nodes, K, k), np.nan)
        store_z = np.full((nodes, K, k, nw), np.nan)
        y_mean = np.full((nodes, k), np.nan)
        y_std = np.full((nodes, k), np.nan)
        z_mean = np.full((nodes, k, nw), np.nan)
        z_std = np.full((nodes, k, nw), np.nan)
        coef_y, coef_z = {}, {}
        Yd = np.zeros((N + 1, J, k))
        Zd = np.zeros((N + 1, J, k, nw))
        d_parts = None
        if self.deriv is not None:
            d_parts = {
                "Y": np.full((nodes, K, k), np.nan),
                "Z": np.full((nodes, K, k, nw), np.nan),
                "y_mean": np.full((nodes, k), np.nan),
                "y_std": np.full((nodes, k), np.nan),
                "z_mean": np.full((nodes, k, nw), np.nan),
                "z_std": np.full((nodes, k, nw), np.nan),
                "Yd": np.zeros((N + 1, J, k)),
                "Zd": np.zeros((N + 1, J, k, nw)),
                "coef_y": {},
                "coef_z": {},
            }

        def record(m, n, yv, zv, parts=None, cy=None, cz=None):
            i = slot(m, n)
            ys, zs = (store_y, store_z) if parts is None else (parts["Y"], parts["Z"])
            ym, ysd, zm, zsd = (
                (y_mean, y_std, z_mean, z_std)
                if parts is None
                else (parts["y_mean"], parts["y_std"], parts["z_mean"], parts["z_std"])
            )
            ys[i] = yv[:K]
            zs[i] = zv[:K]
            ym[i] = yv.mean(axis=0)
            ysd[i] = yv.std(axis=0)
            zm[i] = zv.mean(axis=0)
            zsd[i] = zv.std(axis=0)
            if cy is not None:
                (coef_y if parts is None else parts["coef_y"])[i] = cy
                (coef_z if parts is None else parts["coef_z"])[i] = cz

        # terminal level
        xN = ens.level(N)
        rowsN = self.rows(N)
        Ynext = {m: model.terminal(grid.time(m), xN) for m in rowsN}
        need_z_next = theta < 1.0
        Znext = {m: self._terminal_z(model.terminal, grid.time(m), xN) for m in rowsN}
        for m in rowsN:
            record(m, N, Ynext[m], Znext[m])
        Yd[N] = model.terminal(grid.T, xN)
        Zd[N] = self._terminal_z(model.terminal, grid.T, xN)
        if d_parts is not None:
            Ytnext = {m: self._h_t(grid.time(m), xN) for m in rowsN}
            for m in rowsN:
                record(m, N, Ytnext[m], self._terminal_z(self._h_t, grid.time(m), xN), parts=d_parts)
            d_parts["Yd"][N] = Ytnext[N] if N in Ytnext else self._h_t(grid.T, xN)
            d_parts["Zd"][N] = self._terminal_z(self._h_t, grid.T, xN)
        if not need_z_next:
            Znext = None

        diag_active = self.single_row is None and self.frozen is None
        for n in range(N - 1, -1, -1):
            s = grid.time(n)
            x = ens.level(n)
            dw = np.ascontiguousarray(ens.increments[:, n, :])
            proj = Projector(self.basis, x)
            rows = self.rows(n)
            if not rows:
                break

            def cont(m, proj=proj, dw=dw):
                return _continuation(proj, Ynext[m], dw, dt)

            conts = dict(zip(rows, map_ordered(cont, rows, self.workers)))

            gnext = None
            if theta < 1.0:
                x1 = ens.level(n + 1)
                s1 = grid.time(n + 1)
                if self.frozen is not None:
                    yd1, zd1 = self.frozen[0][n + 1], self.frozen[1][n + 1]
                elif diag_active:
                    yd1, zd1 = Yd[n + 1], Zd[n + 1]
                else:
                    yd1, zd1 = np.zeros((J, k)), np.zeros((J, k, nw))

                def gn(m, x1=x1, s1=s1, yd1=yd1, zd1=zd1, proj=proj):
                    return proj.fit(gen(grid.time(m), s1, x1, Ynext[m], Znext[m], yd1, zd1))

                gnext = dict(zip(rows, map_ordered(gn, rows, self.workers)))

            if self.frozen is not None:
                yd_arg, zd_arg = self.frozen[0][n], self.frozen[1][n]
            elif not diag_active:
                yd_arg, zd_arg = np.zeros((J, k)), np.zeros((J, k, nw))
            elif self.mode == "explicit-diagonal":
                yd_arg, zd_arg = proj.fit(Yd[n + 1]), proj.fit(Zd[n + 1])
            else:
                yd_arg, zd_arg = proj.fit(Yd[n + 1]), conts[n][1]

            if self.mode == "picard-inner" and diag_active:
                n_sweeps = self.sweeps
            elif self.implicit_y:
                n_sweeps = 2
            else:
                n_sweeps = 1

            y_arg = {m: conts[m][0] for m in rows}
            Ycur = None
            for _ in range(n_sweeps):

                def update(m, yd_arg=yd_arg, zd_arg=zd_arg, y_arg=y_arg, x=x, s=s):
                    yhat, z = conts[m]
                    g = gen(grid.time(m), s, x, y_arg[m], z, yd_arg, zd_arg)
                    if gnext is None:
                        return yhat - dt * g
                    return yhat - dt * (theta * g + (1.0 - theta) * gnext[m])

                used = (yd_arg, zd_arg, y_arg)
                Ycur = dict(zip(rows, map_ordered(update, rows, self.workers)))
                if self.mode == "picard-inner" and diag_active:
                    yd_arg = Ycur[n]
                if self.implicit_y:
                    y_arg = Ycur
            yd_used, zd_used, y_used = used

            for m in rows:
                if not np.all(np.isfinite(Ycur[m])) or not np.all(np.isfinite(conts[m][1])):
                    raise NonFiniteSolution(f"non-finite solution at node (m={m}, n={n})")
                record(m, n, Ycur[m], conts[m][1], cy=proj.coefficients(Ynext[m]), cz=proj.coefficients(
                    (Ynext[m] - conts[m][0])[:, :, None] * dw[:, None, :]) / dt)
            if self.single_row is None:
                Yd[n] = Ycur[n]
                Zd[n] = conts[n][1]

            if d_parts is not None:

                def dstep(m, proj=proj, dw=dw, x=x, s=s):
                    ythat, zt = _continuation(proj, Ytnext[m], dw, dt)
                    args = (grid.time(m), s, x, y_used[m], conts[m][1], yd_used, zd_used)
                    gt = self._g_t(*args)
                    gy = _jac_y(gen, *args)
                    gz = _jac_z(gen, *args)
                    drive = gt + np.einsum("pij,pj->pi", gy, ythat) + np.einsum("pijw,pjw->pi", gz, zt)
                    return ythat - dt * drive, zt

                dres = dict(zip(rows, map_ordered(dstep, rows, self.workers)))
                for m in rows:
                    record(m, n, dres[m][0], dres[m][1], parts=d_parts)
                if self.single_row is None:
                    d_parts["Yd"][n] = dres[n][0]
                    d_parts["Zd"][n] = dres[n][1]
                Ytnext = {m: dres[m][0] for m in rows}

            Ynext = Ycur
            if need_z_next:
                Znext = {m: conts[m][1] for m in rows}

        base = dict(
            Y=store_y, Z=store_z, Yd=Yd, Zd=Zd, y_mean=y_mean, y_std=y_std,
            z_mean=z_mean, z_std=z_std, coef_y=coef_y, coef_z=coef_z,
        )
        return base, d_parts


def _freeze(parts: dict) -> dict:
    for v in parts.values():
        if isinstance(v, np.ndarray):
            v.flags.writeable = False
    return parts


def _solution(cls, march: _March, parts: dict):
    return cls(grid=march.grid, ensemble=march.ens, basis=march.basis, options=march.options(), **_freeze(parts))


def solve_bsvie_mc(
    model: MarkovianModel,
    grid: TriangularGrid,
    ensemble: PathEnsemble,
    basis: RegressionBasis = RegressionBasis(),
    mode: str = "explicit-diagonal",
    *,
    sweeps: int = 3,
    theta: float = 1.0,
    implicit_y: bool = False,
    keep_paths: int = DEFAULT_KEEP,
    workers: int = 1,
) -> BsvieSolution:
    """Backward regression solver on the whole triangle.

    ``mode="explicit-diagonal"`` feeds the generator at level ``n`` with the level
    ``n+1`` diagonals projected onto ``basis(X_n)``.  ``mode="picard-inner"`` uses the
    current-level ``Z(s_n, s_n)`` and refreshes ``Y(s_n, s_n)`` for ``sweeps`` passes.
    ``theta`` weights the generator between levels ``n`` and ``n+1`` (``theta=0.5`` is
    second order in ``dt`` when combined with ``picard-inner`` and ``implicit_y``).
    """
    march = _March(model, grid, ensemble, basis, mode, sweeps, theta, implicit_y, keep_paths, workers)
    base, _ = march.run()
    return _solution(BsvieSolution, march, base)


def solve_bsde_mc(
    model: MarkovianModel,
    grid: TriangularGrid,
    ensemble: PathEnsemble,
    t_index: int,
    basis: RegressionBasis = RegressionBasis(),
    *,
    theta: float = 1.0,
    implicit_y: bool = False,
    keep_paths: int = DEFAULT_KEEP,
) -> BsdeSolution:
    """Standard backward regression BSDE for the single parameter ``t = t_index * dt``.

    The generator's diagonal arguments receive zeros; the result matches the BSVIE
    solver's row ``m = t_index`` exactly when the generator ignores them.
    """
    march = _March(model, grid, ensemble, basis, "explicit-diagonal", 1, theta, implicit_y, keep_paths,
                   single_row=t_index)
    base, _ = march.run()
    return BsdeSolution(t_index, base["Y"], base["Z"], base["y_mean"], base["z_mean"])


def solve_derivative_bsvie(
    model: MarkovianModel,
    base: BsvieSolution,
    grid: TriangularGrid | None = None,
    ensemble: PathEnsemble | None = None,
    basis: RegressionBasis | None = None,
    *,
    allow_fd: bool = True,
    workers: int = 1,
) -> DerivativeSolution:
    """Solve the linear system for ``(Y_t, Z_t)`` driven by ``g_t + g_y Y_t + g_z Z_t``.

    The base recursion is replayed in lockstep (same code path, hence identical values)
    so the generator derivatives can be evaluated along every path; the replayed
    diagonals are checked against ``base``.
    """
    grid = base.grid if grid is None else grid
    ensemble = base.ensemble if ensemble is None else ensemble
    basis = base.basis if basis is None else basis
    if grid != base.grid or ensemble is not base.ensemble:
        raise GridMismatch("derivative solve must use the base solution's grid and ensemble")
    if not allow_fd and (model.generator_t is None or model.terminal_t is None):
        raise MissingDerivativeCallables("generator_t/terminal_t missing and finite-difference fallback disabled")
    opts = base.options
    march = _March(
        model, grid, ensemble, basis, opts["mode"], opts["sweeps"], opts["theta"], opts["implicit_y"],
        opts["keep_paths"], workers, derivative={},
    )
    replay, dparts = march.run()
    if not np.array_equal(replay["Yd"], base.Yd):
        raise GridMismatch("replayed base diagonals differ from the supplied base solution")
    return _solution(DerivativeSolution, march, dparts)


def reconstruct_diagonal(base: BsvieSolution, deriv: DerivativeSolution) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals rebuilt as ``(Y, Z)(0, s) + int_0^s (Y_t, Z_t)(a, s) da`` (trapezoid rule).

    Returned on the kept paths: shapes ``(N+1, K, k)`` and ``(N+1, K, k, n_w)``.
    """
    if base.grid != deriv.grid or base.ensemble is not deriv.ensemble or base.keep != deriv.keep:
        raise GridMismatch("base and derivative solutions live on different grids/ensembles")
    N, dt = base.grid.N, base.grid.dt
    yrec = np.empty((N + 1,) + base.Y.shape[1:])
    zrec = np.empty((N + 1,) + base.Z.shape[1:])
    for n in range(N + 1):
        lo = node_index(0, n)
        yt = deriv.Y[lo : lo + n + 1]
        zt = deriv.Z[lo : lo + n + 1]
        if n == 0:
            iy, iz = 0.0, 0.0
        else:
            iy = dt * (yt.sum(axis=0) - 0.5 * (yt[0] + yt[-1]))
            iz = dt * (zt.sum(axis=0) - 0.5 * (zt[0] + zt[-1]))
        yrec[n] = base.Y[lo] + iy
        zrec[n] = base.Z[lo] + iz
    return yrec, zrec


def picard_solve(
    model: MarkovianModel,
    grid: TriangularGrid,
    ensemble: PathEnsemble,
    basis: RegressionBasis = RegressionBasis(),
    max_iters: int = 20,
    tol: float = 1e-3,
    *,
    theta: float = 1.0,
    implicit_y: bool = False,
    keep_paths: int = DEFAULT_KEEP,
    initial: tuple[np.ndarray, np.ndarray] | None = None,
    workers: int = 1,
) -> tuple[BsvieSolution, list[float]]:
    """Fixed-point iteration on the diagonal pair.

    Each pass freezes ``(Y(s, s), Z(s, s))``, solves the resulting family of standard
    BSDEs, and reads off new diagonals.  ``history[i]`` is the sup-norm distance between
    the diagonals after pass ``i+1`` and the ones frozen into it.
    """
    J, N, k, nw = ensemble.n_paths, grid.N, model.sol_dim, model.noise_dim
    if initial is None:
        frozen = (np.zeros((N + 1, J, k)), np.zeros((N + 1, J, k, nw)))
    else:
        frozen = initial
    history: list[float] = []
    for _ in range(max_iters):
        march = _March(model, grid, ensemble, basis, "explicit-diagonal", 1, theta, implicit_y, keep_paths,
                       workers, frozen=frozen)
        parts, _ = march.run()
        sol = _solution(BsvieSolution, march, parts)
        diff = max(float(np.max(np.abs(sol.Yd - frozen[0]))), float(np.max(np.abs(sol.Zd - frozen[1]))))
        history.append(diff)
        if diff < tol:
            return sol, history
        frozen = (sol.Yd, sol.Zd)
    raise NoConvergence(max_iters, history)


def estimate_bmo_norm(
    solution: BsvieSolution, which: str = "Z", basis: RegressionBasis | None = None
) -> BmoEstimate:
    """Empirical ``sup_s || E[ int_s^T |Z|^2 | F_s ] ||_inf`` by regressing tail sums.

    ``which`` is ``"Z"`` (martingale integrand of the triangle), ``"Z_t"`` (requires a
    :class:`DerivativeSolution`), or ``"Yd"``/``"Zd"`` for the diagonal processes.
    """
    basis = solution.basis if basis is None else basis
    grid, ens = solution.grid, solution.ensemble
    N, dt = grid.N, grid.dt
    per = np.full((N + 1, N + 1), np.nan)
    if which in ("Z", "Z_t"):
        if which == "Z_t" and not isinstance(solution, DerivativeSolution):
            raise TypeError("which='Z_t' needs a DerivativeSolution")
        K = solution.keep
        X = ens.paths[:K]
        tails = np.zeros((N + 1, K))
        per[np.arange(N + 1), N] = 0.0
        for n in range(N - 1, -1, -1):
            proj = Projector(basis, X[:, n, :])
            lo = node_index(0, n)
            zz = solution.Z[lo : lo + n + 1]
            tails[: n + 1] += dt * np.sum(zz.reshape(n + 1, K, -1) ** 2, axis=2)
            for m in range(n + 1):
                per[m, n] = float(np.max(proj.fit(tails[m])))
        profile = np.nanmax(per, axis=0)
    elif which in ("Yd", "Zd"):
        arr = solution.Yd if which == "Yd" else solution.Zd
        J = arr.shape[1]
        tail = np.zeros(J)
        profile = np.zeros(N + 1)
        for n in range(N - 1, -1, -1):
            tail = tail + dt * np.sum(arr[n].reshape(J, -1) ** 2, axis=1)
            profile[n] = float(np.max(Projector(basis, ens.level(n)).fit(tail)))
        per[0] = profile
    else:
        raise ValueError("which must be one of 'Z', 'Z_t', 'Yd', 'Zd'")
    return BmoEstimate(profile=profile, per_slice=per, norm=float(np.max(profile)))


def feynman_kac_check(
    model: MarkovianModel,
    pde_field: TwoTimeField,
    mc_solution: BsvieSolution,
    space=None,
    max_outside: float = 0.01,
) -> CrossValidationReport:
    """Compare Monte Carlo ``(Y, Z)`` with ``(u, u_x sigma)`` interpolated at the path states."""
    if pde_field.grid != mc_solution.grid:
        raise GridMismatch("PDE field and Monte Carlo solution use different time grids")
    if space is not None and space != pde_field.space:
        raise GridMismatch("spatial grid differs from the PDE field's grid")
    grid = pde_field.grid
    xs = pde_field.space.points
    ux = gradient_x(pde_field)
    K = mc_solution.keep
    X = mc_solution.ensemble.paths[:K, :, 0]
    inside = (X >= xs[0]) & (X <= xs[-1])
    outside = 1.0 - float(inside.mean())
    if outside > max_outside:
        raise PathsOutsideSpatialGrid(outside, max_outside)
    sig = [float(np.asarray(model.diffusion(grid.time(n)))[0, 0]) for n in range(grid.N + 1)]

    sy = sz = 0.0
    cnt = 0
    my = mz = 0.0
    rows = []
    for m, n in grid.nodes():
        mask = inside[:, n]
        xv = X[mask, n]
        ey = mc_solution.y(m, n)[mask, 0] - np.interp(xv, xs, pde_field.row(m, n))
        ez = mc_solution.z(m, n)[mask, 0, 0] - np.interp(xv, xs, ux.row(m, n)) * sig[n]
        sy += float(ey @ ey)
        sz += float(ez @ ez)
        cnt += ey.size
        ay = float(np.max(np.abs(ey))) if ey.size else 0.0
        az = float(np.max(np.abs(ez))) if ez.size else 0.0
        my, mz = max(my, ay), max(mz, az)
        c = max(ey.size, 1)
        rows.append((m, n, grid.time(m), grid.time(n), np.sqrt(ey @ ey / c), ay, np.sqrt(ez @ ez / c), az))

    syd = szd = 0.0
    cd = 0
    myd = mzd = 0.0
    for n in range(grid.N + 1):
        mask = inside[:, n]
        xv = X[mask, n]
        ey = mc_solution.Yd[n, :K][mask, 0] - np.interp(xv, xs, pde_field.row(n, n))
        ez = mc_solution.Zd[n, :K][mask, 0, 0] - np.interp(xv, xs, ux.row(n, n)) * sig[n]
        syd += float(ey @ ey)
        szd += float(ez @ ez)
        cd += ey.size
        if ey.size:
            myd = max(myd, float(np.max(np.abs(ey))))
            mzd = max(mzd, float(np.max(np.abs(ez))))
    return CrossValidationReport(
        rms_y=float(np.sqrt(sy / cnt)),
        max_y=my,
        rms_z=float(np.sqrt(sz / cnt)),
        max_z=mz,
        rms_yd=float(np.sqrt(syd / cd)),
        max_yd=myd,
        rms_zd=float(np.sqrt(szd / cd)),
        max_zd=mzd,
        outside_fraction=outside,
        nodes=rows,
    )
