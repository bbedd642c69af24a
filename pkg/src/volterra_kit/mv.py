"""Equilibrium mean-variance investment under a stochastic state variable.

The state ``R`` follows ``dF(R) = (theta(s) + kappa(s) E(R)) ds + sigma_R(s) dB^R``.
The decoupled backward system solved here is::

    dP(t, s) = G(s) ds + Q(t, s) dB^R(s),   P(t, T) = rho(t),
    dM(s)    = G(s) ds + N(s) dB^R(s),      M(T) = 0,
    G(s) = -(beta / (gamma sigma^2)) (beta P(s, s) + corr n sigma Q(s, s) + gamma beta M(s)),

with ``beta``, ``sigma`` evaluated at ``(s, R(s))`` and ``n`` the volatility of ``R``.
The equilibrium policy splits into a myopic part driven by ``P(s, s), M(s)`` and a
hedging part driven by ``Q(s, s)``; it never depends on current wealth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._parallel import map_ordered
from .bsvie import DEFAULT_KEEP, MODES, _continuation
from .errors import InvalidMVModel, InvalidStateModel, NonFiniteSolution, SigmaFloorBreach
from .forward import PathEnsemble, simulate_paths
from .model import MarkovianModel, TriangularGrid, node_index
from .regression import Projector, RegressionBasis

STATE_KINDS = ("HoLee", "HullWhite", "OU-Vasicek", "BrownianBridge", "Bessel", "custom")
DEFAULT_R_MIN = 1e-3
DEFAULT_SIGMA_FLOOR = 1e-6


def _as_fn(v) -> Callable[[float], float]:
    if callable(v):
        return v
    c = float(v)
    return lambda s: c


def _identity(r):
    return r


def _one(r):
    return np.ones_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class StateModelSpec:
    """State dynamics ``dF(R) = (theta + kappa E(R)) ds + sigma_R dB``.

    ``theta``, ``kappa``, ``sigma_R`` are constants or functions of ``s``.  A Brownian
    bridge pins ``R`` to ``target`` at ``end_time > T`` (a Hull-White special case with
    ``theta = target / (end_time - s)``, ``kappa = -1 / (end_time - s)``).  ``custom``
    needs ``F``, ``F_inv``, ``F_prime``, ``E`` and ``E_prime``.
    """

    kind: str
    theta: float | Callable = 0.0
    kappa: float | Callable = 0.0
    sigma_R: float | Callable = 1.0
    r0: float = 0.0
    target: float = 0.0
    end_time: float | None = None
    r_min: float = DEFAULT_R_MIN
    F: Callable | None = None
    F_inv: Callable | None = None
    F_prime: Callable | None = None
    E: Callable | None = None
    E_prime: Callable | None = None

    def mapping(self) -> tuple[Callable, Callable, Callable]:
        """``(F, F_inv, F_prime)``; the identity for every named kind."""
        if self.kind == "custom":
            return self.F, self.F_inv, self.F_prime
        return _identity, _identity, _one

    def coefficients(self) -> tuple[Callable, Callable, Callable]:
        if self.kind == "BrownianBridge":
            tau, a = float(self.end_time), float(self.target)
            return (lambda s: a / (tau - s)), (lambda s: -1.0 / (tau - s)), _as_fn(self.sigma_R)
        return _as_fn(self.theta), _as_fn(self.kappa), _as_fn(self.sigma_R)


def _sample_times(T: float) -> np.ndarray:
    return np.linspace(0.0, T, 101)


def _check_state_spec(spec: StateModelSpec, T: float) -> None:
    if spec.kind not in STATE_KINDS:
        raise InvalidStateModel(f"unknown state model kind {spec.kind!r} (known: {STATE_KINDS})")
    if spec.kind == "BrownianBridge":
        if spec.end_time is None or not spec.end_time > T:
            raise InvalidStateModel("a Brownian bridge needs end_time > T to stay non-singular on [0, T]")
    theta, kappa, sig = spec.coefficients()
    ss = _sample_times(T)
    th = np.array([theta(s) for s in ss])
    ka = np.array([kappa(s) for s in ss])
    sr = np.array([sig(s) for s in ss])
    if not (np.all(np.isfinite(th)) and np.all(np.isfinite(ka)) and np.all(np.isfinite(sr))):
        raise InvalidStateModel("state coefficients must be finite on [0, T]")
    if np.any(sr == 0.0):
        raise InvalidStateModel("sigma_R must not vanish")
    if spec.kind == "HoLee" and np.any(ka != 0.0):
        raise InvalidStateModel("Ho-Lee requires kappa = 0")
    if spec.kind in ("HullWhite", "OU-Vasicek", "BrownianBridge") and np.any(ka >= 0.0):
        raise InvalidStateModel(f"{spec.kind} requires kappa < 0")
    if spec.kind == "OU-Vasicek" and (callable(spec.theta) or callable(spec.kappa)):
        raise InvalidStateModel("OU-Vasicek has constant theta and kappa; use HullWhite for time-dependent ones")
    if spec.kind == "Bessel":
        if np.any(ka <= 0.0):
            raise InvalidStateModel("Bessel requires kappa > 0")
        if np.any(th != 0.0):
            raise InvalidStateModel("Bessel requires theta = 0")
        if not spec.r_min > 0.0:
            raise InvalidStateModel("Bessel needs a positive reflecting floor r_min")
        if not spec.r0 > 0.0:
            raise InvalidStateModel("Bessel needs a positive starting point r0")
    if spec.kind == "custom":
        missing = [n for n in ("F", "F_inv", "F_prime", "E", "E_prime") if getattr(spec, n) is None]
        if missing:
            raise InvalidStateModel(f"custom state model is missing {missing}")


def build_state_model(spec: StateModelSpec, T: float = 1.0) -> MarkovianModel:
    """Forward model for the simulated coordinate ``F(R)`` (equal to ``R`` for named kinds)."""
    _check_state_spec(spec, T)
    theta, kappa, sig = spec.coefficients()
    _, F_inv, F_prime = spec.mapping()

    if spec.kind == "HoLee":
        def drift(s, x):
            return np.full_like(x, theta(s))

        def jac(s, x):
            return np.zeros(x.shape + (1,))
    elif spec.kind in ("HullWhite", "OU-Vasicek", "BrownianBridge"):
        def drift(s, x):
            return theta(s) + kappa(s) * x

        def jac(s, x):
            return np.full(x.shape + (1,), kappa(s))
    elif spec.kind == "Bessel":
        def drift(s, x):
            return kappa(s) / x

        def jac(s, x):
            return (-kappa(s) / x**2)[:, :, None]
    else:
        E, E_prime = spec.E, spec.E_prime

        def drift(s, x):
            return theta(s) + kappa(s) * E(F_inv(x))

        def jac(s, x):
            r = F_inv(x)
            return (kappa(s) * E_prime(r) / F_prime(r))[:, :, None]

    def diffusion(s):
        return np.array([[float(sig(s))]])

    def zero_gen(t, s, x, y, z, yd, zd):
        return np.zeros_like(y)

    def zero_term(t, x):
        return np.zeros((x.shape[0], 1))

    return MarkovianModel(
        state_dim=1,
        sol_dim=1,
        noise_dim=1,
        drift=drift,
        drift_jacobian=jac,
        diffusion=diffusion,
        generator=zero_gen,
        terminal=zero_term,
        reflect_floor=spec.r_min if spec.kind == "Bessel" else None,
        name=f"state:{spec.kind}",
    )


@dataclass(frozen=True)
class MVModel:
    """Market and preference data.  ``beta(s, r)`` and ``sigma(s, r)`` act on arrays of ``r``."""

    gamma: float
    r_f: float
    rho_corr: float
    rho_fn: Callable[[float], float]
    rho_prime: Callable[[float], float]
    beta: Callable
    sigma: Callable
    state_model: StateModelSpec
    T: float
    sigma_floor: float = DEFAULT_SIGMA_FLOOR

    def m_drift(self, s: float, r: np.ndarray) -> np.ndarray:
        """Drift of ``R`` by Ito's rule (needs ``F''`` only for custom maps, by finite differences)."""
        spec = self.state_model
        theta, kappa, sig = spec.coefficients()
        r = np.asarray(r, dtype=float)
        if spec.kind == "HoLee":
            return np.full_like(r, theta(s))
        if spec.kind == "Bessel":
            return kappa(s) / r
        if spec.kind != "custom":
            return theta(s) + kappa(s) * r
        F, _, Fp = spec.mapping()
        h = 1e-5 * (1.0 + np.abs(r))
        Fpp = (Fp(r + h) - Fp(r - h)) / (2.0 * h)
        return (theta(s) + kappa(s) * spec.E(r)) / Fp(r) - 0.5 * sig(s) ** 2 * Fpp / Fp(r) ** 3

    def n_vol(self, s: float, r: np.ndarray) -> np.ndarray:
        """Volatility of ``R``: ``sigma_R(s) / F'(R)``."""
        _, _, sig = self.state_model.coefficients()
        _, _, Fp = self.state_model.mapping()
        return sig(s) / Fp(np.asarray(r, dtype=float))


def polynomial(coeffs) -> tuple[Callable, Callable]:
    """``sum_i c_i t^i`` and its derivative."""
    c = np.asarray(coeffs, dtype=float)
    p = np.polynomial.Polynomial(c)
    dp = p.deriv()
    return (lambda t: float(p(t))), (lambda t: float(dp(t)))


def affine_in_r(a: float, b: float = 0.0) -> Callable:
    """``(s, r) -> a + b r``."""
    a, b = float(a), float(b)

    def fn(s, r):
        return a + b * np.asarray(r, dtype=float)

    return fn


def validate_mv(mv: MVModel, seed: int = 0) -> None:
    """Static checks; sigma on actual paths is checked during the solve."""
    if not mv.gamma > 0:
        raise InvalidMVModel("risk aversion gamma must be positive")
    if not -1.0 <= mv.rho_corr <= 1.0:
        raise InvalidMVModel("correlation must lie in [-1, 1]")
    if not mv.T > 0:
        raise InvalidMVModel("horizon must be positive")
    if not mv.sigma_floor > 0:
        raise InvalidMVModel("sigma_floor must be positive")
    _check_state_spec(mv.state_model, mv.T)
    rng = np.random.default_rng(seed)
    h = 1e-6 * max(mv.T, 1.0)
    for t in rng.uniform(h, mv.T - h, size=10):
        fd = (mv.rho_fn(t + h) - mv.rho_fn(t - h)) / (2.0 * h)
        if not abs(fd - mv.rho_prime(t)) <= 1e-4:
            raise InvalidMVModel(
                f"rho_prime({t:.4g}) = {mv.rho_prime(t):.6g} disagrees with the finite difference {fd:.6g}"
            )


@dataclass
class MVSolution:
    grid: TriangularGrid
    ensemble: PathEnsemble
    basis: RegressionBasis
    options: dict
    R: np.ndarray  # (J, N+1) state values
    P: np.ndarray  # (nodes, K) on kept paths
    Q: np.ndarray  # (nodes, K)
    P_mean: np.ndarray  # (nodes,) over all paths
    P_std: np.ndarray
    Q_mean: np.ndarray
    Q_std: np.ndarray
    p: np.ndarray  # (N+1, J) diagonal P(s, s)
    q: np.ndarray  # (N+1, J) diagonal Q(s, s)
    M: np.ndarray  # (N+1, J)
    N_: np.ndarray  # (N+1, J)
    q_resvar: np.ndarray  # (N+1,) residual variance of the raw regressand behind q
    _fits: dict = field(default_factory=dict, repr=False)

    @property
    def n_paths(self) -> int:
        return self.M.shape[1]

    def p_node(self, m: int, n: int) -> np.ndarray:
        return self.P[node_index(m, n)]

    def q_node(self, m: int, n: int) -> np.ndarray:
        return self.Q[node_index(m, n)]

    def standard_error(self, name: str, n: int) -> float:
        """Standard error of the path mean of ``p``, ``q``, ``M`` or ``N`` at level ``n``."""
        arr = {"p": self.p, "q": self.q, "M": self.M, "N": self.N_}[name][n]
        return float(arr.std() / np.sqrt(arr.size))

    def regressed(self, n: int):
        """Projector at level ``n`` and expansion coefficients of ``(p, q, M)``."""
        hit = self._fits.get(n)
        if hit is None:
            proj = Projector(self.basis, self.ensemble.level(n))
            hit = (proj, proj.coefficients(np.stack([self.p[n], self.q[n], self.M[n]], axis=1)))
            self._fits[n] = hit
        return hit

    def q_standard_error(self, n: int, x: np.ndarray) -> np.ndarray:
        """Standard error of the regressed ``q`` at simulated-coordinate states ``x``."""
        proj, _ = self.regressed(n)
        return np.sqrt(self.q_resvar[n] * proj.leverage(x))


@dataclass(frozen=True)
class PolicyDecomposition:
    s: float
    r: float
    myopic: float
    hedging: float
    total: float
    hedging_se: float  # regression standard error of the hedging term at this state


def _coeffs(mv: MVModel, s: float, r: np.ndarray):
    beta = np.broadcast_to(np.asarray(mv.beta(s, r), dtype=float), r.shape)
    sigma = np.broadcast_to(np.asarray(mv.sigma(s, r), dtype=float), r.shape)
    if np.any(~(np.abs(sigma) >= mv.sigma_floor)):
        raise SigmaFloorBreach(f"|sigma(s={s:.4g}, R)| fell below the floor {mv.sigma_floor:g} on some path")
    n = np.broadcast_to(mv.n_vol(s, r), r.shape)
    g = mv.gamma
    return beta**2 / (g * sigma**2), beta * mv.rho_corr * n / (g * sigma), beta**2 / sigma**2


def _drive(c, p, q, M):
    cp, cq, cm = c
    return -(cp * p + cq * q + cm * M)


def simulate_state(mv: MVModel, grid: TriangularGrid, n_paths: int, seed: int, workers: int = 1) -> PathEnsemble:
    spec = mv.state_model
    F, _, _ = spec.mapping()
    model = build_state_model(spec, grid.T)
    return simulate_paths(model, 0.0, [float(F(np.asarray(spec.r0, dtype=float)))], grid, n_paths, seed, workers)


def solve_mv_system(
    mv: MVModel,
    grid: TriangularGrid,
    n_paths: int,
    seed: int,
    basis: RegressionBasis = RegressionBasis(),
    *,
    mode: str = "explicit-diagonal",
    sweeps: int = 3,
    theta: float = 1.0,
    implicit_y: bool = False,
    shifted: bool = False,
    keep_paths: int = DEFAULT_KEEP,
    workers: int = 1,
    ensemble: PathEnsemble | None = None,
) -> MVSolution:
    """Joint backward regression for the ``(P, Q)`` triangle and the ``(M, N)`` line.

    Both equations share the drive ``G``; ``mode``, ``sweeps``, ``theta`` and
    ``implicit_y`` have the same meaning as in :func:`volterra_kit.bsvie.solve_bsvie_mc`
    (``implicit_y`` re-evaluates the ``M`` argument at the current level).  With
    ``shifted=True`` the solver works with ``P - rho(t)``, whose dynamics and terminal
    value do not depend on ``t``, so one row serves the whole triangle and ``Q`` is
    identical across ``t``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if grid.T != mv.T:
        raise InvalidMVModel(f"grid horizon {grid.T} differs from the model horizon {mv.T}")
    validate_mv(mv)
    ens = simulate_state(mv, grid, n_paths, seed, workers) if ensemble is None else ensemble
    _, F_inv, _ = mv.state_model.mapping()
    N, dt, J = grid.N, grid.dt, ens.n_paths
    K = min(int(keep_paths), J)
    R = np.ascontiguousarray(F_inv(ens.paths[:, :, 0]))
    rho = np.array([mv.rho_fn(grid.time(m)) for m in range(N + 1)])

    nodes = grid.node_count
    P_keep = np.full((nodes, K), np.nan)
    Q_keep = np.full((nodes, K), np.nan)
    P_mean, P_std, Q_mean, Q_std = (np.full(nodes, np.nan) for _ in range(4))
    p = np.zeros((N + 1, J))
    q = np.zeros((N + 1, J))
    M = np.zeros((N + 1, J))
    Nn = np.zeros((N + 1, J))
    q_resvar = np.zeros(N + 1)

    def record(m, n, pv, qv):
        i = node_index(m, n)
        P_keep[i], Q_keep[i] = pv[:K], qv[:K]
        P_mean[i], P_std[i], Q_mean[i], Q_std[i] = pv.mean(), pv.std(), qv.mean(), qv.std()

    def rows_at(n):
        return [0] if shifted else list(range(n + 1))

    def offset(m):
        # value added to the stored row m to recover P(t_m, .)
        return rho[m] if shifted else 0.0

    # terminal level: P(t, T) = rho(t), Q(t, T) = 0
    Pnext = {m: np.full(J, 0.0 if shifted else rho[m]) for m in rows_at(N)}
    Qnext = {m: np.zeros(J) for m in rows_at(N)}
    for m in range(N + 1):
        record(m, N, np.full(J, rho[m]), np.zeros(J))
    p[N] = rho[N]
    Mnext = np.zeros(J)
    c_next = _coeffs(mv, grid.T, R[:, N])

    def diag_of(vals, n):
        return vals[0] + rho[n] if shifted else vals[n]

    def diag_q(qs, n):
        return qs[0] if shifted else qs[n]

    for n in range(N - 1, -1, -1):
        s = grid.time(n)
        x = ens.level(n)
        dw = ens.increments[:, n, :]
        proj = Projector(basis, x)
        c = _coeffs(mv, s, R[:, n])
        rows = rows_at(n)

        def cont(m, proj=proj, dw=dw):
            yhat, z = _continuation(proj, Pnext[m][:, None], dw, dt)
            return yhat[:, 0], z[:, 0, 0]

        conts = dict(zip(rows, map_ordered(cont, rows, workers)))
        mhat, nz = _continuation(proj, Mnext[:, None], dw, dt)
        mhat, nz = mhat[:, 0], nz[:, 0, 0]

        g_next = None
        if theta < 1.0:
            g_next = proj.fit(_drive(c_next, p[n + 1], q[n + 1], Mnext))

        if mode == "explicit-diagonal":
            pbar, qbar = proj.fit(p[n + 1]), proj.fit(q[n + 1])
        else:
            pbar, qbar = proj.fit(p[n + 1]), diag_q({m: v[1] for m, v in conts.items()}, n)
        m_arg = mhat
        n_sweeps = sweeps if mode == "picard-inner" else (2 if implicit_y else 1)
        for _ in range(n_sweeps):
            g = _drive(c, pbar, qbar, m_arg)
            if g_next is not None:
                g = theta * g + (1.0 - theta) * g_next
            Pcur = {m: conts[m][0] - dt * g for m in rows}
            Mcur = mhat - dt * g
            if mode == "picard-inner":
                pbar = diag_of(Pcur, n)
            if implicit_y:
                m_arg = Mcur

        for m in rows:
            if not (np.all(np.isfinite(Pcur[m])) and np.all(np.isfinite(conts[m][1]))):
                raise NonFiniteSolution(f"non-finite P/Q at node (m={m}, n={n})")
        if not np.all(np.isfinite(Mcur)):
            raise NonFiniteSolution(f"non-finite M at level n={n}")
        if shifted:
            for m in range(n + 1):
                record(m, n, Pcur[0] + rho[m], conts[0][1])
        else:
            for m in rows:
                record(m, n, Pcur[m], conts[m][1])
        p[n] = diag_of(Pcur, n)
        q[n] = diag_q({m: v[1] for m, v in conts.items()}, n)
        d = 0 if shifted else n
        raw = (Pnext[d] - conts[d][0]) * dw[:, 0] / dt
        q_resvar[n] = float(np.sum((raw - q[n]) ** 2)) / max(J - proj.n_terms, 1)
        M[n] = Mcur
        Nn[n] = nz
        Pnext = Pcur
        Mnext = Mcur
        c_next = c

    for a in (R, P_keep, Q_keep, P_mean, P_std, Q_mean, Q_std, p, q, M, Nn, q_resvar):
        a.flags.writeable = False
    options = {
        "mode": mode, "sweeps": sweeps, "theta": float(theta), "implicit_y": implicit_y,
        "shifted": shifted, "keep_paths": K,
    }
    return MVSolution(grid, ens, basis, options, R, P_keep, Q_keep, P_mean, P_std, Q_mean, Q_std, p, q, M, Nn, q_resvar)


def policy_terms(mv: MVModel, s: float, r, p, q, M):
    """Myopic and hedging demand from diagonal values; vectorized over states."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    beta = np.asarray(mv.beta(s, r), dtype=float)
    sigma = np.asarray(mv.sigma(s, r), dtype=float)
    n = mv.n_vol(s, r)
    disc = np.exp(mv.r_f * (mv.T - s))
    myopic = beta / (mv.gamma * sigma**2) * (p + mv.gamma * M) * disc
    hedge_coef = mv.rho_corr * n / (mv.gamma * sigma) * disc
    return myopic, hedge_coef * q, hedge_coef


def equilibrium_policy(
    solution: MVSolution, mv: MVModel, n: int, path: int | None = None, r: float | None = None
) -> PolicyDecomposition:
    """Policy at ``s_n`` along path ``path`` or at state ``r`` (regressed diagonals).

    Wealth is deliberately not an argument: the equilibrium policy does not depend on it.
    """
    if (path is None) == (r is None):
        raise ValueError("give exactly one of path or r")
    s = solution.grid.time(n)
    proj, coef = solution.regressed(n)
    F, _, _ = mv.state_model.mapping()
    if path is not None:
        rv = float(solution.R[path, n])
        pv, qv, mvv = solution.p[n, path], solution.q[n, path], solution.M[n, path]
    else:
        rv = float(r)
        pv, qv, mvv = proj.evaluate(coef, np.array([[float(F(np.asarray(rv)))]]))[0]
    xq = np.array([[float(F(np.asarray(rv)))]])
    myopic, hedging, hedge_coef = policy_terms(mv, s, rv, pv, qv, mvv)
    myopic, hedging = float(myopic[0]), float(hedging[0])
    se = abs(float(hedge_coef[0])) * float(solution.q_standard_error(n, xq)[0])
    return PolicyDecomposition(s=s, r=rv, myopic=myopic, hedging=hedging, total=myopic + hedging, hedging_se=se)


def _constant_coeffs(mv: MVModel) -> tuple[float, float]:
    probe = np.linspace(-3.0, 3.0, 13) + (mv.state_model.r0 if mv.state_model.kind == "Bessel" else 0.0)
    probe = np.abs(probe) + 1e-3 if mv.state_model.kind == "Bessel" else probe
    ss = np.linspace(0.0, mv.T, 11)
    b = np.array([np.broadcast_to(mv.beta(s, probe), probe.shape) for s in ss], dtype=float)
    sg = np.array([np.broadcast_to(mv.sigma(s, probe), probe.shape) for s in ss], dtype=float)
    if np.ptp(b) > 0 or np.ptp(sg) > 0:
        raise InvalidMVModel("the ODE oracle needs state- and time-independent beta and sigma")
    return float(b.flat[0]), float(sg.flat[0])


def constant_coefficient_oracle(mv: MVModel, steps: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """RK4 for ``p' = rho' - (th/gamma) p - th M``, ``M' = -(th/gamma) p - th M``, ``th = beta^2/sigma^2``.

    Integrated backward from ``p(T) = rho(T)``, ``M(T) = 0``.  Returns ``(s, p, M)`` on
    ``steps + 1`` equally spaced times.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    beta, sigma = _constant_coeffs(mv)
    th = beta**2 / sigma**2
    g = mv.gamma

    def rhs(s, y):
        pv, mv_ = y
        common = -(th / g) * pv - th * mv_
        return np.array([mv.rho_prime(s) + common, common])

    h = -mv.T / steps
    s_grid = np.linspace(0.0, mv.T, steps + 1)
    out = np.empty((steps + 1, 2))
    y = np.array([mv.rho_fn(mv.T), 0.0])
    out[steps] = y
    s = mv.T
    for i in range(steps, 0, -1):
        k1 = rhs(s, y)
        k2 = rhs(s + h / 2, y + h / 2 * k1)
        k3 = rhs(s + h / 2, y + h / 2 * k2)
        k4 = rhs(s + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s = mv.T * (i - 1) / steps
        out[i - 1] = y
    return s_grid, out[:, 0], out[:, 1]


def constant_mv(
    beta: float,
    sigma: float,
    gamma: float,
    rho_coeffs=(1.0,),
    r_f: float = 0.0,
    corr: float = 0.0,
    state: StateModelSpec | None = None,
    T: float = 1.0,
) -> MVModel:
    """Convenience constructor with constant ``beta``, ``sigma`` and polynomial ``rho``."""
    rho, drho = polynomial(rho_coeffs)
    state = StateModelSpec("HoLee", theta=0.0, sigma_R=0.2) if state is None else state
    return MVModel(
        gamma=gamma, r_f=r_f, rho_corr=corr, rho_fn=rho, rho_prime=drho,
        beta=affine_in_r(beta), sigma=affine_in_r(sigma), state_model=state, T=T,
    )
