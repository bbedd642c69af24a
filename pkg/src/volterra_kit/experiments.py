"""Experiment runners behind the command line: each writes CSV artifacts and returns a Report."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .bsvie import (
    estimate_bmo_norm,
    feynman_kac_check,
    picard_solve,
    reconstruct_diagonal,
    solve_bsvie_mc,
    solve_derivative_bsvie,
)
from .catalog import CatalogModel, build_catalog_model
from .config import ConvergenceSection, RunConfig
from .errors import ConfigError
from .forward import (
    PathEnsemble,
    bump_increment,
    draw_increments,
    malliavin_derivative_x,
    propagate,
    simulate_paths,
    tangent_process,
)
from .model import SpatialGrid, build_grid, node_index, validate_model
from .mv import (
    MVModel,
    StateModelSpec,
    affine_in_r,
    constant_coefficient_oracle,
    equilibrium_policy,
    polynomial,
    solve_mv_system,
    validate_mv,
)
from .pde import PDESolverConfig, solve_nonlocal_pde
from .regression import RegressionBasis

# rounding-level floor for "statistically zero" checks, relative to the solution scale
ZERO_FLOOR = 1e-12


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    rule: str


@dataclass
class Report:
    experiment: str
    source: str
    files: dict = field(default_factory=dict)  # file name -> sha256
    checks: list = field(default_factory=list)
    lines: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, value: float, tolerance: float, passed: bool, rule: str) -> None:
        self.checks.append(Check(name, float(value), float(tolerance), bool(passed), rule))

    def le(self, name: str, value: float, tolerance: float, rule: str = "value <= tolerance") -> None:
        self.add(name, value, tolerance, bool(value <= tolerance), rule)

    def summary(self) -> str:
        out = [f"experiment: {self.experiment}", f"config: {Path(self.source).name}", ""]
        out += self.lines
        if self.checks:
            out += ["", "checks:"]
            for c in self.checks:
                status = "PASS" if c.passed else "FAIL"
                out.append(f"  [{status}] {c.name} = {c.value:.6g} (tolerance {c.tolerance:.6g}; {c.rule})")
        out += ["", "artifacts:"] + [f"  {h}  {n}" for n, h in sorted(self.files.items())]
        out += ["", "overall: " + ("PASS" if self.passed else "FAIL")]
        return "\n".join(out) + "\n"

    def record(self, path: Path) -> None:
        self.files[path.name] = io.sha256(path)

    def write(self, out_dir: Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = "".join(f"{h}  {n}\n" for n, h in sorted(self.files.items()))
        (out_dir / "manifest.txt").write_text(manifest)
        (out_dir / "summary.txt").write_text(self.summary())


# ---------------------------------------------------------------------------
# shared builders


def catalog_model(cfg: RunConfig) -> CatalogModel:
    return build_catalog_model(cfg.model.name, cfg.model.params, cfg.grid.T)


def spatial_grid(cfg: RunConfig, cm: CatalogModel, M_x: int | None = None) -> SpatialGrid:
    M = cfg.space.M_x if M_x is None else M_x
    if cfg.space.x_lo is None:
        return cm.space(M)
    return SpatialGrid(cfg.space.x_lo, cfg.space.x_hi, M)


def basis_of(cfg: RunConfig) -> RegressionBasis:
    return RegressionBasis(cfg.monte_carlo.basis, cfg.monte_carlo.degree)


def pde_config(cfg: RunConfig) -> PDESolverConfig:
    s = cfg.solver
    return PDESolverConfig(s.scheme, s.boundary, s.cfl_safety, s.inner_sweeps)


def mv_model(cfg: RunConfig) -> MVModel:
    sec = cfg.mv
    st = sec.state_model
    spec = StateModelSpec(
        kind=st.kind, theta=st.theta, kappa=st.kappa, sigma_R=st.sigma_R, r0=st.r0,
        target=st.target, end_time=st.end_time, r_min=st.r_min,
    )
    rho, drho = polynomial(sec.rho)
    return MVModel(
        gamma=sec.gamma, r_f=sec.r_f, rho_corr=sec.corr, rho_fn=rho, rho_prime=drho,
        beta=affine_in_r(*sec.beta), sigma=affine_in_r(*sec.sigma), state_model=spec, T=cfg.grid.T,
    )


def _need(cfg: RunConfig, key: str, available: bool, why: str) -> None:
    if key in cfg.checks and not available:
        raise ConfigError(f"check '{key}' cannot be evaluated: {why}", field=f"checks.{key}")


def validate_config(cfg: RunConfig) -> list[str]:
    """Model-level checks without any solve; returns human-readable lines."""
    grid = build_grid(cfg.grid.T, cfg.grid.N)
    lines = [f"grid: T={grid.T:g}, N={grid.N}, nodes={grid.node_count}"]
    if cfg.experiment == "mv":
        mv = mv_model(cfg)
        validate_mv(mv)
        lines.append(f"mv model: state {mv.state_model.kind}, gamma={mv.gamma:g}, corr={mv.rho_corr:g}: ok")
        return lines
    cm = catalog_model(cfg)
    probes = np.linspace(cm.x0 - 2.0, cm.x0 + 2.0, 9)[:, None]
    rep = validate_model(cm.model, grid, probes)
    lines.append(f"model '{cm.name}': {', '.join(k for k, v in rep.checks.items() if v)} ok; "
                 f"min eigenvalue {rep.min_eigenvalue:.6g}")
    if cfg.experiment in ("pde", "feynman-kac") or (cfg.convergence and cfg.convergence.experiment == "pde"):
        sp = spatial_grid(cfg, cm)
        lines.append(f"spatial grid: [{sp.x_lo:.6g}, {sp.x_hi:.6g}], M_x={sp.M_x}")
    return lines


def _errors_vs_exact(cm: CatalogModel, sol, grid):
    K = sol.keep
    X = sol.ensemble.paths[:K, :, 0]
    sig = cm.sigma
    sy = sz = 0.0
    cnt = 0
    ny = nz = 0.0
    for m, n in grid.nodes():
        t, s = grid.time(m), grid.time(n)
        ey = sol.y(m, n)[:, 0] - cm.exact_u(t, s, X[:, n])
        ez = sol.z(m, n)[:, 0, 0] - cm.exact_ux(t, s, X[:, n]) * sig
        sy += float(ey @ ey)
        sz += float(ez @ ez)
        cnt += K
        ny = max(ny, float(np.sqrt(np.mean(ey**2))))
        nz = max(nz, float(np.sqrt(np.mean(ez**2))))
    return float(np.sqrt(sy / cnt)), float(np.sqrt(sz / cnt)), ny, nz


def _exact_bmo_profile(cm: CatalogModel, grid) -> np.ndarray | None:
    if cm.exact_ux is None:
        return None
    probe = np.linspace(cm.x_lo, cm.x_hi, 7)
    N, dt = grid.N, grid.dt
    z2 = np.full((N + 1, N + 1), np.nan)
    for m in range(N + 1):
        for n in range(m, N + 1):
            v = np.asarray(cm.exact_ux(grid.time(m), grid.time(n), probe), dtype=float) * cm.sigma
            if np.ptp(v) > 1e-12:
                return None
            z2[m, n] = v[0] ** 2
    prof = np.zeros(N + 1)
    for n in range(N):
        prof[n] = max(float(np.sum(z2[m, n:N]) * dt) for m in range(n + 1))
    return prof


# ---------------------------------------------------------------------------
# experiments


def run_pde(cfg: RunConfig, out: Path, workers: int = 1, **_) -> Report:
    rep = Report("pde", cfg.source)
    cm = catalog_model(cfg)
    grid = build_grid(cfg.grid.T, cfg.grid.N)
    space = spatial_grid(cfg, cm)
    fld = solve_nonlocal_pde(cm.model, grid, space, pde_config(cfg), workers)
    rep.record(io.export_field(out / "field.csv", fld))
    rep.lines.append(f"model {cm.name}; N={grid.N}, M_x={space.M_x}, x in [{space.x_lo:.6g}, {space.x_hi:.6g}]")
    have = cm.exact_u is not None
    _need(cfg, "max_error", have, "model has no closed-form solution")
    _need(cfg, "l2_error", have, "model has no closed-form solution")
    if have:
        mx, l2 = field_errors(cm, fld)
        rep.lines.append(f"max |u - u_exact| = {mx:.6e}; rms = {l2:.6e}")
        if "max_error" in cfg.checks:
            rep.le("max_error", mx, cfg.checks["max_error"])
        if "l2_error" in cfg.checks:
            rep.le("l2_error", l2, cfg.checks["l2_error"])
    return rep


def field_errors(cm: CatalogModel, fld) -> tuple[float, float]:
    g, x = fld.grid, fld.space.points
    mx = 0.0
    ss = 0.0
    for m, n in g.nodes():
        e = fld.row(m, n) - cm.exact_u(g.time(m), g.time(n), x)
        mx = max(mx, float(np.max(np.abs(e))))
        ss += float(e @ e)
    return mx, float(np.sqrt(ss / (g.node_count * x.size)))


def _solve_mc(cfg: RunConfig, cm: CatalogModel, grid, ens, workers: int):
    s = cfg.solver
    kw = dict(theta=s.theta, implicit_y=s.implicit_y, keep_paths=cfg.monte_carlo.keep_paths, workers=workers)
    if s.picard:
        return picard_solve(cm.model, grid, ens, basis_of(cfg), s.max_iters, s.tol, **kw)
    return solve_bsvie_mc(cm.model, grid, ens, basis_of(cfg), s.mode, sweeps=s.sweeps, **kw), None


def run_bsvie(cfg: RunConfig, out: Path, workers: int = 1, dump_paths: int | None = None) -> Report:
    rep = Report("bsvie", cfg.source)
    cm = catalog_model(cfg)
    grid = build_grid(cfg.grid.T, cfg.grid.N)
    mc = cfg.monte_carlo
    ens = simulate_paths(cm.model, 0.0, [cm.x0], grid, mc.J, mc.seed, workers)
    if dump_paths:
        rep.record(io.export_ensemble(out / "ensemble.csv", ens, dump_paths))
    sol, history = _solve_mc(cfg, cm, grid, ens, workers)
    rep.record(io.export_solution(out / "solution.csv", sol))
    s = cfg.solver
    rep.lines.append(
        f"model {cm.name}; N={grid.N}, J={mc.J}, basis {mc.basis} degree {mc.degree}; "
        + (f"picard (tol {s.tol:g})" if s.picard else f"mode {s.mode}, theta {s.theta:g}, implicit_y {s.implicit_y}")
    )

    have = cm.exact_u is not None
    for key in ("rms_y", "rms_z", "max_node_rms_y", "max_node_rms_z"):
        _need(cfg, key, have, "model has no closed-form solution")
    if have:
        ry, rz, ny, nz = _errors_vs_exact(cm, sol, grid)
        rep.lines.append(f"vs closed form: rms Y {ry:.4e}, rms Z {rz:.4e}, worst node rms Y {ny:.4e}, Z {nz:.4e}")
        for key, val in (("rms_y", ry), ("rms_z", rz), ("max_node_rms_y", ny), ("max_node_rms_z", nz)):
            if key in cfg.checks:
                rep.le(key, val, cfg.checks[key])

    if history is not None:
        rep.record(io.write_csv(out / "picard.csv", ["iteration", "sup_difference"],
                                [(i + 1, h) for i, h in enumerate(history)]))
        rep.lines.append("picard history: " + ", ".join(f"{h:.3e}" for h in history))
        if "picard_iters" in cfg.checks:
            rep.le("picard_iters", len(history), cfg.checks["picard_iters"], "iterations to converge <= tolerance")
        if "picard_monotone" in cfg.checks:
            tail = history[1:]
            ok = all(b < a for a, b in zip(tail, tail[1:]))
            rep.add("picard_monotone", float(ok), 1.0, ok, "sup-differences strictly decrease from iteration 2")
    else:
        _need(cfg, "picard_iters", False, "solver.picard is false")
        _need(cfg, "picard_monotone", False, "solver.picard is false")

    deriv = None
    if s.derivative:
        deriv = solve_derivative_bsvie(cm.model, sol, workers=workers)
        rep.record(io.export_solution(out / "derivative.csv", deriv))
        yr, zr = reconstruct_diagonal(sol, deriv)
        K = sol.keep
        rel_y = float(np.max(np.abs(yr - sol.Yd[:, :K]) / (1.0 + np.abs(sol.Yd[:, :K]))))
        rel_z = float(np.max(np.abs(zr - sol.Zd[:, :K]) / (1.0 + np.abs(sol.Zd[:, :K]))))
        rep.lines.append(f"diagonal reconstruction: max rel deviation Y {rel_y:.4e}, Z {rel_z:.4e}")
        for key, val in (("recon_rel_y", rel_y), ("recon_rel_z", rel_z)):
            if key in cfg.checks:
                rep.le(key, val, cfg.checks[key], "max |rec - direct| / (1 + |direct|) <= tolerance")
    else:
        _need(cfg, "recon_rel_y", False, "solver.derivative is false")
        _need(cfg, "recon_rel_z", False, "solver.derivative is false")

    if s.bmo is not None:
        target = deriv if s.bmo == "Z_t" else sol
        if target is None:
            raise ConfigError("bmo 'Z_t' needs solver.derivative = true", field="solver.bmo")
        est = estimate_bmo_norm(target, s.bmo)
        exact = _exact_bmo_profile(cm, grid) if s.bmo == "Z" else None
        rows = [(n, grid.time(n), est.profile[n], np.nan if exact is None else exact[n]) for n in range(grid.N + 1)]
        rep.record(io.write_csv(out / "bmo.csv", ["n", "s", "profile", "exact"], rows))
        rep.lines.append(f"BMO estimate ({s.bmo}): norm {est.norm:.6g}")
        _need(cfg, "bmo_rel", exact is not None, "no deterministic closed-form Z for this model")
        if exact is not None:
            rel = float(np.max(np.abs(est.profile - exact)) / np.max(exact))
            rep.lines.append(f"BMO profile vs closed form: sup-norm relative error {rel:.4e}")
            if "bmo_rel" in cfg.checks:
                rep.le("bmo_rel", rel, cfg.checks["bmo_rel"], "max_n |e[n] - e*[n]| / max_n e*[n] <= tolerance")
    else:
        _need(cfg, "bmo_rel", False, "solver.bmo is not set")
    return rep


def run_feynman_kac(cfg: RunConfig, out: Path, workers: int = 1, dump_paths: int | None = None) -> Report:
    rep = Report("feynman-kac", cfg.source)
    cm = catalog_model(cfg)
    grid = build_grid(cfg.grid.T, cfg.grid.N)
    space = spatial_grid(cfg, cm)
    fld = solve_nonlocal_pde(cm.model, grid, space, pde_config(cfg), workers)
    mc = cfg.monte_carlo
    ens = simulate_paths(cm.model, 0.0, [cm.x0], grid, mc.J, mc.seed, workers)
    if dump_paths:
        rep.record(io.export_ensemble(out / "ensemble.csv", ens, dump_paths))
    sol, _ = _solve_mc(cfg, cm, grid, ens, workers)
    cv = feynman_kac_check(cm.model, fld, sol, space)
    rep.record(io.export_field(out / "field.csv", fld))
    rep.record(io.export_solution(out / "solution.csv", sol))
    rep.record(io.export_cross_validation(out / "cross_validation.csv", cv))
    rep.lines.append(f"model {cm.name}; N={grid.N}, J={mc.J}, M_x={space.M_x}, basis {mc.basis} degree {mc.degree}")
    rep.lines += cv.summary().splitlines()
    for key, val in (("rms_y", cv.rms_y), ("rms_z", cv.rms_z), ("rms_yd", cv.rms_yd), ("rms_zd", cv.rms_zd)):
        if key in cfg.checks:
            rep.le(key, val, cfg.checks[key])
    return rep


def run_mv(cfg: RunConfig, out: Path, workers: int = 1, dump_paths: int | None = None) -> Report:
    rep = Report("mv", cfg.source)
    mv = mv_model(cfg)
    grid = build_grid(cfg.grid.T, cfg.grid.N)
    mc, s = cfg.monte_carlo, cfg.solver
    sol = solve_mv_system(
        mv, grid, mc.J, mc.seed, basis_of(cfg), mode=s.mode, sweeps=s.sweeps, theta=s.theta,
        implicit_y=s.implicit_y, shifted=s.shifted, keep_paths=mc.keep_paths, workers=workers,
    )
    if dump_paths:
        rep.record(io.export_ensemble(out / "ensemble.csv", sol.ensemble, dump_paths))
    N, J = grid.N, sol.n_paths
    rep.lines.append(
        f"state {mv.state_model.kind}; gamma={mv.gamma:g}, corr={mv.rho_corr:g}, r_f={mv.r_f:g}; "
        f"N={N}, J={J}; mode {s.mode}, theta {s.theta:g}"
    )

    def stats(a):
        return a.mean(axis=1), a.std(axis=1)

    (pm, ps), (qm, qs), (mm, ms), (nm, ns) = stats(sol.p), stats(sol.q), stats(sol.M), stats(sol.N_)
    rows = [(n, grid.time(n), pm[n], ps[n], qm[n], qs[n], mm[n], ms[n], nm[n], ns[n]) for n in range(N + 1)]
    rep.record(io.write_csv(out / "mv_levels.csv",
                            ["n", "s", "p_mean", "p_std", "q_mean", "q_std", "M_mean", "M_std", "N_mean", "N_std"], rows))
    tri = [(m, n, grid.time(m), grid.time(n), sol.P_mean[node_index(m, n)], sol.P_std[node_index(m, n)],
            sol.Q_mean[node_index(m, n)], sol.Q_std[node_index(m, n)]) for m, n in grid.nodes()]
    rep.record(io.write_csv(out / "mv_triangle.csv", ["m", "n", "t", "s", "P_mean", "P_std", "Q_mean", "Q_std"], tri))

    constant = cfg.mv.beta[1] == 0.0 and cfg.mv.sigma[1] == 0.0
    for key in ("p0_rel", "M0_rel"):
        _need(cfg, key, constant, "the ODE oracle needs constant beta and sigma")
    if constant:
        steps = max(cfg.mv.oracle_steps, 10 * N)
        o_s, o_p, o_M = constant_coefficient_oracle(mv, steps)
        stride = steps // N
        orows = [(n, grid.time(n), pm[n], o_p[n * stride], mm[n], o_M[n * stride]) for n in range(N + 1)] \
            if steps % N == 0 else []
        if orows:
            rep.record(io.write_csv(out / "mv_oracle.csv", ["n", "s", "p_mc", "p_oracle", "M_mc", "M_oracle"], orows))
        p_rel = abs(pm[0] - o_p[0]) / abs(o_p[0])
        m_rel = abs(mm[0] - o_M[0]) / abs(o_M[0]) if o_M[0] != 0 else abs(mm[0])
        rep.lines.append(f"RK4 oracle ({steps} steps): p(0) = {o_p[0]:.10g}, M(0) = {o_M[0]:.10g}")
        rep.lines.append(f"Monte Carlo:         p(0) = {pm[0]:.10g}, M(0) = {mm[0]:.10g}")
        if "p0_rel" in cfg.checks:
            rep.le("p0_rel", p_rel, cfg.checks["p0_rel"], "|p_mc(0) - p_oracle(0)| / |p_oracle(0)| <= tolerance")
        if "M0_rel" in cfg.checks:
            rep.le("M0_rel", m_rel, cfg.checks["M0_rel"], "|M_mc(0) - M_oracle(0)| / |M_oracle(0)| <= tolerance")

    if "qn_zero_se" in cfg.checks:
        k = cfg.checks["qn_zero_se"]
        floor = ZERO_FLOOR * max(1.0, float(np.max(np.abs(sol.P_mean))))
        worst = 0.0
        for i in range(grid.node_count):
            worst = max(worst, abs(sol.Q_mean[i]) / (sol.Q_std[i] / np.sqrt(J) + floor))
        for n in range(N):
            worst = max(worst, abs(nm[n]) / (ns[n] / np.sqrt(J) + floor))
        rep.lines.append(f"Q, N: worst |mean| / (standard error + {floor:.1e}) = {worst:.4g}")
        rep.le("qn_zero_se", worst, k, "max over nodes of |mean| / (se + rounding floor) <= tolerance")

    prow = []
    worst_h = 0.0
    for n in range(N):
        for qq in cfg.mv.quantiles:
            r = float(np.quantile(sol.R[:, n], qq))
            pol = equilibrium_policy(sol, mv, n, r=r)
            prow.append((n, grid.time(n), r, pol.myopic, pol.hedging, pol.total))
            floor = ZERO_FLOOR * max(1.0, abs(pol.myopic))
            worst_h = max(worst_h, abs(pol.hedging) / (pol.hedging_se + floor))
    rep.record(io.export_policy(out / "policy.csv", prow))
    rep.lines.append(f"policy reported at state quantiles {list(cfg.mv.quantiles)} (r_quantile holds the state value)")
    pol0 = equilibrium_policy(sol, mv, 0, r=float(sol.R[0, 0]))
    rep.lines.append(f"policy at s=0: myopic {pol0.myopic:.6g}, hedging {pol0.hedging:.6g}, total {pol0.total:.6g}")
    if "hedging_zero_se" in cfg.checks:
        rep.lines.append(f"hedging: worst |value| / (standard error + floor) = {worst_h:.4g}")
        rep.le("hedging_zero_se", worst_h, cfg.checks["hedging_zero_se"],
               "max over levels and quantiles of |hedging| / (se + rounding floor) <= tolerance")
    return rep


def run_malliavin(cfg: RunConfig, out: Path, workers: int = 1, dump_paths: int | None = None) -> Report:
    """Brownian-bump finite differences against the tangent-process formula."""
    rep = Report("malliavin", cfg.source)
    cm = catalog_model(cfg)
    grid = build_grid(cfg.grid.T, cfg.grid.N)
    sec = cfg.malliavin
    ens = simulate_paths(cm.model, 0.0, [cm.x0], grid, sec.J, cfg.monte_carlo.seed, workers)
    if dump_paths:
        rep.record(io.export_ensemble(out / "ensemble.csv", ens, dump_paths))
    tan = tangent_process(cm.model, ens)
    rng = np.random.default_rng(cfg.monte_carlo.seed)
    rows = []
    worst = 0.0
    zero_ok = True
    for _ in range(sec.pairs):
        a, b = sorted(rng.choice(grid.N + 1, size=2, replace=False))
        th, s = int(a), int(b)
        formula = malliavin_derivative_x(cm.model, ens, th, s, tan)[:, 0, 0]
        bumped = bump_increment(cm.model, ens, th, sec.eps)
        fd = (bumped[:, s, 0] - ens.paths[:, s, 0]) / sec.eps
        rel = float(np.max(np.abs(fd - formula) / np.abs(formula)))
        worst = max(worst, rel)
        # reversed ordering: the later increment cannot move the earlier state
        later = (bumped[:, th, 0] - ens.paths[:, th, 0]) / sec.eps
        zero_ok &= bool(np.all(malliavin_derivative_x(cm.model, ens, s, th, tan) == 0.0) and np.all(later == 0.0))
        rows.append((th, s, grid.time(th), grid.time(s), rel, formula.mean(), fd.mean()))
    rep.record(io.write_csv(out / "malliavin.csv",
                            ["theta_index", "s_index", "theta", "s", "max_rel_error", "formula_mean", "bump_mean"], rows))
    tol = max(cfg.checks.get("rel_tol", 0.03), sec.eps + grid.dt)
    rep.lines.append(f"model {cm.name}; N={grid.N}, J={sec.J}, {sec.pairs} (theta, s) pairs, eps={sec.eps:g}")
    rep.lines.append(f"worst relative deviation {worst:.4e}; adaptedness zeros exact: {zero_ok}")
    if "rel_tol" in cfg.checks:
        rep.le("rel_tol", worst, tol, "max relative deviation <= max(rel_tol, eps + dt)")
        rep.add("adapted_zero", float(zero_ok), 1.0, zero_ok, "D_theta X(s) = 0 exactly for theta > s")
    return rep


# ---------------------------------------------------------------------------
# convergence


def _local_orders(errs, dts):
    out = [np.nan]
    for i in range(1, len(errs)):
        if errs[i] > 0 and errs[i - 1] > 0:
            out.append(np.log(errs[i - 1] / errs[i]) / np.log(dts[i - 1] / dts[i]))
        else:
            out.append(np.nan)
    return out


def _refined_ensemble(cm: CatalogModel, grid_f, dW_f: np.ndarray, N: int, J: int, T: float) -> PathEnsemble:
    r = grid_f.N // N
    grid = build_grid(T, N)
    dW = dW_f[:J].reshape(J, N, r, -1).sum(axis=2)
    X = propagate(cm.model, grid, 0, [cm.x0], dW)
    X.flags.writeable = False
    dW.flags.writeable = False
    return PathEnsemble(0.0, np.array([cm.x0]), X, dW, -1, grid)


def convergence_study(cfg: RunConfig, levels=None, out: Path = Path("out"), workers: int = 1, **_) -> Report:
    conv = cfg.convergence or ConvergenceSection(experiment=cfg.experiment if cfg.experiment in ("pde", "bsvie") else "pde",
                                                 quantity="u" if cfg.experiment != "bsvie" else "Yd")
    if cfg.experiment not in ("pde", "bsvie", "convergence"):
        raise ConfigError(f"convergence studies support pde and bsvie experiments, not '{cfg.experiment}'",
                          field="experiment")
    if levels is not None:
        conv = dataclasses.replace(conv, levels=tuple(levels))
    levels = conv.levels
    if len(levels) < 3 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("need at least 3 strictly increasing refinement levels", field="convergence.levels")
    rep = Report("convergence", cfg.source)
    cm = catalog_model(cfg)
    T = cfg.grid.T
    dts = [T / N for N in levels]
    rows = []
    if conv.experiment == "pde":
        if cm.exact_u is None:
            raise ConfigError("PDE convergence needs a model with a closed-form solution", field="model.name")
        errs_max, errs_l2, mxs = [], [], []
        for N in levels:
            M_x = max(2, int(round(cfg.space.M_x * np.sqrt(N / levels[0]))))
            fld = solve_nonlocal_pde(cm.model, build_grid(T, N), spatial_grid(cfg, cm, M_x), pde_config(cfg), workers)
            mx, l2 = field_errors(cm, fld)
            errs_max.append(mx)
            errs_l2.append(l2)
            mxs.append(M_x)
        primary = errs_max
        orders = _local_orders(primary, dts)
        rows = [(N, M, a, b, o) for N, M, a, b, o in zip(levels, mxs, errs_max, errs_l2, orders)]
        label = "max_error"
    else:
        if any(levels[-1] % N for N in levels):
            raise ConfigError("Monte Carlo refinement needs every level to divide the finest one",
                              field="convergence.levels")
        J0 = cfg.monte_carlo.J
        Js = [int(round(J0 * (N / levels[0]) ** 2)) for N in levels]
        grid_f = build_grid(T, levels[-1])
        dW_f = draw_increments(Js[-1], grid_f, cm.model.noise_dim, cfg.monte_carlo.seed, workers)
        qty = conv.quantity
        sols = []
        for N, J in zip(levels, Js):
            grid = build_grid(T, N)
            ens = _refined_ensemble(cm, grid_f, dW_f, N, J, T)
            sol, _ = _solve_mc(cfg, cm, grid, ens, workers)
            sols.append(sol)
        errs_max, errs_l2 = [], []
        if conv.reference == "exact":
            if cm.exact_u is None:
                raise ConfigError("reference 'exact' needs a closed-form solution; use 'self'",
                                  field="convergence.reference")
            for sol in sols:
                a, b = _mc_quantity_error(cm, sol, qty)
                errs_max.append(a)
                errs_l2.append(b)
        else:
            for coarse, fine in zip(sols, sols[1:]):
                a, b = _self_difference(coarse, fine, qty)
                errs_max.append(a)
                errs_l2.append(b)
            errs_max.append(np.nan)
            errs_l2.append(np.nan)
        primary = errs_l2
        orders = _local_orders(primary, dts)
        rows = [(N, 0, a, b, o) for N, a, b, o in zip(levels, errs_max, errs_l2, orders)]
        label = "l2_error"
        rep.lines.append("paths per level: " + ", ".join(str(J) for J in Js) + " (J proportional to N^2, shared noise)")
    rep.record(io.export_convergence(out / "convergence.csv", rows))
    finite = [(d, e) for d, e in zip(dts, primary) if np.isfinite(e) and e > 0]
    slope = float(np.polyfit(np.log([d for d, _ in finite]), np.log([e for _, e in finite]), 1)[0]) \
        if len(finite) >= 2 else float("nan")
    rep.lines.append(f"{conv.experiment} convergence of '{conv.quantity}' ({conv.reference} reference), levels {list(levels)}")
    rep.lines.append(f"{label} by level: " + ", ".join(f"{e:.4e}" for e in primary))
    rep.lines.append(f"observed order (slope of log {label} vs log dt): {slope:.4f}")
    if "min_order" in cfg.checks:
        rep.add("min_order", slope, cfg.checks["min_order"], bool(slope >= cfg.checks["min_order"]),
                "observed order >= tolerance")
    if "monotone" in cfg.checks:
        ok = all(b < a for a, b in zip(primary, primary[1:]))
        rep.add("monotone", float(ok), 1.0, ok, f"{label} strictly decreases across levels")
    if "self_shrink" in cfg.checks:
        diffs = [e for e in primary if np.isfinite(e)]
        ok = len(diffs) >= 2 and all(b < a for a, b in zip(diffs, diffs[1:]))
        rep.add("self_shrink", float(ok), 1.0, ok, "coarse-vs-fine differences shrink across levels")
    return rep


def _mc_quantity_error(cm: CatalogModel, sol, qty: str) -> tuple[float, float]:
    g = sol.grid
    K = sol.keep
    X = sol.ensemble.paths[:K, :, 0]
    errs = []
    for n in range(g.N + 1):
        s = g.time(n)
        if qty == "Yd":
            e = sol.Yd[n, :K, 0] - cm.exact_u(s, s, X[:, n])
        elif qty == "Zd":
            e = sol.Zd[n, :K, 0, 0] - cm.exact_ux(s, s, X[:, n]) * cm.sigma
        else:
            e = sol.y(0, n)[:, 0] - cm.exact_u(0.0, s, X[:, n])
        errs.append(e)
    e = np.concatenate(errs)
    return float(np.max(np.abs(e))), float(np.sqrt(np.mean(e**2)))


def _self_difference(coarse, fine, qty: str) -> tuple[float, float]:
    r = fine.grid.N // coarse.grid.N
    K = min(coarse.keep, fine.keep)
    diffs = []
    for n in range(coarse.grid.N + 1):
        if qty == "Yd":
            a, b = coarse.Yd[n, :K, 0], fine.Yd[n * r, :K, 0]
        elif qty == "Zd":
            a, b = coarse.Zd[n, :K, 0, 0], fine.Zd[n * r, :K, 0, 0]
        else:
            a, b = coarse.y(0, n)[:K, 0], fine.y(0, n * r)[:K, 0]
        diffs.append(a - b)
    e = np.concatenate(diffs)
    return float(np.max(np.abs(e))), float(np.sqrt(np.mean(e**2)))


RUNNERS = {
    "pde": run_pde,
    "bsvie": run_bsvie,
    "feynman-kac": run_feynman_kac,
    "mv": run_mv,
    "malliavin": run_malliavin,
    "convergence": convergence_study,
}


def run(cfg: RunConfig, out: Path, workers: int = 1, dump_paths: int | None = None) -> Report:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    validate_config(cfg)
    rep = RUNNERS[cfg.experiment](cfg, out=out, workers=workers, dump_paths=dump_paths)
    rep.write(out)
    return rep
