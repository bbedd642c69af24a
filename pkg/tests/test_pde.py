from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
import sympy as sp

from volterra_kit.catalog import MANUFACTURED_COEFFS, build_catalog_model
from volterra_kit.errors import CFLViolation, DimensionMismatch, GridMismatch
from volterra_kit.model import SpatialGrid, build_grid
from volterra_kit.pde import (
    PDESolverConfig,
    TwoTimeField,
    check_cfl,
    diagonal_slice,
    gradient_x,
    interpolate,
    solve_local_pde,
    solve_nonlocal_pde,
)


def _errors(cm, fld):
    x = fld.space.points
    return max(np.abs(fld.row(m, n) - cm.exact_u(fld.grid.time(m), fld.grid.time(n), x)).max()
               for m, n in fld.grid.nodes())


@pytest.mark.parametrize("scheme", ["explicit", "semi-implicit-diffusion"])
def test_linear_terminal_is_exact(scheme):
    cm = build_catalog_model("martingale", {}, 1.0)
    grid = build_grid(1.0, 50)
    space = cm.space(20 if scheme == "explicit" else 200)
    fld = solve_nonlocal_pde(cm.model, grid, space, PDESolverConfig(scheme=scheme))
    assert _errors(cm, fld) <= 1e-12


def test_quadratic_terminal_heat_kernel_moment():
    cm = build_catalog_model("quadratic", {}, 1.0)
    grid = build_grid(1.0, 50)
    space = cm.space(200)
    fld = solve_nonlocal_pde(cm.model, grid, space)
    x = space.points
    inner = np.abs(x) <= 3.0
    err = max(np.abs(fld.row(m, n) - (x**2 + 1.0 - grid.time(n)))[inner].max() for m, n in grid.nodes())
    assert err <= grid.dt


def test_manufactured_source_matches_symbolic_derivation():
    t, s, x, y, z, yd, zd = sp.symbols("t s x y z yd zd")
    c = MANUFACTURED_COEFFS
    u = (1 + t) * sp.exp(-s) * sp.sin(x)
    ud = u.subs(t, s)
    # b = 0, sigma = 1: the generator must equal u_s + u_xx / 2 at the exact solution
    source = sp.diff(u, s) + sp.diff(u, x, 2) / 2 - (
        c["c_y"] * u + c["c_z"] * sp.diff(u, x) + c["c_yd"] * ud + c["c_zd"] * sp.diff(ud, x))
    g = source + c["c_y"] * y + c["c_z"] * z + c["c_yd"] * yd + c["c_zd"] * zd
    g_fn = sp.lambdify((t, s, x, y, z, yd, zd), g, "numpy")
    gt_fn = sp.lambdify((t, s, x, y, z, yd, zd), sp.diff(g, t), "numpy")

    model = build_catalog_model("manufactured", {}, 1.0).model
    rng = np.random.default_rng(0)
    P = 40
    args = [rng.uniform(0, 1, P), rng.uniform(0, 1, P), rng.uniform(-6, 6, P)] + [rng.normal(size=P) for _ in range(4)]
    tt, ss, xx, yy, zz, yyd, zzd = args
    col = lambda v: v[:, None]
    box = lambda v: v[:, None, None]
    got = model.generator(tt, ss, col(xx), col(yy), box(zz), col(yyd), box(zzd))[:, 0]
    np.testing.assert_allclose(got, g_fn(*args), atol=1e-12)
    got_t = model.generator_t(tt, ss, col(xx), col(yy), box(zz), col(yyd), box(zzd))[:, 0]
    np.testing.assert_allclose(got_t, gt_fn(*args), atol=1e-12)


def test_manufactured_first_order_in_time():
    cm = build_catalog_model("manufactured", {}, 1.0)
    errs = []
    for N, M in [(25, 40), (50, 57), (100, 80)]:
        errs.append(_errors(cm, solve_nonlocal_pde(cm.model, build_grid(1.0, N), cm.space(M))))
    order = np.polyfit(np.log([1 / 25, 1 / 50, 1 / 100]), np.log(errs), 1)[0]
    assert errs[0] > errs[1] > errs[2]
    assert order >= 0.8


def test_inner_sweeps_and_workers_do_not_break_accuracy():
    cm = build_catalog_model("manufactured", {}, 1.0)
    grid, space = build_grid(1.0, 50), cm.space(57)
    base = solve_nonlocal_pde(cm.model, grid, space)
    threaded = solve_nonlocal_pde(cm.model, grid, space, workers=4)
    assert np.array_equal(base.values, threaded.values)
    swept = solve_nonlocal_pde(cm.model, grid, space, PDESolverConfig(inner_sweeps=2))
    assert _errors(cm, swept) <= 0.05


def test_explicit_scheme_enforces_cfl():
    cm = build_catalog_model("martingale", {}, 1.0)
    with pytest.raises(CFLViolation):
        check_cfl(cm.model, build_grid(1.0, 10), cm.space(200), PDESolverConfig(scheme="explicit"))
    assert check_cfl(cm.model, build_grid(1.0, 10), cm.space(200), PDESolverConfig()) > 1.0


def test_local_solver_agrees_when_diagonal_unused():
    cm = build_catalog_model("quadratic", {}, 1.0)
    grid, space = build_grid(1.0, 20), cm.space(100)
    fld = solve_nonlocal_pde(cm.model, grid, space)
    loc = solve_local_pde(cm.model, grid, space, 5)
    for n in range(5, 21):
        np.testing.assert_allclose(loc[n], fld.row(5, n), atol=1e-13)
    assert np.all(np.isnan(loc[:5]))


def test_diagonal_slice_of_martingale():
    cm = build_catalog_model("martingale", {}, 1.0)
    grid, space = build_grid(1.0, 10), cm.space(50)
    v = diagonal_slice(solve_nonlocal_pde(cm.model, grid, space))
    np.testing.assert_allclose(v, np.broadcast_to(space.points, v.shape), atol=1e-12)


def test_diagonal_slice_of_t_linear():
    cm = build_catalog_model("t_linear", {}, 1.0)
    grid, space = build_grid(1.0, 10), cm.space(50)
    v = diagonal_slice(solve_nonlocal_pde(cm.model, grid, space))
    np.testing.assert_allclose(v, grid.times[:, None] * space.points[None, :], atol=1e-12)


def test_single_step_triangle():
    cm = build_catalog_model("t_linear", {}, 1.0)
    grid, space = build_grid(1.0, 1), cm.space(10)
    v = diagonal_slice(solve_nonlocal_pde(cm.model, grid, space))
    assert v.shape == (2, 11)
    np.testing.assert_allclose(v[1], 1.0 * space.points)


def _field(fn, space, N=2):
    grid = build_grid(1.0, N)
    vals = np.tile(fn(space.points), (grid.node_count, 1))
    return TwoTimeField(vals, grid, space)


def test_gradient_exact_on_quadratics_and_constants():
    space = SpatialGrid(-2.0, 2.0, 40)
    x = space.points
    np.testing.assert_allclose(gradient_x(_field(lambda x: x**2, space)).row(0, 1), 2 * x, atol=1e-12)
    assert np.all(gradient_x(_field(lambda x: 3.0 + 0 * x, space)).values == 0.0)


def test_gradient_of_sine_within_taylor_bound():
    space = SpatialGrid(-3.0, 3.0, 60)
    x = space.points
    du = gradient_x(_field(np.sin, space)).row(1, 2)
    assert np.abs(du - np.cos(x))[1:-1].max() <= space.dx**2 / 6


def test_gradient_rejects_foreign_space():
    fld = _field(np.sin, SpatialGrid(-3.0, 3.0, 60))
    with pytest.raises(GridMismatch):
        gradient_x(fld, SpatialGrid(-3.0, 3.0, 61))


def test_interpolate_linear_field():
    space = SpatialGrid(-1.0, 1.0, 8)
    fld = _field(lambda x: 2 * x + 1, space)
    np.testing.assert_allclose(interpolate(fld, 0, 2, np.array([-0.33, 0.71])), [0.34, 2.42])


def test_two_dimensional_model_rejected():
    m = build_catalog_model("martingale", {}, 1.0).model
    with pytest.raises(DimensionMismatch):
        solve_nonlocal_pde(replace(m, state_dim=2), build_grid(1.0, 4), SpatialGrid(-1, 1, 10))

