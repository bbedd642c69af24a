from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from volterra_kit.errors import InvalidMVModel, InvalidStateModel, SigmaFloorBreach
from volterra_kit.model import build_grid, node_index
from volterra_kit.mv import (
    MVModel,
    StateModelSpec,
    affine_in_r,
    build_state_model,
    constant_coefficient_oracle,
    constant_mv,
    equilibrium_policy,
    polynomial,
    policy_terms,
    solve_mv_system,
    validate_mv,
)
from volterra_kit.regression import RegressionBasis

GRID = build_grid(1.0, 50)
ACCURATE = dict(mode="picard-inner", theta=0.5, implicit_y=True)
HULL_WHITE = StateModelSpec("HullWhite", theta=0.0, kappa=-1.0, sigma_R=0.3)


def _closed_form(beta, sigma, gamma, T, s=0.0):
    # with rho = 1, p - M is constant, so M' = -a - (a + th) M with a = th / gamma
    th = beta**2 / sigma**2
    a = th / gamma
    M = a / (a + th) * np.expm1((a + th) * (T - s))
    return 1.0 + M, M


def _state_dependent(corr, T=1.0):
    rho, drho = polynomial([1.0, 0.5])
    return MVModel(gamma=2.0, r_f=0.02, rho_corr=corr, rho_fn=rho, rho_prime=drho,
                   beta=affine_in_r(0.3, 0.5), sigma=affine_in_r(0.2), state_model=HULL_WHITE, T=T)


@pytest.mark.parametrize("spec,drift,sig", [
    (StateModelSpec("HoLee", theta=0.1, sigma_R=0.2), lambda r: 0.1 + 0 * r, 0.2),
    (HULL_WHITE, lambda r: -r, 0.3),
    (StateModelSpec("Bessel", kappa=0.5, sigma_R=1.0, r0=1.0), lambda r: 0.5 / r, 1.0),
])
def test_state_model_coefficients(spec, drift, sig):
    model = build_state_model(spec)
    r = np.array([[0.5], [1.0], [2.0]])
    np.testing.assert_allclose(model.drift(0.3, r)[:, 0], drift(r[:, 0]))
    assert float(model.diffusion(0.3)[0, 0]) == sig
    assert (model.reflect_floor is not None) == (spec.kind == "Bessel")


def test_bessel_paths_stay_above_floor():
    mv = replace(constant_mv(0.3, 0.2, 2.0), state_model=StateModelSpec("Bessel", kappa=0.5, sigma_R=1.0, r0=0.05))
    sol = solve_mv_system(mv, build_grid(1.0, 20), 2_000, seed=0)
    assert sol.R.min() >= mv.state_model.r_min


@pytest.mark.parametrize("spec", [
    StateModelSpec("HoLee", kappa=0.5),
    StateModelSpec("HullWhite", kappa=0.5),
    StateModelSpec("Bessel", kappa=0.5, theta=0.1, r0=1.0),
    StateModelSpec("Bessel", kappa=0.5, r0=0.0),
    StateModelSpec("BrownianBridge", kappa=-1.0, end_time=1.0),
    StateModelSpec("custom", kappa=-1.0),
    StateModelSpec("Vasicek"),
])
def test_invalid_state_models(spec):
    with pytest.raises(InvalidStateModel):
        build_state_model(spec, T=1.0)


def test_oracle_matches_closed_form():
    for beta, sigma, gamma in [(0.3, 0.2, 2.0), (1.0, 1.0, 1.0)]:
        mv = constant_mv(beta, sigma, gamma)
        s, p, M = constant_coefficient_oracle(mv, 1000)
        p_exact, M_exact = _closed_form(beta, sigma, gamma, 1.0, s)
        np.testing.assert_allclose(p, p_exact, rtol=1e-10)
        np.testing.assert_allclose(M, M_exact, rtol=1e-10, atol=1e-14)


def test_oracle_regression_fixture_unit_coefficients():
    _, p, M = constant_coefficient_oracle(constant_mv(1.0, 1.0, 1.0), 1000)
    assert p[0] == pytest.approx(4.194528049465325, rel=1e-10)
    assert M[0] == pytest.approx(3.194528049465325, rel=1e-10)


def test_oracle_with_time_dependent_rho_matches_scipy():
    mv = constant_mv(0.3, 0.2, 2.0, rho_coeffs=(1.0, -0.4, 0.3))
    th, g = 0.3**2 / 0.2**2, 2.0

    def rhs(s, y):
        c = -(th / g) * y[0] - th * y[1]
        return [mv.rho_prime(s) + c, c]

    ref = solve_ivp(rhs, (1.0, 0.0), [mv.rho_fn(1.0), 0.0], rtol=1e-12, atol=1e-12, dense_output=True)
    s, p, M = constant_coefficient_oracle(mv, 2000)
    np.testing.assert_allclose(p, ref.sol(s)[0], rtol=1e-8)
    np.testing.assert_allclose(M, ref.sol(s)[1], rtol=1e-8, atol=1e-10)


def test_oracle_trivial_cases():
    mv = constant_mv(0.0, 0.2, 2.0, rho_coeffs=(1.0, 0.5))
    s, p, M = constant_coefficient_oracle(mv, 100)
    np.testing.assert_allclose(p, 1.0 + 0.5 * s, atol=1e-12)
    assert np.all(M == 0.0)
    _, p, M = constant_coefficient_oracle(constant_mv(0.3, 0.2, 2.0), 100)
    assert p[-1] == 1.0 and M[-1] == 0.0


def test_oracle_rejects_state_dependent_coefficients():
    with pytest.raises(InvalidMVModel):
        constant_coefficient_oracle(_state_dependent(0.0), 10)


@pytest.fixture(scope="module")
def constant_solution():
    mv = constant_mv(0.3, 0.2, 2.0)
    return mv, solve_mv_system(mv, GRID, 100_000, seed=31, **ACCURATE)


def test_constant_coefficients_match_oracle(constant_solution):
    mv, sol = constant_solution
    _, p, M = constant_coefficient_oracle(mv, 1000)
    pm, Mm = sol.p.mean(axis=1), sol.M.mean(axis=1)
    assert np.max(np.abs(pm - p[::20]) / np.abs(p[::20])) <= 0.03
    assert np.max(np.abs(Mm[:-1] - M[::20][:-1]) / np.abs(M[::20][:-1])) <= 0.03
    for n in range(GRID.N + 1):
        for name in ("q", "N"):
            mean = float(getattr(sol, {"q": "q", "N": "N_"}[name])[n].mean())
            assert abs(mean) <= 3.0 * sol.standard_error(name, n) + 1e-12


def test_constant_myopic_demand_uses_oracle(constant_solution):
    mv, sol = constant_solution
    _, p, M = constant_coefficient_oracle(mv, 1000)
    pol = equilibrium_policy(sol, mv, 0, r=0.0)
    expected = 0.3 / (2.0 * 0.2**2) * (p[0] + 2.0 * M[0])
    assert pol.myopic == pytest.approx(expected, rel=0.03)
    assert pol.hedging == 0.0
    assert pol.total == pol.myopic + pol.hedging


def test_t_slices_share_martingale_integrand():
    mv = _state_dependent(-0.5)
    mv = replace(mv, rho_fn=polynomial([1.0, 0.5])[0])
    sol = solve_mv_system(mv, GRID, 10_000, seed=2)
    worst = 0.0
    for n in range(GRID.N + 1):
        rows = sol.Q[node_index(0, n): node_index(0, n) + n + 1]
        worst = max(worst, float(np.max(np.abs(rows - rows[0]))))
    assert worst <= 1e-10


def test_shifted_mode_agrees():
    mv = _state_dependent(-0.5)
    a = solve_mv_system(mv, GRID, 10_000, seed=4, **ACCURATE)
    b = solve_mv_system(mv, GRID, 10_000, seed=4, shifted=True, **ACCURATE)
    np.testing.assert_allclose(a.p.mean(axis=1), b.p.mean(axis=1), rtol=1e-6)
    np.testing.assert_allclose(a.M.mean(axis=1), b.M.mean(axis=1), rtol=1e-6, atol=1e-9)


def test_zero_beta_means_no_investment():
    mv = constant_mv(0.0, 0.2, 2.0, corr=0.7, state=HULL_WHITE)
    sol = solve_mv_system(mv, build_grid(1.0, 20), 5_000, seed=1)
    # exact up to rounding in the projection of a constant
    np.testing.assert_allclose(sol.p, 1.0, atol=1e-12)
    assert np.all(sol.M == 0.0)
    assert np.max(np.abs(sol.q)) <= 1e-12
    for n in (0, 10, 19):
        pol = equilibrium_policy(sol, mv, n, path=3)
        assert pol.myopic == 0.0
        assert abs(pol.hedging) <= 1e-12 and abs(pol.total) <= 1e-12


def test_zero_correlation_removes_hedging():
    mv = _state_dependent(0.0)
    sol = solve_mv_system(mv, GRID, 20_000, seed=5, **ACCURATE)
    assert np.max(np.abs(sol.q)) > 0.0
    for n in (0, 25, 49):
        for r in np.quantile(sol.R[:, n], [0.1, 0.5, 0.9]):
            pol = equilibrium_policy(sol, mv, n, r=float(r))
            assert abs(pol.hedging) <= 3.0 * pol.hedging_se + 1e-12


def test_correlated_hedging_sign_and_error():
    mv = _state_dependent(-0.5)
    sol = solve_mv_system(mv, GRID, 20_000, seed=5, **ACCURATE)
    pol = equilibrium_policy(sol, mv, 10, r=0.0)
    proj, coef = sol.regressed(10)
    q = float(proj.evaluate(coef, np.array([[0.0]]))[0, 1])
    assert np.sign(pol.hedging) == np.sign(mv.rho_corr * q)
    assert pol.hedging_se > 0.0
    assert pol.total == pol.myopic + pol.hedging


def test_doubling_gamma_halves_myopic():
    mv = _state_dependent(-0.5)
    r = np.array([-0.2, 0.0, 0.4])
    p, q, M = np.array([1.1, 1.2, 1.3]), np.array([0.1, -0.2, 0.05]), np.zeros(3)
    m1, h1, _ = policy_terms(mv, 0.3, r, p, q, M)
    m2, h2, _ = policy_terms(replace(mv, gamma=2 * mv.gamma), 0.3, r, p, q, M)
    np.testing.assert_allclose(m2, m1 / 2)
    np.testing.assert_allclose(h2, h1 / 2)


def test_policy_needs_one_locator(constant_solution):
    mv, sol = constant_solution
    with pytest.raises(ValueError):
        equilibrium_policy(sol, mv, 0)
    with pytest.raises(ValueError):
        equilibrium_policy(sol, mv, 0, path=1, r=0.0)


def test_validation_errors():
    mv = constant_mv(0.3, 0.2, 2.0, rho_coeffs=(1.0, 0.5))
    validate_mv(mv)
    with pytest.raises(InvalidMVModel):
        validate_mv(replace(mv, rho_prime=lambda t: 0.0))
    with pytest.raises(InvalidMVModel):
        validate_mv(replace(mv, gamma=0.0))
    with pytest.raises(InvalidMVModel):
        validate_mv(replace(mv, rho_corr=1.5))


def test_sigma_floor_breach():
    mv = replace(constant_mv(0.3, 0.2, 2.0, state=HULL_WHITE), sigma=affine_in_r(0.0, 1.0))
    with pytest.raises(SigmaFloorBreach):
        solve_mv_system(mv, build_grid(1.0, 10), 1_000, seed=0)


def test_custom_mapping_reproduces_ou_state():
    # F(R) = 2R is a rescaled Hull-White model: same R-paths as the named kind
    custom = StateModelSpec("custom", theta=0.0, kappa=-1.0, sigma_R=0.6,
                            F=lambda r: 2 * r, F_inv=lambda x: x / 2, F_prime=lambda r: 2 + 0 * r,
                            E=lambda r: 2 * r, E_prime=lambda r: 2 + 0 * r)
    a = solve_mv_system(_state_dependent(-0.5), build_grid(1.0, 10), 2_000, seed=9, basis=RegressionBasis())
    b = solve_mv_system(replace(_state_dependent(-0.5), state_model=custom), build_grid(1.0, 10), 2_000, seed=9)
    np.testing.assert_allclose(a.R, b.R, atol=1e-12)
    np.testing.assert_allclose(a.p, b.p, atol=1e-9)
