from __future__ import annotations

import numpy as np
import pytest

from volterra_kit.errors import NonFiniteState
from volterra_kit.forward import (
    bump_increment,
    bump_initial,
    draw_increments,
    malliavin_derivative_x,
    simulate_paths,
    tangent_process,
)
from volterra_kit.model import build_grid, scalar_model


def _model(drift, jac, sigma):
    return scalar_model(drift, jac, sigma, lambda t, s, x, y, z, yd, zd: 0.0 * x, lambda t, x: x)


BROWNIAN = _model(lambda s, x: 0.0 * x, lambda s, x: 0.0 * x, 1.0)
OU = _model(lambda s, x: -x, lambda s, x: -1.0 + 0.0 * x, 1.0)


def test_no_dynamics_keeps_start():
    frozen = _model(lambda s, x: 0.0 * x, lambda s, x: 0.0 * x, 0.0)
    ens = simulate_paths(frozen, 0.0, [1.0], build_grid(1.0, 20), 50, seed=3)
    assert np.all(ens.paths == 1.0)


def test_brownian_terminal_variance():
    J = 100_000
    ens = simulate_paths(BROWNIAN, 0.0, [0.0], build_grid(1.0, 20), J, seed=11)
    var = ens.paths[:, -1, 0].var(ddof=1)
    assert abs(var - 1.0) <= 3.0 * np.sqrt(2.0 / J)


def test_ou_terminal_mean():
    # N = 200 keeps the Euler bias (1-dt)^N vs e^{-1} well inside three standard errors
    J = 100_000
    ens = simulate_paths(OU, 0.0, [2.0], build_grid(1.0, 200), J, seed=5)
    xT = ens.paths[:, -1, 0]
    assert abs(xT.mean() - 2.0 * np.exp(-1.0)) <= 3.0 * xT.std() / np.sqrt(J)


def test_paths_start_at_t0_level():
    g = build_grid(1.0, 10)
    ens = simulate_paths(OU, 0.3, [1.5], g, 40, seed=2)
    assert ens.start_index == 3
    assert np.all(ens.paths[:, :4, 0] == 1.5)
    assert not np.all(ens.paths[:, 4, 0] == 1.5)


def test_seeded_streams_are_worker_and_prefix_independent():
    g = build_grid(1.0, 8)
    a = draw_increments(10_000, g, 1, seed=42, workers=1)
    b = draw_increments(10_000, g, 1, seed=42, workers=4)
    c = draw_increments(100, g, 1, seed=42)
    assert np.array_equal(a, b)
    assert np.array_equal(a[:100], c)
    assert not np.array_equal(a, draw_increments(10_000, g, 1, seed=43))


def test_ensemble_is_read_only():
    ens = simulate_paths(OU, 0.0, [0.0], build_grid(1.0, 4), 10, seed=0)
    with pytest.raises(ValueError):
        ens.paths[0, 0, 0] = 1.0


def test_identity_tangent_without_drift_slope():
    ens = simulate_paths(BROWNIAN, 0.0, [0.0], build_grid(1.0, 10), 20, seed=0)
    assert np.all(tangent_process(BROWNIAN, ens).values == 1.0)


def test_ou_tangent_is_exponential():
    g = build_grid(1.0, 100)
    ens = simulate_paths(OU, 0.0, [0.5], g, 10, seed=0)
    tan = tangent_process(OU, ens).values[:, :, 0, 0]
    np.testing.assert_allclose(tan, np.broadcast_to(np.exp(-g.times), tan.shape), atol=2 * g.dt)


def test_initial_bump_matches_tangent():
    nonlinear = _model(lambda s, x: np.sin(x), lambda s, x: np.cos(x), 0.5)
    g = build_grid(1.0, 100)
    ens = simulate_paths(nonlinear, 0.0, [0.2], g, 200, seed=9)
    eps = 1e-4
    fd = (bump_initial(nonlinear, ens, eps).paths[:, -1, 0] - ens.paths[:, -1, 0]) / eps
    tan = tangent_process(nonlinear, ens).values[:, -1, 0, 0]
    # Euler tangent uses exp of the summed Jacobians, the bump the product of (1 + b_x dt)
    np.testing.assert_allclose(fd, tan, rtol=eps + 2 * g.dt)


def test_malliavin_vanishes_after_s():
    g = build_grid(1.0, 10)
    ens = simulate_paths(OU, 0.0, [0.0], g, 5, seed=0)
    assert np.all(malliavin_derivative_x(OU, ens, 7, 3) == 0.0)


def test_malliavin_constant_without_drift_slope():
    model = _model(lambda s, x: 0.0 * x, lambda s, x: 0.0 * x, 0.7)
    g = build_grid(1.0, 10)
    ens = simulate_paths(model, 0.0, [0.0], g, 5, seed=0)
    for theta, s in [(0, 10), (3, 3), (2, 8)]:
        np.testing.assert_allclose(malliavin_derivative_x(model, ens, theta, s), 0.7)


def test_increment_bump_matches_malliavin_on_ou():
    g = build_grid(1.0, 100)
    ens = simulate_paths(OU, 0.0, [1.0], g, 50, seed=4)
    eps = 1e-4
    theta = 20
    bumped = bump_increment(OU, ens, theta, eps)
    for s in (30, 60, 100):
        fd = (bumped[:, s, 0] - ens.paths[:, s, 0]) / eps
        d = malliavin_derivative_x(OU, ens, theta, s)[:, 0, 0]
        np.testing.assert_allclose(fd, d, rtol=eps + g.dt)


def test_exploding_tangent_is_reported():
    steep = _model(lambda s, x: 0.0 * x, lambda s, x: 1e4 + 0.0 * x, 1.0)
    ens = simulate_paths(BROWNIAN, 0.0, [0.0], build_grid(1.0, 100), 3, seed=0)
    with pytest.raises(NonFiniteState):
        tangent_process(steep, ens)
