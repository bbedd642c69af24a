from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from volterra_kit.errors import SingularDesignMatrix
from volterra_kit.regression import Projector, RegressionBasis


@pytest.mark.parametrize("family", ["monomial", "hermite"])
def test_polynomials_within_degree_are_reproduced(family):
    x = np.random.default_rng(0).normal(size=(500, 1))
    v = 1.0 - 2.0 * x[:, 0] + 0.5 * x[:, 0] ** 3
    proj = Projector(RegressionBasis(family, 3), x)
    np.testing.assert_allclose(proj.fit(v), v, atol=1e-10)
    coef = proj.coefficients(v)
    xn = np.array([[-1.0], [0.3], [2.0]])
    np.testing.assert_allclose(proj.evaluate(coef, xn), 1.0 - 2.0 * xn[:, 0] + 0.5 * xn[:, 0] ** 3, atol=1e-9)


def test_two_dimensional_basis_size():
    assert RegressionBasis("monomial", 3).n_terms(2) == 10
    assert RegressionBasis("monomial", 2).n_terms(1) == 3


def test_constant_sample_drops_to_constant_basis():
    x = np.full((100, 1), 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        proj = Projector(RegressionBasis(), x)
    v = np.arange(100.0)
    np.testing.assert_allclose(proj.fit(v), np.full(100, v.mean()))


def test_rank_deficient_design_warns():
    x = np.array([[0.0], [0.0], [1.0], [1.0]])
    with pytest.warns(SingularDesignMatrix):
        proj = Projector(RegressionBasis("monomial", 3), x)
    v = np.array([1.0, 1.0, 3.0, 3.0])
    np.testing.assert_allclose(proj.fit(v), v, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_projection_is_idempotent_and_orthogonal(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(200, 1))
    v = rng.normal(size=200)
    proj = Projector(RegressionBasis(), x)
    f = proj.fit(v)
    np.testing.assert_allclose(proj.fit(f), f, atol=1e-9)
    A = RegressionBasis().design((x - x.mean()) / x.std())
    np.testing.assert_allclose(A.T @ (v - f), 0.0, atol=1e-8)


def test_leverage_matches_hat_matrix_diagonal():
    x = np.random.default_rng(1).normal(size=(300, 1))
    proj = Projector(RegressionBasis("monomial", 2), x)
    A = RegressionBasis("monomial", 2).design((x - x.mean()) / x.std())
    H = A @ np.linalg.solve(A.T @ A, A.T)
    np.testing.assert_allclose(proj.leverage(x), np.diag(H), rtol=1e-9)
