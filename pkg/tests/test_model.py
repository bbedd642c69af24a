from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_kit.errors import DegenerateDiffusion, DimensionMismatch, InvalidHorizon, InvalidSpatialGrid
from volterra_kit.model import MarkovianModel, SpatialGrid, build_grid, node_index, scalar_model, validate_model


def _model(diffusion=1.0, drift=lambda s, x: -x, jac=lambda s, x: -1.0 + 0.0 * x):
    return scalar_model(drift, jac, diffusion,
                        lambda t, s, x, y, z, yd, zd: 0.0 * x, lambda t, x: x)


def test_zero_diffusion_is_degenerate():
    with pytest.raises(DegenerateDiffusion):
        validate_model(_model(diffusion=0.0), build_grid(1.0, 10), [0.0, 1.0])


def test_ou_model_passes_with_unit_eigenvalue():
    rep = validate_model(_model(), build_grid(1.0, 10), np.linspace(-1, 1, 5))
    assert rep.passed
    assert rep.min_eigenvalue == pytest.approx(1.0)


def test_drift_shape_mismatch():
    base = _model()

    def bad_drift(s, x):
        return np.zeros((x.shape[0], 2))

    model = MarkovianModel(1, 1, 1, bad_drift, base.drift_jacobian, base.diffusion, base.generator, base.terminal)
    with pytest.raises(DimensionMismatch):
        validate_model(model, build_grid(1.0, 4), [0.0])


def test_smallest_triangle():
    g = build_grid(1.0, 1)
    assert sorted(g.nodes()) == [(0, 0), (0, 1), (1, 1)]
    assert g.dt == 1.0


def test_node_count_and_dt():
    g = build_grid(2.0, 4)
    assert g.node_count == 15 == len(list(g.nodes()))
    assert g.dt == 0.5


@pytest.mark.parametrize("T,N", [(0.0, 10), (-1.0, 5), (1.0, 0), (1.0, 2.5)])
def test_invalid_horizon(T, N):
    with pytest.raises(InvalidHorizon):
        build_grid(T, N)


@given(st.integers(min_value=1, max_value=60))
def test_node_index_is_a_bijection_onto_levels(N):
    g = build_grid(1.0, N)
    idx = [node_index(m, n) for m, n in g.nodes()]
    assert sorted(idx) == list(range(g.node_count))
    # each level is a contiguous block starting at n(n+1)/2
    for n in range(N + 1):
        assert [node_index(m, n) for m in range(n + 1)] == list(range(n * (n + 1) // 2, (n + 1) * (n + 2) // 2))


def test_spatial_grid():
    sp = SpatialGrid(-1.0, 1.0, 4)
    np.testing.assert_allclose(sp.points, [-1.0, -0.5, 0.0, 0.5, 1.0])
    with pytest.raises(InvalidSpatialGrid):
        SpatialGrid(1.0, -1.0, 10)
    with pytest.raises(InvalidSpatialGrid):
        SpatialGrid(0.0, 1.0, 1)
