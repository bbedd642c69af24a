from __future__ import annotations

import json

import numpy as np
import pytest

from volterra_kit.catalog import build_catalog_model
from volterra_kit.config import parse_config
from volterra_kit.errors import ConfigError
from volterra_kit.experiments import _local_orders, _refined_ensemble, convergence_study, run
from volterra_kit.forward import draw_increments
from volterra_kit.model import build_grid


def test_refined_ensemble_aggregates_fine_increments():
    cm = build_catalog_model("diag_z", {}, 1.0)
    fine = build_grid(1.0, 100)
    dW = draw_increments(40, fine, 1, seed=3)
    coarse = _refined_ensemble(cm, fine, dW, 25, 10, 1.0)
    np.testing.assert_allclose(coarse.increments[:, :, 0], dW[:10, :, 0].reshape(10, 25, 4).sum(axis=2))
    # Brownian paths at shared times coincide across levels
    np.testing.assert_allclose(coarse.paths[:, -1, 0], dW[:10, :, 0].sum(axis=1))


def test_local_orders():
    orders = _local_orders([0.4, 0.2, 0.1], [0.04, 0.02, 0.01])
    assert np.isnan(orders[0])
    np.testing.assert_allclose(orders[1:], [1.0, 1.0])


def test_levels_must_increase(tmp_path):
    cfg = parse_config(json.dumps({
        "schema_version": 1, "experiment": "convergence", "model": {"name": "manufactured"},
        "grid": {"T": 1.0, "N": 25}, "convergence": {"experiment": "pde"}}))
    with pytest.raises(ConfigError):
        convergence_study(cfg, levels=[50, 25, 100], out=tmp_path)


def test_reports_are_reproducible(tmp_path):
    cfg = parse_config(json.dumps({
        "schema_version": 1, "experiment": "bsvie", "model": {"name": "diag_z"},
        "grid": {"T": 1.0, "N": 10}, "monte_carlo": {"J": 2000, "seed": 5},
        "checks": {"max_node_rms_z": 0.2}}), source="x.json")
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b", workers=3)
    assert a.summary() == b.summary()
    assert (tmp_path / "a" / "solution.csv").read_bytes() == (tmp_path / "b" / "solution.csv").read_bytes()
