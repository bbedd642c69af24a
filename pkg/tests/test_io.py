from __future__ import annotations

import csv

import numpy as np
from hypothesis import given, strategies as st

from volterra_kit import io
from volterra_kit.bsvie import solve_bsvie_mc
from volterra_kit.catalog import build_catalog_model
from volterra_kit.forward import simulate_paths
from volterra_kit.model import build_grid
from volterra_kit.pde import solve_nonlocal_pde


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(v):
    assert float(io.fmt(v)) == v


def test_special_values():
    assert [io.fmt(v) for v in (np.nan, np.inf, -np.inf, 3, np.int64(7), 0.1)] == ["nan", "inf", "-inf", "3", "7", "0.1"]


def test_write_csv_is_deterministic(tmp_path):
    rows = [(1, 0.5, np.float64(1 / 3)), (2, np.nan, -1e-300)]
    a = io.write_csv(tmp_path / "a.csv", ["i", "x", "y"], rows)
    b = io.write_csv(tmp_path / "sub" / "b.csv", ["i", "x", "y"], rows)
    assert a.read_bytes() == b.read_bytes()
    assert io.sha256(a) == io.sha256(b)
    assert a.read_text().splitlines()[1] == "1,0.5,0.3333333333333333"


def test_exporters(tmp_path):
    cm = build_catalog_model("t_linear", {}, 1.0)
    grid = build_grid(1.0, 4)
    ens = simulate_paths(cm.model, 0.0, [0.0], grid, 50, seed=0)
    sol = solve_bsvie_mc(cm.model, grid, ens)
    fld = solve_nonlocal_pde(cm.model, grid, cm.space(10))

    with open(io.export_solution(tmp_path / "s.csv", sol)) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == grid.node_count
    assert list(rows[0]) == ["m", "n", "t", "s", "y_mean", "y_std", "z_mean", "z_std", "yd_mean", "zd_mean"]

    with open(io.export_field(tmp_path / "f.csv", fld)) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == grid.node_count * 11
    r = rows[0]
    assert float(r["u"]) == float(r["t"]) * float(r["x"])

    with open(io.export_ensemble(tmp_path / "e.csv", ens, max_paths=2)) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 2 * 5

    text = io.export_policy(tmp_path / "p.csv", [(0, 0.0, 0.1, 1.0, 0.5, 1.5)]).read_text()
    assert text.splitlines()[0] == "n,s,r_quantile,myopic,hedging,total"
