"""CSV exporters.  Floats use the shortest round-trip representation, so files are
byte-identical whenever the underlying arrays are."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bsvie import BsvieSolution, CrossValidationReport
from .forward import PathEnsemble
from .model import node_index
from .pde import TwoTimeField, gradient_x


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    f = float(v)
    return repr(f) if np.isfinite(f) else ("nan" if np.isnan(f) else ("inf" if f > 0 else "-inf"))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def export_ensemble(path: Path, ens: PathEnsemble, max_paths: int | None = None) -> Path:
    J = ens.n_paths if max_paths is None else min(max_paths, ens.n_paths)
    d = ens.paths.shape[2]
    times = ens.grid.times

    def rows():
        for j in range(J):
            for n in range(ens.grid.N + 1):
                yield (j, n, times[n], *ens.paths[j, n])

    return write_csv(path, ["path", "n", "s"] + [f"x_{i + 1}" for i in range(d)], rows())


def export_field(path: Path, field: TwoTimeField) -> Path:
    ux = gradient_x(field)
    x = field.space.points
    g = field.grid

    def rows():
        for m, n in g.nodes():
            u, du = field.row(m, n), ux.row(m, n)
            for i in range(x.size):
                yield (m, n, g.time(m), g.time(n), i, x[i], u[i], du[i])

    return write_csv(path, ["m", "n", "t", "s", "i", "x", "u", "u_x"], rows())


def export_solution(path: Path, sol: BsvieSolution) -> Path:
    """Per-node path statistics (first component for vector-valued solutions)."""
    g = sol.grid
    yd_mean = sol.Yd[:, :, 0].mean(axis=1)
    zd_mean = sol.Zd[:, :, 0, 0].mean(axis=1)

    def rows():
        for m, n in g.nodes():
            i = node_index(m, n)
            yield (m, n, g.time(m), g.time(n), sol.y_mean[i, 0], sol.y_std[i, 0],
                   sol.z_mean[i, 0, 0], sol.z_std[i, 0, 0], yd_mean[n], zd_mean[n])

    header = ["m", "n", "t", "s", "y_mean", "y_std", "z_mean", "z_std", "yd_mean", "zd_mean"]
    return write_csv(path, header, rows())


def export_cross_validation(path: Path, report: CrossValidationReport) -> Path:
    return write_csv(path, ["m", "n", "t", "s", "rms_y", "max_y", "rms_z", "max_z"], report.nodes)


def export_convergence(path: Path, rows: Sequence[Sequence]) -> Path:
    return write_csv(path, ["N", "M_x", "max_error", "l2_error", "observed_order"], rows)


def export_policy(path: Path, rows: Sequence[Sequence]) -> Path:
    return write_csv(path, ["n", "s", "r_quantile", "myopic", "hedging", "total"], rows)
