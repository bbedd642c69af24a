"""Built-in scalar test models with closed-form solutions where they exist."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .model import MarkovianModel, SpatialGrid, scalar_model


@dataclass(frozen=True)
class CatalogModel:
    name: str
    model: MarkovianModel
    x0: float
    x_lo: float
    x_hi: float
    exact_u: Callable | None = None  # u(t, s, x)
    exact_ux: Callable | None = None  # u_x(t, s, x)

    def space(self, M_x: int) -> SpatialGrid:
        return SpatialGrid(self.x_lo, self.x_hi, M_x)

    @property
    def sigma(self) -> float:
        return float(np.asarray(self.model.diffusion(0.0))[0, 0])


# coupling constants of the manufactured generator
MANUFACTURED_COEFFS = {"c_y": 0.5, "c_z": 0.25, "c_yd": -0.5, "c_zd": 0.5}


def _zero(*args):
    return 0.0


def _params(name: str, given: dict, defaults: dict) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for model '{name}'", field="model.params")
    out = dict(defaults)
    out.update({k: float(v) for k, v in given.items()})
    return out


def _brownian_box(x0: float, sigma: float, T: float, width: float = 8.0) -> tuple[float, float]:
    half = width * abs(sigma) * np.sqrt(T) + 1.0
    return x0 - half, x0 + half


def martingale(params: dict, T: float) -> CatalogModel:
    p = _params("martingale", params, {"sigma": 1.0, "x0": 0.0})
    sig = p["sigma"]
    model = scalar_model(_zero, _zero, sig, lambda t, s, x, y, z, yd, zd: 0.0 * x, lambda t, x: x,
                         generator_t=lambda t, s, x, y, z, yd, zd: 0.0 * x, terminal_t=lambda t, x: 0.0 * x,
                         name="martingale")
    lo, hi = _brownian_box(p["x0"], sig, T)
    return CatalogModel("martingale", model, p["x0"], lo, hi,
                        exact_u=lambda t, s, x: np.asarray(x, dtype=float) + 0.0 * s,
                        exact_ux=lambda t, s, x: np.ones_like(np.asarray(x, dtype=float)))


def quadratic(params: dict, T: float) -> CatalogModel:
    p = _params("quadratic", params, {"sigma": 1.0, "x0": 0.0})
    sig = p["sigma"]
    model = scalar_model(_zero, _zero, sig, lambda t, s, x, y, z, yd, zd: 0.0 * x, lambda t, x: x**2,
                         generator_t=lambda t, s, x, y, z, yd, zd: 0.0 * x, terminal_t=lambda t, x: 0.0 * x,
                         name="quadratic")
    lo, hi = _brownian_box(p["x0"], sig, T)
    return CatalogModel("quadratic", model, p["x0"], lo, hi,
                        exact_u=lambda t, s, x: np.asarray(x, dtype=float) ** 2 + sig**2 * (T - s),
                        exact_ux=lambda t, s, x: 2.0 * np.asarray(x, dtype=float))


def diag_y(params: dict, T: float) -> CatalogModel:
    p = _params("diag_y", params, {"sigma": 1.0, "x0": 0.0})
    sig = p["sigma"]
    model = scalar_model(_zero, _zero, sig, lambda t, s, x, y, z, yd, zd: -yd, lambda t, x: 1.0 + 0.0 * x,
                         generator_t=lambda t, s, x, y, z, yd, zd: 0.0 * x, terminal_t=lambda t, x: 0.0 * x,
                         name="diag_y")
    lo, hi = _brownian_box(p["x0"], sig, T)
    return CatalogModel("diag_y", model, p["x0"], lo, hi,
                        exact_u=lambda t, s, x: np.exp(T - s) + 0.0 * np.asarray(x, dtype=float),
                        exact_ux=lambda t, s, x: np.zeros_like(np.asarray(x, dtype=float)))


def diag_z(params: dict, T: float) -> CatalogModel:
    p = _params("diag_z", params, {"sigma": 1.0, "x0": 0.0})
    sig = p["sigma"]
    model = scalar_model(_zero, _zero, sig, lambda t, s, x, y, z, yd, zd: -zd, lambda t, x: x,
                         generator_t=lambda t, s, x, y, z, yd, zd: 0.0 * x, terminal_t=lambda t, x: 0.0 * x,
                         name="diag_z")
    lo, hi = _brownian_box(p["x0"], sig, T)
    return CatalogModel("diag_z", model, p["x0"], lo, hi,
                        exact_u=lambda t, s, x: np.asarray(x, dtype=float) + sig * (T - s),
                        exact_ux=lambda t, s, x: np.ones_like(np.asarray(x, dtype=float)))


def t_linear(params: dict, T: float) -> CatalogModel:
    p = _params("t_linear", params, {"sigma": 1.0, "x0": 0.0})
    sig = p["sigma"]
    model = scalar_model(_zero, _zero, sig, lambda t, s, x, y, z, yd, zd: 0.0 * x, lambda t, x: t * x,
                         generator_t=lambda t, s, x, y, z, yd, zd: 0.0 * x, terminal_t=lambda t, x: x,
                         name="t_linear")
    lo, hi = _brownian_box(p["x0"], sig, T)
    return CatalogModel("t_linear", model, p["x0"], lo, hi,
                        exact_u=lambda t, s, x: t * np.asarray(x, dtype=float),
                        exact_ux=lambda t, s, x: t + 0.0 * np.asarray(x, dtype=float))


def ou(params: dict, T: float) -> CatalogModel:
    p = _params("ou", params, {"sigma": 1.0, "kappa": 1.0, "x0": 0.0})
    sig, kap = p["sigma"], p["kappa"]
    model = scalar_model(lambda s, x: -kap * x, lambda s, x: -kap + 0.0 * x, sig,
                         lambda t, s, x, y, z, yd, zd: 0.0 * x, lambda t, x: x,
                         generator_t=lambda t, s, x, y, z, yd, zd: 0.0 * x, terminal_t=lambda t, x: 0.0 * x,
                         name="ou")
    lo, hi = _brownian_box(p["x0"], sig, T)
    return CatalogModel("ou", model, p["x0"], lo, hi,
                        exact_u=lambda t, s, x: np.asarray(x, dtype=float) * np.exp(-kap * (T - s)),
                        exact_ux=lambda t, s, x: np.exp(-kap * (T - s)) + 0.0 * np.asarray(x, dtype=float))


def manufactured_solution(t, s, x):
    return (1.0 + t) * np.exp(-s) * np.sin(x)


def manufactured_gradient(t, s, x):
    return (1.0 + t) * np.exp(-s) * np.cos(x)


def manufactured(params: dict, T: float) -> CatalogModel:
    """``u*(t,s,x) = (1+t) e^{-s} sin x`` with ``b = 0``, ``sigma = 1`` and a generator
    that is linear in all four solution arguments."""
    p = _params("manufactured", params, {"x0": 0.0, **MANUFACTURED_COEFFS})
    cy, cz, cyd, czd = p["c_y"], p["c_z"], p["c_yd"], p["c_zd"]

    def source(t, s, x):
        u = manufactured_solution(t, s, x)
        ux = manufactured_gradient(t, s, x)
        ud = manufactured_solution(s, s, x)
        udx = manufactured_gradient(s, s, x)
        # u_s + u_xx / 2 = -1.5 u for this u*
        return -1.5 * u - (cy * u + cz * ux + cyd * ud + czd * udx)

    def source_t(t, s, x):
        e = np.exp(-s)
        return -1.5 * e * np.sin(x) - (cy * e * np.sin(x) + cz * e * np.cos(x))

    model = scalar_model(
        _zero, _zero, 1.0,
        lambda t, s, x, y, z, yd, zd: source(t, s, x) + cy * y + cz * z + cyd * yd + czd * zd,
        lambda t, x: manufactured_solution(t, T, x),
        generator_t=lambda t, s, x, y, z, yd, zd: source_t(t, s, x),
        terminal_t=lambda t, x: np.exp(-T) * np.sin(x),
        name="manufactured",
    )
    return CatalogModel("manufactured", model, p["x0"], -2.0 * np.pi, 2.0 * np.pi,
                        exact_u=manufactured_solution, exact_ux=manufactured_gradient)


def stochastic_lipschitz(params: dict, T: float) -> CatalogModel:
    """Linear generator ``x (y + z + y_diag + z_diag)`` with Brownian ``x``: random, unbounded slope."""
    p = _params("stochastic_lipschitz", params, {"sigma": 1.0, "x0": 0.0})
    sig = p["sigma"]
    model = scalar_model(
        _zero, _zero, sig,
        lambda t, s, x, y, z, yd, zd: x * (y + z + yd + zd),
        lambda t, x: np.cos(x) + t,
        generator_t=lambda t, s, x, y, z, yd, zd: 0.0 * x,
        terminal_t=lambda t, x: 1.0 + 0.0 * x,
        name="stochastic_lipschitz",
    )
    lo, hi = _brownian_box(p["x0"], sig, T)
    return CatalogModel("stochastic_lipschitz", model, p["x0"], lo, hi)


CATALOG: dict[str, Callable[[dict, float], CatalogModel]] = {
    "martingale": martingale,
    "quadratic": quadratic,
    "diag_y": diag_y,
    "diag_z": diag_z,
    "t_linear": t_linear,
    "ou": ou,
    "manufactured": manufactured,
    "stochastic_lipschitz": stochastic_lipschitz,
}


def build_catalog_model(name: str, params: dict | None, T: float) -> CatalogModel:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown catalog model '{name}' (known: {sorted(CATALOG)})", field="model.name") from None
    return factory(params or {}, T)
