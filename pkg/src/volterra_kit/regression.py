"""Least-squares projection onto polynomial bases (conditional expectation estimator)."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite_e

from .errors import SingularDesignMatrix

RIDGE_FACTOR = 1e-10
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class RegressionBasis:
    family: str = "monomial"
    degree: int = 3
    standardize: bool = True

    def __post_init__(self):
        if self.family not in ("monomial", "hermite"):
            raise ValueError(f"unknown basis family {self.family!r}")
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError("degree must be a non-negative integer")

    def n_terms(self, dim: int) -> int:
        return len(_exponents(dim, self.degree))

    def design(self, x: np.ndarray) -> np.ndarray:
        """Design matrix for already standardized points ``x`` of shape ``(P, dim)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] == 0:
            return np.ones((x.shape[0], 1))
        if self.family == "monomial":
            uni = [np.vander(x[:, i], self.degree + 1, increasing=True) for i in range(x.shape[1])]
        else:
            uni = [hermite_e.hermevander(x[:, i], self.degree) for i in range(x.shape[1])]
        cols = []
        for exps in _exponents(x.shape[1], self.degree):
            col = np.ones(x.shape[0])
            for i, e in enumerate(exps):
                if e:
                    col = col * uni[i][:, e]
            cols.append(col)
        return np.stack(cols, axis=1)


@lru_cache(maxsize=None)
def _exponents(dim: int, degree: int) -> tuple[tuple[int, ...], ...]:
    exps = [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
    return tuple(exps)


class Projector:
    """Orthogonal projection of sample vectors onto ``basis(x)`` for a fixed point set.

    Dimensions along which the sample is (numerically) constant are dropped, so a
    deterministic starting state yields the constant basis without warnings.
    """

    def __init__(self, basis: RegressionBasis, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        self.basis = basis
        self.n_points = x.shape[0]
        center = x.mean(axis=0)
        scale = x.std(axis=0)
        self.active = scale > 1e-12 * (1.0 + np.abs(center))
        if self.n_points < 2:
            self.active[:] = False
        self.center = center if basis.standardize else np.zeros_like(center)
        self.scale = np.where(self.active, scale, 1.0) if basis.standardize else np.ones_like(scale)
        A = self._design(x)
        self.n_terms = A.shape[1]
        self._ridge = None
        Q, R = np.linalg.qr(A)
        diag = np.abs(np.diag(R))
        if A.shape[0] < A.shape[1] or diag.min() <= _RANK_TOL * diag.max():
            warnings.warn(
                f"rank-deficient design matrix ({A.shape[0]}x{A.shape[1]}); using ridge-regularized solve",
                SingularDesignMatrix,
                stacklevel=2,
            )
            G = A.T @ A
            lam = RIDGE_FACTOR * max(np.trace(G) / G.shape[0], 1e-300)
            self._A = A
            self._ridge = np.linalg.cholesky(G + lam * np.eye(G.shape[0]))
        else:
            self._Q = Q
            self._R = R

    def _design(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = (x[:, self.active] - self.center[self.active]) / self.scale[self.active]
        return self.basis.design(z)

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        flat = v.reshape(self.n_points, -1)
        if self._ridge is None:
            c = np.linalg.solve(self._R, self._Q.T @ flat)
        else:
            L = self._ridge
            c = np.linalg.solve(L.T, np.linalg.solve(L, self._A.T @ flat))
        return c.reshape((self.n_terms,) + v.shape[1:])

    def fit(self, v: np.ndarray) -> np.ndarray:
        """Fitted values of ``v`` (shape ``(P, ...)``) at the projector's own points."""
        v = np.asarray(v, dtype=float)
        flat = v.reshape(self.n_points, -1)
        if self._ridge is None:
            out = self._Q @ (self._Q.T @ flat)
        else:
            out = self._A @ self.coefficients(flat)
        return out.reshape(v.shape)

    def evaluate(self, coef: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Evaluate a fitted expansion at new points ``x``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        A = self._design(x)
        return (A @ coef.reshape(self.n_terms, -1)).reshape((x.shape[0],) + coef.shape[1:])

    def leverage(self, x: np.ndarray) -> np.ndarray:
        """``a(x)^T (A^T A)^{-1} a(x)`` for new points: scales residual variance into fit variance."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        A = self._design(x)
        L = self._R.T if self._ridge is None else self._ridge
        w = np.linalg.solve(L, A.T)
        return np.sum(w * w, axis=0)
