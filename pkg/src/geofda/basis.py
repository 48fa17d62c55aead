"""One-dimensional basis systems on [0, 1] and penalized curve smoothing.

Curves are carried as coefficient vectors in a shared basis; every function
space computation (inner products, roughness) goes through the Gram matrix
``J`` and the second-derivative roughness matrix ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as spl
from scipy.interpolate import BSpline

from .errors import DomainError, RankError, ValidationError

DOMAIN = (0.0, 1.0)
_DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class BasisSystem:
    """A B-spline or Fourier basis on the unit interval.

    Parameters
    ----------
    kind : {"bspline", "fourier"}
    K : int
        Number of basis functions.
    order : int
        Spline order (4 = cubic). Ignored for Fourier.
    """

    kind: str
    K: int
    order: int = 4
    knots: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("bspline", "fourier"):
            raise ValidationError(f"unknown basis kind {self.kind!r}")
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if self.kind == "bspline":
            if self.order < 1:
                raise ValidationError("spline order must be >= 1")
            if self.K < self.order:
                raise ValidationError(
                    f"B-spline basis needs K >= order (got K={self.K}, order={self.order})"
                )
            n_interior = self.K - self.order
            interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
            knots = np.concatenate(
                [np.zeros(self.order), interior, np.ones(self.order)]
            )
            object.__setattr__(self, "knots", tuple(float(k) for k in knots))
        elif self.K % 2 == 0:
            raise ValidationError("Fourier basis needs odd K (constant plus sine/cosine pairs)")

    @property
    def domain(self) -> tuple[float, float]:
        return DOMAIN

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knots (B-spline) or the domain endpoints (Fourier)."""
        if self.kind == "bspline":
            return np.unique(np.asarray(self.knots))
        return np.array(DOMAIN)

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline(np.asarray(self.knots), np.eye(self.K), self.order - 1, extrapolate=False)

    def evaluate(self, v, deriv: int = 0) -> np.ndarray:
        """Evaluate all basis functions (or a derivative) at ``v``.

        Returns an array of shape ``(len(v), K)``. Points outside [0, 1]
        raise :class:`DomainError`.
        """
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if v.ndim != 1:
            raise ValidationError("evaluation points must be one-dimensional")
        if np.any(~np.isfinite(v)) or np.any(v < -_DOMAIN_TOL) or np.any(v > 1.0 + _DOMAIN_TOL):
            raise DomainError("basis evaluation outside the domain [0, 1]")
        v = np.clip(v, 0.0, 1.0)
        if self.kind == "bspline":
            spl_ = self._spline if deriv == 0 else self._spline.derivative(deriv)
            if deriv >= self.order:
                return np.zeros((v.size, self.K))
            out = spl_(v)
            # right endpoint belongs to the last nonempty knot span
            return np.nan_to_num(out, nan=0.0)
        return _fourier_eval(v, self.K, deriv)

    def descriptor(self) -> dict:
        d = {"kind": self.kind, "K": self.K}
        if self.kind == "bspline":
            d["order"] = self.order
        return d

    @classmethod
    def from_descriptor(cls, d: dict) -> "BasisSystem":
        return make_basis(d["kind"], int(d["K"]), int(d.get("order", 4)))


def _fourier_eval(v: np.ndarray, K: int, deriv: int) -> np.ndarray:
    out = np.empty((v.size, K))
    out[:, 0] = 1.0 if deriv == 0 else 0.0
    for j in range(1, (K - 1) // 2 + 1):
        w = 2.0 * np.pi * j
        # d^n/dv^n sin(wv) = w^n sin(wv + n*pi/2)
        phase = deriv * np.pi / 2.0
        scale = np.sqrt(2.0) * w**deriv
        out[:, 2 * j - 1] = scale * np.sin(w * v + phase)
        out[:, 2 * j] = scale * np.cos(w * v + phase)
    return out


def make_basis(kind: str, K: int, order: int = 4) -> BasisSystem:
    """Build a basis on [0, 1]; B-splines get equally spaced interior knots."""
    return BasisSystem(kind=kind, K=int(K), order=int(order))


@dataclass(frozen=True)
class FunctionalCurve:
    basis: BasisSystem
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if c.size != self.basis.K:
            raise ValidationError(f"expected {self.basis.K} coefficients, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("curve coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, v):
        return self.basis.evaluate(v) @ self.coeffs


@dataclass(frozen=True)
class GramMatrices:
    J: np.ndarray
    R: np.ndarray


def quadrature_rule(basis: BasisSystem, quadrature_points: int = 201) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, 1].

    For B-splines the rule is split at the knots so that products of two
    basis functions (or their derivatives) are integrated exactly.
    """
    if quadrature_points < 2 * basis.K:
        raise ValidationError("quadrature_points must be >= 2*K")
    breaks = basis.breakpoints
    n_spans = breaks.size - 1
    per_span = max(int(np.ceil(quadrature_points / n_spans)), basis.order if basis.kind == "bspline" else 2)
    x, w = np.polynomial.legendre.leggauss(per_span)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    nodes = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return nodes, weights


def gram_matrices(basis: BasisSystem, quadrature_points: int = 201) -> GramMatrices:
    """Gram matrix ``J = int eta eta^T`` and roughness ``R = int eta'' eta''^T``."""
    nodes, weights = quadrature_rule(basis, quadrature_points)
    E = basis.evaluate(nodes)
    E2 = basis.evaluate(nodes, deriv=2)
    J = (E * weights[:, None]).T @ E
    R = (E2 * weights[:, None]).T @ E2
    J = 0.5 * (J + J.T)
    R = 0.5 * (R + R.T)
    return GramMatrices(J=J, R=R)


_GRAM_CACHE: dict = {}


def cached_gram(basis: BasisSystem) -> GramMatrices:
    key = (basis.kind, basis.K, basis.order)
    g = _GRAM_CACHE.get(key)
    if g is None:
        g = gram_matrices(basis, max(201, 2 * basis.K + 1))
        g.J.setflags(write=False)
        g.R.setflags(write=False)
        _GRAM_CACHE[key] = g
    return g


def _split_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("samples must be a sequence of (v, y) pairs")
    return arr[:, 0], arr[:, 1]


def _penalized_factor(E: np.ndarray, R: np.ndarray, lam: float):
    if lam < 0 or not np.isfinite(lam):
        raise ValidationError("smoothing parameter must be a finite nonnegative number")
    A = E.T @ E + lam * R
    try:
        cf = spl.cho_factor(A, lower=True, check_finite=True)
    except spl.LinAlgError as exc:
        raise RankError("penalized normal matrix is not positive definite") from exc
    d = np.abs(np.diag(cf[0]))
    if d.min() <= 1e-7 * d.max():
        raise RankError(
            f"penalized normal matrix is numerically singular (lambda={lam:g}); "
            "need more distinct sample points or lambda > 0"
        )
    return cf


def smooth_coefficients(v: np.ndarray, Y: np.ndarray, basis: BasisSystem, lam: float) -> np.ndarray:
    """Penalized least-squares coefficients for one or more curves sharing abscissae.

    ``Y`` is ``(n,)`` or ``(n, m)``; the result has shape ``(K,)`` or ``(K, m)``.
    """
    v = np.asarray(v, dtype=float)
    if lam == 0 and np.unique(v).size < basis.K:
        raise RankError(
            f"lambda=0 needs at least K={basis.K} distinct sample points, got {np.unique(v).size}"
        )
    E = basis.evaluate(v)
    cf = _penalized_factor(E, cached_gram(basis).R, lam)
    return spl.cho_solve(cf, E.T @ Y)


def smooth_curve(samples, basis: BasisSystem, lam: float) -> FunctionalCurve:
    """Fit ``min sum (y - yhat)^2 + lam * int yhat''^2`` over the basis span."""
    v, y = _split_samples(samples)
    return FunctionalCurve(basis, smooth_coefficients(v, y, basis, lam))


def gcv_score(v: np.ndarray, Y: np.ndarray, basis: BasisSystem, lam: float, E=None, R=None) -> float:
    """GCV(lam) = n * SSE / (n - tr H)^2; ``Y`` may hold several curves as columns.

    With several columns the scores of the individual curves are summed.
    """
    E = basis.evaluate(v) if E is None else E
    R = cached_gram(basis).R if R is None else R
    Y = np.asarray(Y, dtype=float)
    Y2 = Y[:, None] if Y.ndim == 1 else Y
    n = E.shape[0]
    try:
        cf = _penalized_factor(E, R, lam)
    except RankError:
        return np.inf
    C = spl.cho_solve(cf, E.T @ Y2)
    resid = Y2 - E @ C
    tr_h = np.trace(spl.cho_solve(cf, E.T @ E))
    denom = (n - tr_h) ** 2
    if denom <= 1e-12 * n * n:
        return np.inf
    sse = np.sum(resid**2, axis=0)
    return float(np.sum(n * sse / denom))


def argmin_prefer_larger(grid: np.ndarray, values: np.ndarray, scale: float) -> int:
    """Index of the minimum; values within a relative 1e-10 tie and go to the larger grid value."""
    finite = np.isfinite(values)
    if not finite.any():
        raise RankError("all GCV values are nonfinite")
    gmin = values[finite].min()
    tol = 1e-10 * (abs(gmin) + scale)
    cands = np.flatnonzero(finite & (values <= gmin + tol))
    return int(cands[np.argmax(grid[cands])])


def gcv_select(samples, basis: BasisSystem, lambda_grid: Sequence[float]) -> tuple[float, list[float]]:
    """Pick the smoothing parameter from ``lambda_grid`` minimizing GCV.

    ``samples`` is either a single ``(v, y)`` sequence or a list of them (one per
    curve); in the latter case per-curve GCV scores are summed, so one lambda is
    shared by all curves.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("lambda grid is empty")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ValidationError("lambda grid values must be finite and nonnegative")
    groups = _as_groups(samples)
    R = cached_gram(basis).R
    prepared = []
    scale = 0.0
    for v, y in groups:
        prepared.append((basis.evaluate(v), v, y))
        scale += float(np.mean(y**2))
    values = np.zeros(grid.size)
    for i, lam in enumerate(grid):
        values[i] = sum(gcv_score(v, y, basis, lam, E=E, R=R) for E, v, y in prepared)
    best = argmin_prefer_larger(grid, values, scale)
    return float(grid[best]), values.tolist()


def _as_groups(samples) -> list[tuple[np.ndarray, np.ndarray]]:
    if len(samples) and np.ndim(samples[0]) == 2:
        return [_split_samples(s) for s in samples]
    return [_split_samples(samples)]


def inner_product(a: FunctionalCurve, b: FunctionalCurve) -> float:
    """L2 inner product of two curves, ``z_a^T J z_b``."""
    if a.basis != b.basis:
        raise ValidationError("curves live in different bases")
    return float(a.coeffs @ cached_gram(a.basis).J @ b.coeffs)


def eval_curve(curve: FunctionalCurve, v) -> np.ndarray | float:
    out = curve(v)
    return float(out[0]) if np.ndim(v) == 0 else out
