"""Mean, drift and covariance estimation for spatial functional data.

All operators are reduced to coefficient space. A kernel ``eta(u)^T S eta(v)``
is stored as the symmetric ``K x K`` matrix ``S``; the operator it induces on
coefficient vectors is ``S @ J``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as spl

from .basis import FunctionalCurve
from .dataset import SpatialFunctionalDataset
from .errors import FitError, RankError, SingularSystemError, ValidationError
from .spatial import DistanceBins, bin_pairs
from .tracevar import VariogramModel, empirical_trace_variogram, fit_variogram

log = logging.getLogger(__name__)

__all__ = [
    "SpatialFunctionalDataset",
    "DriftSpec",
    "CoefficientCovariance",
    "GLSResult",
    "pointwise_mean",
    "lagrange_weighted_mean",
    "ols_drift",
    "ols_drift_kronecker",
    "gls_drift",
    "iterative_gls_drift",
    "empirical_cov_operator",
    "empirical_vario_operator",
    "gaussian_loglik",
    "eigenpairs",
]


def pointwise_mean(ds: SpatialFunctionalDataset) -> FunctionalCurve:
    """Unweighted mean curve (assumes spatially uncorrelated errors)."""
    return FunctionalCurve(ds.basis, ds.Z.mean(axis=0))


def lagrange_weighted_mean(ds: SpatialFunctionalDataset, trace_cov: np.ndarray):
    """Mean curve as a weighted sum of observed curves.

    Solves ``sum_i w_i sigma(s_i, s_j) - lambda = 0`` for every ``j`` together
    with ``sum_i w_i = 1``.

    Returns
    -------
    weights : ndarray
    multiplier : float
    mean : FunctionalCurve
    """
    C = np.asarray(trace_cov, dtype=float)
    n = ds.n
    if C.shape != (n, n):
        raise ValidationError(f"trace covariance must be {n} x {n}")
    if not np.allclose(C, C.T, rtol=1e-10, atol=1e-12 * np.abs(C).max()):
        raise ValidationError("trace covariance must be symmetric")
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = C
    A[:n, n] = -1.0
    A[n, :n] = 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    sol = _solve_augmented(A, rhs)
    w, lam = sol[:n], float(sol[n])
    return w, lam, FunctionalCurve(ds.basis, w @ ds.Z)


def _solve_augmented(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = spl.lu_factor(A, check_finite=True)
    except (spl.LinAlgError, ValueError) as exc:
        raise SingularSystemError("augmented system is singular") from exc
    piv = np.abs(np.diag(lu[0]))
    if piv.min() <= 1e-13 * piv.max():
        raise SingularSystemError("augmented system is singular")
    return spl.lu_solve(lu, rhs)


# --- drift -------------------------------------------------------------------

_NAMED_TERMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "1": lambda s: np.ones(s.shape[0]),
    "s1": lambda s: s[:, 0],
    "s2": lambda s: s[:, 1],
    "s1*s2": lambda s: s[:, 0] * s[:, 1],
    "s1^2": lambda s: s[:, 0] ** 2,
    "s2^2": lambda s: s[:, 1] ** 2,
}

Term = Union[str, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class DriftSpec:
    """Large-scale model ``mu(s; v) = sum_l a_l(s) f_l(v)`` with ``a_0 = 1``.

    ``terms`` holds names from ``"1", "s1", "s2", "s1*s2", "s1^2", "s2^2"`` or
    callables mapping an ``(n, 2)`` array of locations to ``n`` values. ``B``
    is the ``(L+1) x K`` coefficient matrix of the drift curves once fitted.
    """

    terms: tuple = ("1",)
    B: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms or terms[0] != "1":
            raise ValidationError("the first drift term must be the constant '1'")
        for t in terms:
            if isinstance(t, str) and t not in _NAMED_TERMS:
                raise ValidationError(f"unknown drift term {t!r}; known: {sorted(_NAMED_TERMS)}")
            if not isinstance(t, str) and not callable(t):
                raise ValidationError("drift terms must be names or callables")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def quadratic(cls) -> "DriftSpec":
        return cls(("1", "s1", "s2", "s1*s2", "s1^2", "s2^2"))

    @property
    def names(self) -> list[str]:
        return [t if isinstance(t, str) else getattr(t, "__name__", "custom") for t in self.terms]

    def design(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        cols = [(_NAMED_TERMS[t] if isinstance(t, str) else t)(pts) for t in self.terms]
        return np.column_stack([np.broadcast_to(np.asarray(c, dtype=float), (pts.shape[0],)) for c in cols])

    def evaluate(self, points) -> np.ndarray:
        """Drift coefficient vectors at ``points`` (rows)."""
        if self.B is None:
            raise ValidationError("drift has not been fitted")
        return self.design(points) @ self.B

    def fitted(self, B: np.ndarray) -> "DriftSpec":
        B = np.array(B, dtype=float)
        B.setflags(write=False)
        return replace(self, B=B)


def _checked_design(ds: SpatialFunctionalDataset, spec: DriftSpec) -> np.ndarray:
    A = spec.design(ds.locs.points)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankError(f"drift design matrix is rank deficient ({A.shape[1]} terms, n={ds.n})")
    return A


def ols_drift(ds: SpatialFunctionalDataset, spec: DriftSpec) -> DriftSpec:
    """``B = (A^T A)^-1 A^T Z`` solved by QR."""
    A = _checked_design(ds, spec)
    B, *_ = np.linalg.lstsq(A, ds.Z, rcond=None)
    return spec.fitted(B)


def ols_drift_kronecker(ds: SpatialFunctionalDataset, spec: DriftSpec, Sigma_inv=None) -> DriftSpec:
    """Drift from the vectorized normal equation with the Gram matrix.

    Solves ``(J^T kron A^T W A) vec(B) = vec(A^T W Z J)``; ``W`` is the
    identity for OLS or an inverse covariance for GLS. Only practical for
    small ``(L+1) * K``; used as an independent route to :func:`ols_drift`.
    """
    A = _checked_design(ds, spec)
    W = np.eye(ds.n) if Sigma_inv is None else np.asarray(Sigma_inv, dtype=float)
    J = ds.J
    lhs = np.kron(J.T, A.T @ W @ A)
    rhs = (A.T @ W @ ds.Z @ J).ravel(order="F")
    vecB = np.linalg.solve(lhs, rhs)
    return spec.fitted(vecB.reshape((A.shape[1], ds.basis.K), order="F"))


def gls_drift(ds: SpatialFunctionalDataset, spec: DriftSpec, Sigma: np.ndarray) -> DriftSpec:
    """``B = (A^T S^-1 A)^-1 A^T S^-1 Z`` via a Cholesky whitening of ``S``."""
    A = _checked_design(ds, spec)
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.shape != (ds.n, ds.n):
        raise ValidationError(f"Sigma must be {ds.n} x {ds.n}")
    try:
        L = spl.cholesky(Sigma, lower=True)
    except spl.LinAlgError as exc:
        raise SingularSystemError("GLS covariance is not positive definite") from exc
    Aw = spl.solve_triangular(L, A, lower=True)
    Zw = spl.solve_triangular(L, ds.Z, lower=True)
    B, *_ = np.linalg.lstsq(Aw, Zw, rcond=None)
    return spec.fitted(B)


@dataclass(frozen=True)
class GLSResult:
    drift: DriftSpec
    model: VariogramModel
    iterations: int
    converged: bool
    status: str = "converged"
    history: tuple = ()

    def __iter__(self):
        return iter((self.drift, self.model, self.iterations))


def _relative_change(B_new: np.ndarray, B_old: np.ndarray) -> float:
    denom = max(np.linalg.norm(B_old), np.finfo(float).tiny)
    return float(np.linalg.norm(B_new - B_old) / denom)


def residual_model(
    ds: SpatialFunctionalDataset,
    residuals: np.ndarray,
    family: str,
    bins: DistanceBins,
    weighting: str = "counts",
) -> VariogramModel:
    """Fit a variogram with nugget to residual curves.

    Identically zero residuals give a pure-nugget model with nugget = machine
    epsilon so that the implied covariance stays invertible.
    """
    res_ds = ds.with_coefficients(residuals)
    emp = empirical_trace_variogram(res_ds, bins)
    eps = np.finfo(float).eps
    if len(emp) == 0 or np.max(emp.values) <= eps:
        return VariogramModel(family, eps, 0.0, float(bins.centers[-1]))
    model, _ = fit_variogram(emp, family, weighting)
    if model.sill <= 0:
        model = replace(model, nugget=eps)
    return model


def iterative_gls_drift(
    ds: SpatialFunctionalDataset,
    spec: DriftSpec,
    family: str = "exponential",
    max_iter: int = 10,
    tol: float = 1e-4,
    n_bins: int = 15,
    max_fraction: float = 0.5,
    weighting: str = "counts",
) -> GLSResult:
    """Alternate drift fits and residual variogram fits.

    Iteration 1 is the OLS drift. Each further iteration fits a variogram with
    nugget to the current residuals, builds the implied covariance at the
    pairwise distances and refits the drift by GLS. Stops when the relative
    Frobenius change of ``B`` falls below ``tol`` or after ``max_iter`` drift
    estimates. Non-convergence is reported, not raised. If a variogram fit
    fails mid-loop the last stable iterate is returned with a status flag;
    a failure at the first fit propagates.
    """
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if not tol > 0:
        raise ValidationError("tol must be positive")
    bins = bin_pairs(ds.distances, n_bins, max_fraction)
    A = _checked_design(ds, spec)
    drift = ols_drift(ds, spec)
    model: Optional[VariogramModel] = None
    history = []
    iterations = 1
    converged = False
    status = "max_iter"
    while iterations < max_iter:
        resid = ds.Z - A @ drift.B
        try:
            new_model = residual_model(ds, resid, family, bins, weighting)
        except FitError:
            if model is None:
                raise
            status = "fit_failed"
            log.warning("variogram fit failed at iteration %d; keeping last iterate", iterations + 1)
            break
        Sigma = new_model.covariance_matrix(ds.distances)
        try:
            new_drift = gls_drift(ds, spec, Sigma)
        except SingularSystemError:
            if model is None:
                raise
            status = "gls_failed"
            break
        iterations += 1
        change = _relative_change(new_drift.B, drift.B)
        history.append(change)
        drift, model = new_drift, new_model
        if change < tol:
            converged, status = True, "converged"
            break
    if model is None:
        model = residual_model(ds, ds.Z - A @ drift.B, family, bins, weighting)
    return GLSResult(drift, model, iterations, converged, status, tuple(history))


# --- empirical operators -----------------------------------------------------


@dataclass(frozen=True)
class CoefficientCovariance:
    """Per-distance-class ``K x K`` kernel coefficient matrices.

    ``matrices[j]`` is NaN-filled where ``missing[j]`` is set (empty class).
    ``zero`` is the lag-zero matrix (``None`` for the variogram form).
    """

    matrices: np.ndarray
    missing: np.ndarray
    zero: Optional[np.ndarray]
    bins: DistanceBins
    kind: str = "covariance"
    basis: object = None

    def kernel(self, j: int, u, v) -> np.ndarray:
        """Kernel estimate ``eta(u)^T S_j eta(v)`` on the grid ``u x v``; ``j=-1`` is lag zero."""
        S = self.zero if j == -1 else self.matrices[j]
        if S is None:
            raise ValidationError("no lag-zero matrix for this estimator")
        return self.basis.evaluate(u) @ S @ self.basis.evaluate(v).T

    def trace(self, J: np.ndarray) -> np.ndarray:
        """Diagonal integral of each kernel, ``tr(S_j J)``."""
        return np.einsum("jkl,lk->j", self.matrices, J)


def _accumulate(Z: np.ndarray, bins: DistanceBins, pair_fn) -> tuple[np.ndarray, np.ndarray]:
    K = Z.shape[1]
    out = np.full((bins.m, K, K), np.nan)
    missing = bins.counts == 0
    for j, pairs in enumerate(bins.pairs):
        if len(pairs) == 0:
            continue
        out[j] = pair_fn(Z[pairs[:, 0]], Z[pairs[:, 1]]) / len(pairs)
    return out, missing


def empirical_cov_operator(ds_centered: SpatialFunctionalDataset, bins: DistanceBins) -> CoefficientCovariance:
    """Symmetrized mean of ``z_i z_j^T`` per distance class, plus lag zero."""

    def sym_cross(Zi, Zj):
        M = Zi.T @ Zj
        return 0.5 * (M + M.T)

    mats, missing = _accumulate(ds_centered.Z, bins, sym_cross)
    Z = ds_centered.Z
    zero = Z.T @ Z / ds_centered.n
    return CoefficientCovariance(mats, missing, zero, bins, "covariance", ds_centered.basis)


def empirical_vario_operator(ds: SpatialFunctionalDataset, bins: DistanceBins) -> CoefficientCovariance:
    """Half the mean outer product of curve increments per distance class."""

    def half_sq(Zi, Zj):
        D = Zi - Zj
        return 0.5 * (D.T @ D)

    mats, missing = _accumulate(ds.Z, bins, half_sq)
    return CoefficientCovariance(mats, missing, None, bins, "variogram", ds.basis)


# --- likelihood and spectra ---------------------------------------------------


def gaussian_loglik(zk: np.ndarray, mu: float, Sigma_theta: np.ndarray) -> float:
    """Gaussian log likelihood of one coefficient field with constant mean."""
    z = np.asarray(zk, dtype=float).ravel()
    n = z.size
    try:
        L = spl.cholesky(np.asarray(Sigma_theta, dtype=float), lower=True)
    except spl.LinAlgError as exc:
        raise SingularSystemError("covariance is not positive definite") from exc
    r = spl.solve_triangular(L, z - mu, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * n * np.log(2.0 * np.pi) - 0.5 * logdet - 0.5 * r @ r)


def eigenpairs(C0: np.ndarray, J: np.ndarray, k: int, basis=None):
    """Leading eigenpairs of the operator with kernel coefficient matrix ``C0``.

    Solves ``C0 J c = lam c`` through ``J = L L^T``. Eigenfunctions are
    ``J``-orthonormal, eigenvalues nonincreasing and clamped at zero when
    they are within -1e-10.

    Returns
    -------
    values : ndarray, shape (k,)
    vectors : ndarray, shape (K, k)
        Coefficient vectors of the eigenfunctions (columns). When ``basis`` is
        given a list of :class:`FunctionalCurve` is returned instead.
    """
    C0 = np.asarray(C0, dtype=float)
    K = C0.shape[0]
    if not 1 <= k <= K:
        raise ValidationError(f"k must lie in [1, {K}]")
    try:
        L = spl.cholesky(J, lower=True)
    except spl.LinAlgError as exc:
        raise RankError("Gram matrix is not positive definite") from exc
    S = L.T @ C0 @ L
    vals, U = spl.eigh(0.5 * (S + S.T))
    order = np.argsort(vals)[::-1][:k]
    vals, U = vals[order], U[:, order]
    vals = np.where((vals < 0) & (vals >= -1e-10 * max(1.0, abs(vals[0]))), 0.0, vals)
    vecs = spl.solve_triangular(L.T, U, lower=False)
    if basis is not None:
        return vals, [FunctionalCurve(basis, vecs[:, j]) for j in range(k)]
    return vals, vecs
