"""Surface time series and first-order functional autoregression.

Surfaces are coefficient vectors ``beta_t`` in a :class:`SurfaceBasis` with
mass matrix ``G``. An operator on surfaces is stored as the ``M x M`` matrix
acting on coefficient vectors; ``C_h = (T-h)^-1 sum beta_{t+h} beta_t^T G``
realizes ``f -> (T-h)^-1 sum <x_t, f> x_{t+h}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spl

from .errors import NumericalError, RankError, ValidationError
from .surface import Surface, SurfaceBasis


@dataclass(frozen=True)
class SurfaceTimeSeries:
    basis: SurfaceBasis
    coeffs: np.ndarray

    def __post_init__(self):
        C = np.array(self.coeffs, dtype=float)
        if C.ndim != 2 or C.shape[1] != self.basis.M or C.shape[0] < 1:
            raise ValidationError(f"series coefficients must be T x {self.basis.M} with T >= 1")
        if not np.all(np.isfinite(C)):
            raise ValidationError("series coefficients must be finite")
        C.setflags(write=False)
        object.__setattr__(self, "coeffs", C)

    @property
    def T(self) -> int:
        return self.coeffs.shape[0]

    @property
    def G(self) -> np.ndarray:
        return self.basis.mass

    def __getitem__(self, t) -> Surface:
        return Surface(self.basis, self.coeffs[t])

    def centered(self) -> "SurfaceTimeSeries":
        return SurfaceTimeSeries(self.basis, self.coeffs - self.coeffs.mean(axis=0))


def sts_mean(sts: SurfaceTimeSeries) -> Surface:
    return Surface(sts.basis, sts.coeffs.mean(axis=0))


def lag_cov(sts_centered: SurfaceTimeSeries, h: int) -> np.ndarray:
    """Empirical lag-``h`` covariance operator as a coefficient-space matrix."""
    T = sts_centered.T
    if h < 0 or h >= T:
        raise ValidationError(f"lag must satisfy 0 <= h < T (h={h}, T={T})")
    B = sts_centered.coeffs
    return (B[h:].T @ B[: T - h]) / (T - h) @ sts_centered.G


def g_spectrum(C: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of an operator ``C = S G`` self-adjoint in the G-metric.

    Returns eigenvalues (nonincreasing) and G-orthonormal eigenvector columns.
    """
    L = spl.cholesky(G, lower=True)
    S = C @ np.linalg.inv(G)
    A = L.T @ (0.5 * (S + S.T)) @ L
    vals, U = spl.eigh(0.5 * (A + A.T))
    order = np.argsort(vals)[::-1]
    vecs = spl.solve_triangular(L.T, U[:, order], lower=False)
    return vals[order], vecs


def operator_norm(A: np.ndarray, G: np.ndarray) -> float:
    """Operator norm of a coefficient-space operator in the G-metric."""
    L = spl.cholesky(G, lower=True)
    return float(np.linalg.norm(L.T @ A @ np.linalg.inv(L.T), 2))


def default_truncation(eigvals: np.ndarray, fraction: float = 0.95) -> int:
    """Smallest k whose leading eigenvalues reach ``fraction`` of the trace."""
    pos = np.clip(eigvals, 0.0, None)
    total = pos.sum()
    if total <= 0:
        raise NumericalError("lag-zero covariance is the zero operator")
    return int(np.searchsorted(np.cumsum(pos) / total, fraction - 1e-12) + 1)


def regularized_inverse(C0: np.ndarray, G: np.ndarray, mode: str, k_or_alpha) -> np.ndarray:
    """Regularized inverse of a G-self-adjoint covariance operator.

    ``mode="truncation"`` inverts on the leading ``k`` eigenfunctions only;
    ``mode="ridge"`` returns ``(C0 + alpha I)^-1``.
    """
    C0 = np.asarray(C0, dtype=float)
    M = C0.shape[0]
    if mode == "truncation":
        k = int(k_or_alpha)
        if not 1 <= k <= M:
            raise ValidationError(f"truncation level must lie in [1, {M}]")
        vals, vecs = g_spectrum(C0, G)
        if vals[0] <= 0:
            raise NumericalError("lag-zero covariance is the zero operator")
        usable = int(np.sum(vals >= 1e-12 * vals[0]))
        if k > usable:
            raise RankError(f"truncation k={k} exceeds the numerical rank {usable}")
        V = vecs[:, :k]
        return (V / vals[:k]) @ V.T @ G
    if mode == "ridge":
        alpha = float(k_or_alpha)
        if not alpha > 0:
            raise ValidationError("ridge parameter must be positive")
        return np.linalg.inv(C0 + alpha * np.eye(M))
    raise ValidationError(f"unknown regularization mode {mode!r}")


@dataclass(frozen=True)
class FAROperator:
    """Estimated FAR(1) operator with its regularization record.

    ``C0`` and ``C1`` are the lag covariance operators the estimate was built
    from; ``eigenvalues``/``eigenvectors`` summarize ``C0``.
    """

    Psi: np.ndarray
    mode: str
    param: float
    mean: np.ndarray
    C0: np.ndarray
    C1: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    basis: SurfaceBasis = field(repr=False, default=None)

    @property
    def k(self) -> int | None:
        return int(self.param) if self.mode == "truncation" else None

    def projector(self) -> np.ndarray:
        """G-orthogonal projector onto the retained eigenspace (identity for ridge)."""
        if self.mode != "truncation":
            return np.eye(self.Psi.shape[0])
        V = self.eigenvectors[:, : self.k]
        return V @ V.T @ self.basis.mass


def estimate_psi(sts: SurfaceTimeSeries, mode: str = "truncation", k_or_alpha=None, lag0: str = "matched") -> FAROperator:
    """Estimate the FAR(1) operator as ``C1 @ regularized_inverse(C0)``.

    The series is centered by its sample mean. With ``lag0="matched"`` the
    lag-zero operator is averaged over ``t = 1..T-1``, the same time points
    that enter the lag-one operator, so a noiseless recursion is recovered
    exactly; ``lag0="full"`` averages over all ``T`` surfaces.

    ``k_or_alpha=None`` with truncation picks the smallest ``k`` covering 95%
    of the trace of ``C0``. A series constant in time gets the zero operator
    with ``param=0``.
    """
    if sts.T < 3:
        raise ValidationError(f"FAR(1) estimation needs T >= 3, got T={sts.T}")
    if lag0 not in ("matched", "full"):
        raise ValidationError("lag0 must be 'matched' or 'full'")
    mean = sts.coeffs.mean(axis=0)
    X = sts.coeffs - mean
    G = sts.G
    T = sts.T
    C1 = (X[1:].T @ X[:-1]) / (T - 1) @ G
    if lag0 == "matched":
        C0 = (X[:-1].T @ X[:-1]) / (T - 1) @ G
    else:
        C0 = (X.T @ X) / T @ G
    vals, vecs = g_spectrum(C0, G)
    if not np.any(np.abs(X) > 1e-14 * max(1.0, float(np.max(np.abs(mean))))):
        # no variation in time: the only consistent operator is zero
        Z = np.zeros_like(C0)
        return FAROperator(Z, mode, 0.0, mean, C0, C1, vals, vecs, sts.basis)
    if vals[0] <= 0:
        raise NumericalError("lag-zero covariance is the zero operator")
    if k_or_alpha is None:
        if mode != "truncation":
            raise ValidationError("ridge regularization needs an explicit alpha")
        k_or_alpha = default_truncation(vals)
    Rinv = regularized_inverse(C0, G, mode, k_or_alpha)
    Psi = C1 @ Rinv
    return FAROperator(
        Psi=Psi,
        mode=mode,
        param=float(k_or_alpha),
        mean=mean,
        C0=C0,
        C1=C1,
        eigenvalues=vals,
        eigenvectors=vecs,
        basis=sts.basis,
    )


def model_lag_cov(far: FAROperator, C0: np.ndarray, h: int) -> np.ndarray:
    """Model-implied lag-``h`` covariance ``Psi^h C0``."""
    if h < 0:
        raise ValidationError("lag must be nonnegative")
    return np.linalg.matrix_power(far.Psi, h) @ np.asarray(C0, dtype=float)


def forecast_one(sts: SurfaceTimeSeries, far: FAROperator) -> Surface:
    """One-step-ahead forecast ``mean + Psi (beta_T - mean)`` with the series' own sample mean."""
    if far.basis is not None and far.basis != sts.basis:
        raise ValidationError("operator and series use different bases")
    mean = sts.coeffs.mean(axis=0)
    return Surface(sts.basis, mean + far.Psi @ (sts.coeffs[-1] - mean))
