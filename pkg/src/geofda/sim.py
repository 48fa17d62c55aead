"""Gaussian simulators with known ground truth.

All randomness comes from ``numpy.random.Generator(numpy.random.Philox(seed))``,
so a spec with a given seed always produces the same arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as spl

from .basis import BasisSystem, cached_gram, make_basis
from .dataset import SpatialFunctionalDataset
from .errors import NumericalError, ValidationError
from .far import SurfaceTimeSeries
from .moments import DriftSpec
from .spatial import LocationSet, pairwise_distances
from .surface import SurfaceBasis
from .tracevar import VariogramModel


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def gaussian_cholesky(C: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying once with 1e-10 diagonal jitter."""
    try:
        return spl.cholesky(C, lower=True)
    except spl.LinAlgError:
        pass
    jitter = 1e-10 * max(1.0, float(np.max(np.diag(C))))
    try:
        return spl.cholesky(C + jitter * np.eye(C.shape[0]), lower=True)
    except spl.LinAlgError as exc:
        raise NumericalError("covariance matrix is not positive definite after jitter") from exc


@dataclass(frozen=True)
class SFDSpec:
    """Spatial functional dataset generator.

    ``models`` gives one variogram per coefficient field (or a single model
    used for all of them). Fields are independent across coefficients.
    """

    seed: int
    locations: LocationSet
    basis: BasisSystem
    models: tuple
    drift: DriftSpec = field(default_factory=DriftSpec)
    B0: Optional[np.ndarray] = None

    def __post_init__(self):
        models = tuple(self.models) if isinstance(self.models, (list, tuple)) else (self.models,)
        if len(models) == 1:
            models = models * self.basis.K
        if len(models) != self.basis.K:
            raise ValidationError(f"need 1 or K={self.basis.K} coefficient models, got {len(models)}")
        object.__setattr__(self, "models", models)
        L = len(self.drift.terms)
        B0 = np.zeros((L, self.basis.K)) if self.B0 is None else np.asarray(self.B0, dtype=float)
        if B0.shape != (L, self.basis.K):
            raise ValidationError(f"B0 must be {L} x {self.basis.K}")
        object.__setattr__(self, "B0", B0)


def simulate_sfd(spec: SFDSpec) -> tuple[SpatialFunctionalDataset, dict]:
    """Draw coefficient fields ``Z_k ~ N(0, c1 rho(h) + c0 1{h=0})`` and add ``A B0``.

    Returns the dataset and a ground-truth record.
    """
    rng = make_rng(spec.seed)
    locs = spec.locations
    D = pairwise_distances(locs)
    n, K = locs.n, spec.basis.K
    noise = rng.standard_normal((n, K))
    Z = np.zeros((n, K))
    factors: dict = {}
    for k, model in enumerate(spec.models):
        if model.sill == 0:
            continue
        if model not in factors:
            factors[model] = gaussian_cholesky(model.covariance_matrix(D))
        Z[:, k] = factors[model] @ noise[:, k]
    A = spec.drift.design(locs.points)
    Z = Z + A @ spec.B0
    ds = SpatialFunctionalDataset(locs, spec.basis, Z)
    truth = {
        "seed": spec.seed,
        "basis": spec.basis.descriptor(),
        "drift_terms": spec.drift.names,
        "B0": spec.B0.tolist(),
        "models": [m.as_dict() for m in spec.models],
    }
    tv = trace_variogram_truth(spec)
    if tv is not None:
        truth["trace_variogram"] = tv.as_dict()
    return ds, truth


def trace_variogram_truth(spec: SFDSpec) -> Optional[VariogramModel]:
    """Trace-variogram ``sum_k J_kk gamma_k(h)`` when all fields share family and range."""
    first = spec.models[0]
    if any((m.family, m.range, m.smoothness) != (first.family, first.range, first.smoothness) for m in spec.models):
        return None
    Jd = np.diag(cached_gram(spec.basis).J)
    c0 = float(sum(j * m.nugget for j, m in zip(Jd, spec.models)))
    c1 = float(sum(j * m.partial_sill for j, m in zip(Jd, spec.models)))
    return VariogramModel(first.family, c0, c1, first.range, first.smoothness)


def sample_curves(ds: SpatialFunctionalDataset, v: Sequence[float], noise_sd: float, seed: int) -> np.ndarray:
    """Evaluate every curve at ``v`` and add Gaussian measurement noise.

    Returns an ``n x len(v)`` array.
    """
    E = ds.basis.evaluate(np.asarray(v, dtype=float))
    Y = ds.Z @ E.T
    if noise_sd > 0:
        Y = Y + noise_sd * make_rng(seed).standard_normal(Y.shape)
    return Y


@dataclass(frozen=True)
class FARSpec:
    """FAR(1) surface series generator.

    ``psi`` is either an ``M x M`` coefficient-space matrix or a scalar /
    length-``M`` vector of eigenvalues applied in the G-orthonormal frame of
    ``innovation_cov`` ("diagonal in the eigenbasis"). ``innovation_cov``
    defaults to a G-orthonormal frame with variances ``j^-2``.
    """

    seed: int
    basis: SurfaceBasis
    T: int
    psi: object = 0.5
    innovation_cov: Optional[np.ndarray] = None
    burn_in: int = 200
    mean: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.T < 1:
            raise ValidationError("T must be >= 1")
        if self.burn_in < 0:
            raise ValidationError("burn-in must be nonnegative")


def g_orthonormal_frame(G: np.ndarray) -> np.ndarray:
    """Columns ``V`` with ``V^T G V = I``."""
    L = spl.cholesky(G, lower=True)
    return spl.solve_triangular(L.T, np.eye(G.shape[0]), lower=False)


def far_components(spec: FARSpec) -> tuple[np.ndarray, np.ndarray]:
    """Resolve ``(Psi0, innovation covariance)`` in coefficient space."""
    G = spec.basis.mass
    M = spec.basis.M
    V = g_orthonormal_frame(G)
    if spec.innovation_cov is None:
        Sw = V @ np.diag(1.0 / np.arange(1, M + 1) ** 2) @ V.T
    else:
        Sw = np.asarray(spec.innovation_cov, dtype=float)
    psi = np.asarray(spec.psi, dtype=float)
    if psi.ndim == 2:
        Psi0 = psi
    else:
        d = np.broadcast_to(psi, (M,))
        Psi0 = V @ np.diag(d) @ V.T @ G
    if Psi0.shape != (M, M) or Sw.shape != (M, M):
        raise ValidationError(f"Psi0 and innovation covariance must be {M} x {M}")
    rho = float(np.max(np.abs(np.linalg.eigvals(Psi0))))
    if rho >= 1.0:
        raise ValidationError(f"Psi0 has spectral radius {rho:.4g} >= 1 (unstable)")
    return Psi0, Sw


def simulate_far1(spec: FARSpec) -> tuple[SurfaceTimeSeries, dict]:
    """Iterate ``x_t = Psi0 x_{t-1} + W_t`` from zero, discarding ``burn_in`` steps."""
    Psi0, Sw = far_components(spec)
    M = spec.basis.M
    Lw = gaussian_cholesky(Sw)
    rng = make_rng(spec.seed)
    total = spec.burn_in + spec.T
    W = rng.standard_normal((total, M)) @ Lw.T
    X = np.zeros((total, M))
    x = np.zeros(M)
    for t in range(total):
        x = Psi0 @ x + W[t]
        X[t] = x
    X = X[spec.burn_in:]
    mu = np.zeros(M) if spec.mean is None else np.asarray(spec.mean, dtype=float)
    sts = SurfaceTimeSeries(spec.basis, X + mu)
    truth = {
        "seed": spec.seed,
        "basis": spec.basis.descriptor(),
        "Psi0": Psi0.tolist(),
        "innovation_cov": Sw.tolist(),
        "mean": mu.tolist(),
        "burn_in": spec.burn_in,
    }
    return sts, truth


def default_sfd_spec(
    seed: int,
    nx: int = 23,
    ny: int = 23,
    spacing: float = 5.0,
    K: int = 23,
    family: str = "exponential",
    range_: float = 20.0,
    partial_sill: float = 1.0,
    nugget: float = 0.05,
) -> SFDSpec:
    """Grid dataset at the scale of a 115 x 115 km region with 23 cubic B-splines."""
    return SFDSpec(
        seed=seed,
        locations=LocationSet.grid(nx, ny, spacing),
        basis=make_basis("bspline", K, 4),
        models=(VariogramModel(family, nugget, partial_sill, range_),),
    )
