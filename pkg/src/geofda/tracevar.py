"""Trace-variogram estimation and parametric variogram models.

The empirical estimators work on coefficient matrices: the integral of a
squared curve difference is ``(z_i - z_j)^T J (z_i - z_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import FitError, ValidationError
from .spatial import DistanceBins

FAMILIES = ("exponential", "spherical", "gaussian", "matern")
MATERN_NU = (0.5, 1.5, 2.5)
WEIGHTINGS = ("ols", "counts", "cressie")


def matern_correlation(d: np.ndarray, nu: float) -> np.ndarray:
    """Closed-form Matern correlation for half-integer smoothness."""
    if nu == 0.5:
        return np.exp(-d)
    if nu == 1.5:
        return (1.0 + d) * np.exp(-d)
    if nu == 2.5:
        return (1.0 + d + d * d / 3.0) * np.exp(-d)
    raise ValidationError(f"unsupported Matern smoothness {nu}; use one of {MATERN_NU}")


@dataclass(frozen=True)
class VariogramModel:
    """Isotropic variogram ``gamma(h) = c0 + c1 * (1 - rho(h / a))`` for ``h > 0``.

    ``range`` is the scale parameter ``a``, not the effective range.
    """

    family: str
    nugget: float = 0.0
    partial_sill: float = 1.0
    range: float = 1.0
    smoothness: float = 1.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown variogram family {self.family!r}")
        if not (self.nugget >= 0 and self.partial_sill >= 0):
            raise ValidationError("nugget and partial sill must be nonnegative")
        if not self.range > 0:
            raise ValidationError("range must be positive")
        if self.family == "matern" and self.smoothness not in MATERN_NU:
            raise ValidationError(f"unsupported Matern smoothness {self.smoothness}")

    @property
    def sill(self) -> float:
        return self.nugget + self.partial_sill

    def correlation(self, h) -> np.ndarray:
        d = np.asarray(h, dtype=float) / self.range
        if self.family == "exponential":
            return np.exp(-d)
        if self.family == "gaussian":
            return np.exp(-d * d)
        if self.family == "spherical":
            dc = np.minimum(d, 1.0)
            return np.where(d < 1.0, 1.0 - 1.5 * dc + 0.5 * dc**3, 0.0)
        return matern_correlation(d, self.smoothness)

    def gamma(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        if np.any(h < 0):
            raise ValidationError("distances must be nonnegative")
        out = self.nugget + self.partial_sill * (1.0 - self.correlation(h))
        return np.where(h > 0, out, 0.0)

    def covariance(self, h) -> np.ndarray:
        """Trace-covariogram implied by the model: ``sill - gamma(h)``."""
        return self.sill - self.gamma(h)

    def gamma_matrix(self, dist: np.ndarray) -> np.ndarray:
        """Variogram between distinct observations.

        Off-diagonal zero distances (coincident sites) take the limit value
        ``c0`` rather than ``gamma(0) = 0``; the diagonal is zero.
        """
        dist = np.asarray(dist, dtype=float)
        G = self.nugget + self.partial_sill * (1.0 - self.correlation(dist))
        np.fill_diagonal(G, 0.0)
        return G

    def covariance_matrix(self, dist: np.ndarray) -> np.ndarray:
        dist = np.asarray(dist, dtype=float)
        C = self.partial_sill * self.correlation(dist)
        C[np.diag_indices_from(C)] += self.nugget
        return C

    def as_dict(self) -> dict:
        d = {
            "family": self.family,
            "nugget": self.nugget,
            "partial_sill": self.partial_sill,
            "range": self.range,
        }
        if self.family == "matern":
            d["smoothness"] = self.smoothness
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VariogramModel":
        allowed = {"family", "nugget", "partial_sill", "range", "smoothness"}
        extra = set(d) - allowed
        if extra:
            raise ValidationError(f"unknown variogram model keys: {sorted(extra)}")
        return cls(**{k: (v if k == "family" else float(v)) for k, v in d.items()})


def model_gamma(model: VariogramModel, h) -> np.ndarray | float:
    out = model.gamma(h)
    return float(out) if np.ndim(h) == 0 else out


@dataclass(frozen=True)
class EmpiricalTraceVariogram:
    centers: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    kind: str = "variogram"
    zero_value: Optional[float] = None

    def __len__(self):
        return self.centers.size


def _pair_products(Z: np.ndarray, J: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    ZJ = Z @ J
    return np.einsum("pk,pk->p", ZJ[i], Z[j])


def _binned_mean(values: np.ndarray, bins_idx: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.bincount(bins_idx, minlength=m)
    sums = np.bincount(bins_idx, weights=values, minlength=m)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts, counts


def _lags(bins: DistanceBins, lag: str) -> np.ndarray:
    if lag == "mean":
        return bins.mean_distance
    if lag == "midpoint":
        return bins.centers
    raise ValidationError("lag must be 'mean' or 'midpoint'")


def empirical_trace_variogram(ds, bins: DistanceBins, lag: str = "mean") -> EmpiricalTraceVariogram:
    """Half the mean integrated squared difference of curves per distance class.

    Empty classes are dropped.
    """
    i, j, b = bins.pair_bin_index()
    Q = ds.Z @ ds.J
    sq = np.einsum("ik,ik->i", Q, ds.Z)
    cross = _pair_products(ds.Z, ds.J, i, j)
    diffs = np.maximum(sq[i] + sq[j] - 2.0 * cross, 0.0)
    means, counts = _binned_mean(diffs, b, bins.m)
    keep = counts > 0
    return EmpiricalTraceVariogram(
        centers=_lags(bins, lag)[keep],
        values=0.5 * means[keep],
        counts=counts[keep],
        kind="variogram",
    )


def empirical_trace_covariogram(ds_centered, bins: DistanceBins, lag: str = "mean") -> EmpiricalTraceVariogram:
    """Mean integrated cross product of curves per distance class.

    ``zero_value`` carries the lag-zero estimate ``n^-1 sum <x_i, x_i>``.
    """
    i, j, b = bins.pair_bin_index()
    Z, J = ds_centered.Z, ds_centered.J
    cross = _pair_products(Z, J, i, j)
    means, counts = _binned_mean(cross, b, bins.m)
    keep = counts > 0
    zero = float(np.mean(np.einsum("ik,kl,il->i", Z, J, Z)))
    return EmpiricalTraceVariogram(
        centers=_lags(bins, lag)[keep],
        values=means[keep],
        counts=counts[keep],
        kind="covariogram",
        zero_value=zero,
    )


# --- fitting -----------------------------------------------------------------

N_STARTS = 8


def parameter_box(emp: EmpiricalTraceVariogram) -> np.ndarray:
    """Bounds for ``(c0, c1, a)``."""
    gmax = float(np.max(emp.values))
    scale = 4.0 * gmax if gmax > 0 else 1.0
    hmin, hmax = float(np.min(emp.centers)), float(np.max(emp.centers))
    return np.array([[0.0, scale], [0.0, scale], [hmin / 10.0, 4.0 * hmax]])


def _weights(emp: EmpiricalTraceVariogram, weighting: str) -> np.ndarray:
    if weighting == "ols":
        return np.ones(len(emp))
    if weighting in ("counts", "cressie"):
        return emp.counts.astype(float)
    raise ValidationError(f"unknown weighting {weighting!r}; use one of {WEIGHTINGS}")


def weighted_sse(model: VariogramModel, emp: EmpiricalTraceVariogram, weighting: str = "counts") -> float:
    g = model.gamma(emp.centers)
    w = _weights(emp, weighting)
    if weighting == "cressie":
        w = w / np.maximum(g, 1e-12 * max(float(np.max(emp.values)), 1e-300)) ** 2
    return float(np.sum(w * (emp.values - g) ** 2))


def multistart_points(emp: EmpiricalTraceVariogram, seed: int = 0) -> np.ndarray:
    """Deterministic starting points in the unit cube of the parameter box.

    The first start is a moment-style guess; the rest are Philox draws.
    """
    box = parameter_box(emp)
    width = box[:, 1] - box[:, 0]
    v = emp.values
    c0 = max(float(v[0]), 0.0)
    c1 = max(float(v.max()) - c0, 0.0)
    a = float(emp.centers.max()) / 3.0
    first = (np.array([c0, c1, a]) - box[:, 0]) / width
    rng = np.random.Generator(np.random.Philox(seed))
    rest = rng.uniform(0.02, 0.98, size=(N_STARTS - 1, 3))
    rest[:, 0] *= 0.5
    return np.vstack([np.clip(first, 0.0, 1.0), rest])


def _from_unit(u: np.ndarray, box: np.ndarray) -> np.ndarray:
    return box[:, 0] + np.clip(u, 0.0, 1.0) * (box[:, 1] - box[:, 0])


def fit_variogram(
    emp: EmpiricalTraceVariogram,
    family: str,
    weighting: str = "counts",
    smoothness: float = 1.5,
    seed: int = 0,
) -> tuple[VariogramModel, float]:
    """Weighted least-squares fit of a variogram family with nugget.

    Bounded Nelder-Mead from ``N_STARTS`` deterministic starts; the best
    finite objective wins (earliest start on ties). A pure-nugget model is
    preferred when it fits as well as the best start.
    """
    if family not in FAMILIES:
        raise ValidationError(f"unknown variogram family {family!r}")
    _weights(emp, weighting)
    if len(emp) < 4:
        raise ValidationError(f"fitting needs at least 4 nonempty bins, got {len(emp)}")
    if emp.kind != "variogram":
        raise ValidationError("fit_variogram expects an empirical variogram")
    box = parameter_box(emp)
    lo, width = box[:, 0], box[:, 1] - box[:, 0]
    h, g_hat = emp.centers, emp.values
    w = _weights(emp, weighting)
    floor = 1e-12 * max(float(np.max(g_hat)), 1e-300)
    proto = VariogramModel(family, 0.0, 1.0, 1.0, smoothness)

    def build(theta):
        return VariogramModel(family, float(theta[0]), float(theta[1]), float(theta[2]), smoothness)

    def objective(u):
        c0, c1, a = lo + np.clip(u, 0.0, 1.0) * width
        g = c0 + c1 * (1.0 - proto.correlation(h / a))
        ww = w / np.maximum(g, floor) ** 2 if weighting == "cressie" else w
        val = float(np.sum(ww * (g_hat - g) ** 2))
        return val if np.isfinite(val) else np.inf

    norm = float(np.sum(w * g_hat**2)) or 1.0

    def scaled(u):
        return objective(u) / norm

    bounds = [(0.0, 1.0)] * 3
    coarse = {"xatol": 1e-6, "fatol": 1e-12, "maxfev": 1500}
    fine = {"xatol": 1e-11, "fatol": 1e-18, "maxfev": 4000}
    best_u, best_val = None, np.inf
    for u0 in multistart_points(emp, seed):
        res = minimize(scaled, u0, method="Nelder-Mead", bounds=bounds, options=coarse)
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_u = float(res.fun), res.x
    if best_u is not None:
        # polish the winner; restarted simplices escape stalls
        for _ in range(2):
            res = minimize(scaled, best_u, method="Nelder-Mead", bounds=bounds, options=fine)
            if res.fun <= best_val:
                best_val, best_u = float(res.fun), res.x
    best_theta = None if best_u is None else _from_unit(best_u, box)
    if best_theta is None:
        raise FitError(f"no start produced a finite objective for family {family!r}")

    model = build(best_theta)
    best_val = weighted_sse(model, emp, weighting)
    nugget_only = _pure_nugget(emp, weighting, family, smoothness, best_theta[2])
    sse_nugget = weighted_sse(nugget_only, emp, weighting)
    if sse_nugget <= best_val + 1e-10 * (abs(best_val) + float(np.sum(emp.values**2))):
        return nugget_only, sse_nugget
    return model, best_val


def _pure_nugget(emp, weighting, family, smoothness, a) -> VariogramModel:
    w = _weights(emp, weighting)
    if weighting == "cressie" and np.sum(w * emp.values) > 0:
        # minimizer of sum w (g/c0 - 1)^2
        c0 = float(np.sum(w * emp.values**2) / np.sum(w * emp.values))
    else:
        c0 = float(np.sum(w * emp.values) / np.sum(w))
    return VariogramModel(family, max(c0, 0.0), 0.0, float(a), smoothness)


def fit_all(
    emp: EmpiricalTraceVariogram,
    families=FAMILIES,
    weighting: str = "counts",
    smoothness: float = 1.5,
    seed: int = 0,
) -> list[tuple[VariogramModel, float]]:
    """Fit several families; results sorted by SSE (stable in the given order)."""
    fits = [fit_variogram(emp, f, weighting, smoothness, seed) for f in families]
    return sorted(fits, key=lambda t: t[1])


def with_nugget(model: VariogramModel, nugget: float) -> VariogramModel:
    return replace(model, nugget=nugget)
