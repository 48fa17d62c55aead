"""Ordinary and universal kriging of curves with scalar weights.

The prediction at ``s0`` is ``sum_i w_i x(s_i; .)``; weights come from the
trace-variogram system with an unbiasedness row of ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spl

from .basis import FunctionalCurve
from .dataset import SpatialFunctionalDataset
from .errors import NumericalError, SingularSystemError, ValidationError
from .moments import DriftSpec, iterative_gls_drift
from .tracevar import VariogramModel


@dataclass(frozen=True)
class KrigingSolution:
    target: np.ndarray
    weights: np.ndarray
    multiplier: float
    prediction: FunctionalCurve
    trace_variance: float


class OrdinaryKriging:
    """Factorized ordinary-kriging system for one dataset and model.

    Several targets can be solved against one factorization.
    """

    def __init__(self, ds: SpatialFunctionalDataset, model: VariogramModel):
        self.ds = ds
        self.model = model
        n = ds.n
        if model.nugget == 0:
            dup = ds.locs.duplicate_pairs()
            if dup:
                i, j = dup[0]
                raise SingularSystemError(
                    f"kriging matrix is singular: sites {i} and {j} coincide at "
                    f"{tuple(ds.locs.points[i])} and the model has no nugget",
                    pair=(i, j),
                )
        # weights are invariant to scaling gamma; working in units of the sill
        # keeps tiny-sill models (e.g. a machine-epsilon nugget) well conditioned
        self._scale = model.sill if model.sill > 0 else 1.0
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = model.gamma_matrix(ds.distances) / self._scale
        A[:n, n] = 1.0
        A[n, :n] = 1.0
        self._A = A
        try:
            self._lu = spl.lu_factor(A)
        except (spl.LinAlgError, ValueError) as exc:
            raise SingularSystemError("kriging matrix is singular") from exc
        piv = np.abs(np.diag(self._lu[0]))
        if piv.min() <= 1e-13 * piv.max():
            raise SingularSystemError("kriging matrix is numerically singular")

    def solve(self, targets) -> list[KrigingSolution]:
        T = np.asarray(targets, dtype=float).reshape(-1, 2)
        n = self.ds.n
        d0 = np.sqrt(((self.ds.locs.points[:, None, :] - T[None, :, :]) ** 2).sum(-1))
        g0 = self.model.gamma(d0) / self._scale
        rhs = np.vstack([g0, np.ones((1, T.shape[0]))])
        sol = spl.lu_solve(self._lu, rhs)
        # one step of iterative refinement keeps the weight sum at roundoff level
        sol += spl.lu_solve(self._lu, rhs - self._A @ sol)
        out = []
        for t in range(T.shape[0]):
            w, mu = sol[:n, t], float(sol[n, t])
            var = float(w @ g0[:, t] + mu)
            if var < 0:
                if var < -1e-10:
                    raise NumericalError(
                        f"negative kriging variance {var:g}; the variogram model is not valid"
                    )
                var = 0.0
            mu, var = mu * self._scale, var * self._scale
            pred = FunctionalCurve(self.ds.basis, w @ self.ds.Z)
            out.append(KrigingSolution(T[t].copy(), w, mu, pred, var))
        return out


def ordinary_kriging(ds: SpatialFunctionalDataset, model: VariogramModel, s0) -> KrigingSolution:
    return OrdinaryKriging(ds, model).solve(s0)[0]


def universal_kriging(
    ds: SpatialFunctionalDataset,
    spec: DriftSpec,
    s0,
    family: str = "exponential",
    **gls_kwargs,
) -> tuple[KrigingSolution, DriftSpec, VariogramModel]:
    """Drift by iterative GLS, then ordinary kriging of the residual curves.

    The returned solution's prediction is drift at ``s0`` plus the kriged
    residual; weights and variance are those of the residual system.
    """
    result = iterative_gls_drift(ds, spec, family, **gls_kwargs)
    drift, model = result.drift, result.model
    resid = ds.with_coefficients(ds.Z - drift.evaluate(ds.locs.points))
    sol = ordinary_kriging(resid, model, s0)
    trend = drift.evaluate(np.asarray(s0, dtype=float).reshape(1, 2))[0]
    pred = FunctionalCurve(ds.basis, trend + sol.prediction.coeffs)
    return (
        KrigingSolution(sol.target, sol.weights, sol.multiplier, pred, sol.trace_variance),
        drift,
        model,
    )


def loo_validate(ds: SpatialFunctionalDataset, model: VariogramModel) -> np.ndarray:
    """Leave-one-out L2 prediction errors, one per site."""
    if ds.n < 2:
        raise ValidationError("leave-one-out needs at least two sites")
    J = ds.J
    errs = np.empty(ds.n)
    for i in range(ds.n):
        keep = np.delete(np.arange(ds.n), i)
        sol = ordinary_kriging(ds.subset(keep), model, ds.locs.points[i])
        d = sol.prediction.coeffs - ds.Z[i]
        errs[i] = np.sqrt(max(float(d @ J @ d), 0.0))
    return errs
