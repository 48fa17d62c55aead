from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .basis import BasisSystem, FunctionalCurve, cached_gram
from .errors import ValidationError
from .spatial import LocationSet, pairwise_distances


@dataclass(frozen=True)
class SpatialFunctionalDataset:
    """Curves observed at planar locations, stored as an ``n x K`` coefficient matrix.

    Row ``i`` of ``Z`` holds the basis coefficients of the curve at ``locs.points[i]``.
    """

    locs: LocationSet
    basis: BasisSystem
    Z: np.ndarray

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape != (self.locs.n, self.basis.K):
            raise ValidationError(
                f"coefficient matrix must be {self.locs.n} x {self.basis.K}, got {Z.shape}"
            )
        if not np.all(np.isfinite(Z)):
            raise ValidationError("coefficients must be finite")
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)

    @classmethod
    def from_curves(cls, locs: LocationSet, curves) -> "SpatialFunctionalDataset":
        curves = list(curves)
        if len(curves) != locs.n:
            raise ValidationError("need one curve per location")
        basis = curves[0].basis
        if any(c.basis != basis for c in curves):
            raise ValidationError("all curves must share one basis")
        return cls(locs, basis, np.vstack([c.coeffs for c in curves]))

    @property
    def n(self) -> int:
        return self.locs.n

    @property
    def curves(self) -> list[FunctionalCurve]:
        return [FunctionalCurve(self.basis, z) for z in self.Z]

    @property
    def J(self) -> np.ndarray:
        return cached_gram(self.basis).J

    @cached_property
    def distances(self) -> np.ndarray:
        return pairwise_distances(self.locs)

    def with_coefficients(self, Z: np.ndarray) -> "SpatialFunctionalDataset":
        return SpatialFunctionalDataset(self.locs, self.basis, Z)

    def subset(self, idx) -> "SpatialFunctionalDataset":
        idx = np.asarray(idx)
        return SpatialFunctionalDataset(LocationSet(self.locs.points[idx]), self.basis, self.Z[idx])

    def centered(self) -> "SpatialFunctionalDataset":
        return self.with_coefficients(self.Z - self.Z.mean(axis=0))
