"""Geostatistics for functional data.

Curves observed at spatial sites are held as basis coefficients. On top of
that representation the package estimates trace-variograms, kriges whole
curves, smooths scattered data into surfaces and fits FAR(1) models to
surface time series.
"""

from .basis import BasisSystem, FunctionalCurve, gcv_select, inner_product, make_basis, smooth_curve
from .dataset import SpatialFunctionalDataset
from .errors import (
    DomainError,
    FitError,
    GeofdaError,
    NumericalError,
    RankError,
    SingularSystemError,
    ValidationError,
)
from .far import FAROperator, SurfaceTimeSeries, estimate_psi, forecast_one
from .kriging import OrdinaryKriging, loo_validate, ordinary_kriging, universal_kriging
from .moments import DriftSpec, gls_drift, iterative_gls_drift, ols_drift
from .spatial import LocationSet, bin_pairs
from .surface import Surface, make_fem_mesh, make_tensor_basis, smooth_surface
from .tracevar import VariogramModel, empirical_trace_variogram, fit_all, fit_variogram

__version__ = "0.1.0"

__all__ = [
    "BasisSystem",
    "DomainError",
    "DriftSpec",
    "FAROperator",
    "FitError",
    "FunctionalCurve",
    "GeofdaError",
    "LocationSet",
    "NumericalError",
    "OrdinaryKriging",
    "RankError",
    "SingularSystemError",
    "SpatialFunctionalDataset",
    "Surface",
    "SurfaceTimeSeries",
    "ValidationError",
    "VariogramModel",
    "bin_pairs",
    "empirical_trace_variogram",
    "estimate_psi",
    "fit_all",
    "fit_variogram",
    "forecast_one",
    "gcv_select",
    "gls_drift",
    "inner_product",
    "iterative_gls_drift",
    "loo_validate",
    "make_basis",
    "make_fem_mesh",
    "make_tensor_basis",
    "ols_drift",
    "ordinary_kriging",
    "smooth_curve",
    "smooth_surface",
    "universal_kriging",
]
