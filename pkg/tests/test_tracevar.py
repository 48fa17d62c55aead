import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geofda.basis import make_basis
from geofda.dataset import SpatialFunctionalDataset
from geofda.errors import ValidationError
from geofda.spatial import DistanceBins, LocationSet, bin_pairs
from geofda.tracevar import (
    FAMILIES,
    EmpiricalTraceVariogram,
    VariogramModel,
    empirical_trace_covariogram,
    empirical_trace_variogram,
    fit_variogram,
    matern_correlation,
    model_gamma,
)

from conftest import simpson_weights


def _ds(points, Z, K=None):
    Z = np.asarray(Z, float)
    return SpatialFunctionalDataset(LocationSet(points), make_basis("bspline", K or Z.shape[1]), Z)


def _synthetic(model, h, counts=None):
    h = np.asarray(h, float)
    counts = np.full(h.size, 100) if counts is None else counts
    return EmpiricalTraceVariogram(h, model.gamma(h), np.asarray(counts), "variogram")


class TestModels:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_zero_at_origin(self, family):
        assert model_gamma(VariogramModel(family, 0.3, 1.0, 2.0), 0.0) == 0.0

    def test_exponential_sill(self):
        assert np.isclose(model_gamma(VariogramModel("exponential", 0, 1, 1), 1e3), 1.0)

    def test_matern_half_is_exponential(self):
        h = np.linspace(0, 10, 50)
        m = VariogramModel("matern", 0.1, 2.0, 1.5, smoothness=0.5)
        e = VariogramModel("exponential", 0.1, 2.0, 1.5)
        assert np.max(np.abs(m.gamma(h) - e.gamma(h))) < 1e-12

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
    def test_matern_closed_forms(self, nu):
        from scipy.special import gamma as G, kv

        d = np.linspace(0.05, 6, 40)
        # Bessel form scaled so that nu=0.5 gives exp(-d)
        ref = (2 ** (1 - nu) / G(nu)) * d**nu * kv(nu, d)
        assert np.allclose(matern_correlation(d, nu), ref, atol=1e-12)

    def test_unsupported_nu(self):
        with pytest.raises(ValidationError):
            VariogramModel("matern", 0, 1, 1, smoothness=3.0)

    def test_spherical_reaches_sill_at_range(self):
        m = VariogramModel("spherical", 0.2, 1.0, 3.0)
        assert np.isclose(m.gamma(3.0), 1.2) and np.isclose(m.gamma(7.0), 1.2)

    @given(
        st.sampled_from(FAMILIES),
        st.floats(0, 5),
        st.floats(0, 5),
        st.floats(0.1, 50),
        st.floats(0.001, 200),
    )
    @settings(max_examples=60, deadline=None)
    def test_trace_identity(self, family, c0, c1, a, h):
        m = VariogramModel(family, c0, c1, a)
        assert abs(m.gamma(h) - (m.sill - m.covariance(h))) <= 1e-12 * max(1.0, m.sill)

    @given(st.sampled_from(FAMILIES), st.floats(0, 3), st.floats(0.01, 3), st.floats(0.5, 20))
    @settings(max_examples=40, deadline=None)
    def test_gamma_monotone(self, family, c0, c1, a):
        g = VariogramModel(family, c0, c1, a).gamma(np.linspace(1e-6, 60, 200))
        assert np.all(np.diff(g) >= -1e-12)

    def test_dict_round_trip_and_unknown_key(self):
        m = VariogramModel("matern", 0.1, 1.0, 4.0, 2.5)
        assert VariogramModel.from_dict(m.as_dict()) == m
        with pytest.raises(ValidationError):
            VariogramModel.from_dict({**m.as_dict(), "bogus": 1})

    def test_invalid_parameters(self):
        with pytest.raises(ValidationError):
            VariogramModel("exponential", -1, 1, 1)
        with pytest.raises(ValidationError):
            VariogramModel("exponential", 0, 1, 0)
        with pytest.raises(ValidationError):
            VariogramModel("cubic", 0, 1, 1)


class TestEmpirical:
    def test_identical_curves(self, rng):
        z = rng.standard_normal(6)
        ds = _ds(rng.uniform(0, 10, (8, 2)), np.tile(z, (8, 1)))
        emp = empirical_trace_variogram(ds, bin_pairs(ds.distances, 4))
        assert np.all(emp.values == 0)

    def test_two_constant_curves(self):
        ds = _ds([[0, 0], [1, 0]], [np.zeros(6), np.ones(6)])
        emp = empirical_trace_variogram(ds, bin_pairs(ds.distances, 1, 1.0))
        assert np.allclose(emp.values, [0.5], atol=1e-12)

    def test_against_quadrature(self, rng):
        K = 7
        ds = _ds(rng.uniform(0, 50, (50, 2)), rng.standard_normal((50, K)))
        bins = bin_pairs(ds.distances, 10, 0.5)
        emp = empirical_trace_variogram(ds, bins)
        n = 4001
        v, w = np.linspace(0, 1, n), simpson_weights(n)
        X = ds.Z @ ds.basis.evaluate(v).T
        ref = []
        for pairs in bins.pairs:
            if len(pairs):
                d = X[pairs[:, 0]] - X[pairs[:, 1]]
                ref.append(0.5 * np.mean((d**2) @ w))
        assert np.allclose(emp.values, ref, rtol=1e-7)
        assert np.array_equal(emp.counts, bins.counts[bins.counts > 0])

    def test_covariogram_zero_curves(self):
        ds = _ds([[0, 0], [1, 0], [3, 0]], np.zeros((3, 6)))
        emp = empirical_trace_covariogram(ds, bin_pairs(ds.distances, 2))
        assert np.all(emp.values == 0) and emp.zero_value == 0

    def test_covariogram_duplicate_pair(self):
        import warnings

        z = np.array([0.3, -1.0, 2.0, 0.5, 0.1, 1.2])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ds = _ds([[0, 0], [0, 0]], [z, z])
        emp = empirical_trace_covariogram(ds, bin_pairs(ds.distances + np.array([[0, 1], [1, 0]]), 1, 1.0))
        assert np.isclose(emp.values[0], z @ ds.J @ z)
        assert np.isclose(emp.zero_value, z @ ds.J @ z)

    def test_midpoint_lags(self, rng):
        ds = _ds(rng.uniform(0, 10, (12, 2)), rng.standard_normal((12, 6)))
        bins = bin_pairs(ds.distances, 5)
        emp = empirical_trace_variogram(ds, bins, lag="midpoint")
        assert np.allclose(emp.centers, bins.centers[bins.counts > 0])
        with pytest.raises(ValidationError):
            empirical_trace_variogram(ds, bins, lag="median")


class TestFit:
    H = np.linspace(2.0, 60.0, 15)

    @pytest.mark.parametrize("weighting", ["ols", "counts", "cressie"])
    def test_noiseless_exponential_recovery(self, weighting):
        truth = VariogramModel("exponential", 0.3, 2.0, 12.0)
        m, sse = fit_variogram(_synthetic(truth, self.H), "exponential", weighting)
        got = np.array([m.nugget, m.partial_sill, m.range])
        want = np.array([0.3, 2.0, 12.0])
        assert np.all(np.abs(got - want) <= 1e-4 * want)
        assert sse < 1e-10

    @pytest.mark.parametrize("family", FAMILIES)
    def test_self_recovery_each_family(self, family):
        truth = VariogramModel(family, 0.1, 1.5, 20.0)
        m, sse = fit_variogram(_synthetic(truth, self.H), family)
        assert np.allclose(m.gamma(self.H), truth.gamma(self.H), rtol=1e-5)

    def test_flat_variogram_is_pure_nugget(self):
        emp = EmpiricalTraceVariogram(self.H, np.full(15, 0.7), np.arange(1, 16), "variogram")
        m, sse = fit_variogram(emp, "spherical")
        assert m.partial_sill == 0.0
        assert np.isclose(m.nugget, 0.7)
        assert sse < 1e-20

    def test_deterministic(self, rng):
        emp = EmpiricalTraceVariogram(self.H, 1 - np.exp(-self.H / 10) + 0.05 * rng.standard_normal(15),
                                      np.full(15, 30), "variogram")
        assert fit_variogram(emp, "matern") == fit_variogram(emp, "matern")

    def test_too_few_bins(self):
        emp = EmpiricalTraceVariogram(self.H[:3], np.ones(3), np.ones(3, int), "variogram")
        with pytest.raises(ValidationError):
            fit_variogram(emp, "exponential")

    def test_rejects_covariogram_and_bad_weighting(self):
        emp = EmpiricalTraceVariogram(self.H, np.ones(15), np.ones(15, int), "covariogram")
        with pytest.raises(ValidationError):
            fit_variogram(emp, "exponential")
        emp = EmpiricalTraceVariogram(self.H, np.ones(15), np.ones(15, int), "variogram")
        with pytest.raises(ValidationError):
            fit_variogram(emp, "exponential", weighting="huber")
