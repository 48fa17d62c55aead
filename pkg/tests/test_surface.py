import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geofda.errors import DomainError, RankError, ValidationError
from geofda.surface import (
    FEMBasis,
    Surface,
    basis_from_descriptor,
    eval_surface,
    gcv_surface,
    make_fem_mesh,
    make_tensor_basis,
    raster,
    smooth_coefficients,
    smooth_surface,
    surface_inner_product,
)


def hand_stiffness(verts):
    (x0, y0), (x1, y1), (x2, y2) = verts
    area = 0.5 * abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
    b = np.array([y1 - y2, y2 - y0, y0 - y1])
    c = np.array([x2 - x1, x0 - x2, x1 - x0])
    return (np.outer(b, b) + np.outer(c, c)) / (4 * area), area


def dense_system(basis: FEMBasis):
    N = basis.M
    K = np.zeros((N, N))
    lumped = np.zeros(N)
    for tri in basis.triangles:
        Ke, area = hand_stiffness(basis.nodes[tri])
        K[np.ix_(tri, tri)] += Ke
        lumped[tri] += area / 3
    return K, K.T @ np.diag(1 / lumped) @ K


class TestTensor:
    def test_count(self):
        assert make_tensor_basis(4, 4).M == 16

    def test_partition_of_unity(self, rng):
        b = make_tensor_basis(5, 6)
        pts = rng.uniform(0, 1, (50, 2))
        assert np.allclose(Surface(b, np.full(30, 2.5))(pts), 2.5, atol=1e-12)

    def test_bilinear_in_null_space(self):
        b = make_tensor_basis(6, 5)
        x = np.linspace(0, 1, 40)
        cx = np.linalg.lstsq(b.b1.evaluate(x), x, rcond=None)[0]
        cy = np.linalg.lstsq(b.b2.evaluate(x), x, rcond=None)[0]
        for theta in (np.kron(cx, cy), np.kron(cx, np.ones(5)) + np.kron(np.ones(6), cy)):
            assert abs(theta @ b.penalty @ theta) < 1e-10

    def test_dense_reconstruction(self, rng):
        b = make_tensor_basis(5, 7, bounds=(0, 10, -2, 2))
        theta = rng.standard_normal((5, 7))
        pts = np.column_stack([rng.uniform(0, 10, 30), rng.uniform(-2, 2, 30)])
        E1 = b.b1.evaluate(pts[:, 0] / 10)
        E2 = b.b2.evaluate((pts[:, 1] + 2) / 4)
        ref = np.einsum("ik,kl,il->i", E1, theta, E2)
        assert np.allclose(Surface(b, theta.ravel())(pts), ref, atol=1e-10)

    def test_unit_square_mass(self):
        b = make_tensor_basis(4, 5)
        one = Surface(b, np.ones(20))
        assert np.isclose(surface_inner_product(one, one), 1.0)


class TestFEM:
    def test_counts(self):
        m = make_fem_mesh(2, 2)
        assert m.M == 4 and m.triangles.shape == (2, 3)

    def test_stiffness_row_sums(self):
        m = make_fem_mesh(7, 5, bounds=(0, 115, 0, 115))
        assert np.max(np.abs(np.asarray(m.stiffness.sum(axis=1)))) < 1e-10

    def test_reference_triangle(self):
        m = FEMBasis([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
        expect = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
        assert np.allclose(m.stiffness.toarray(), expect, atol=1e-14)
        assert np.allclose(m.mass, (np.ones((3, 3)) + np.eye(3)) / 24)

    def test_assembly_matches_hand_dense(self):
        m = make_fem_mesh(4, 3)
        K, P = dense_system(m)
        assert np.allclose(m.stiffness.toarray(), K, atol=1e-12)
        assert np.allclose(m.penalty, P, atol=1e-10)

    def test_lagrange_property(self, rng):
        m = make_fem_mesh(4, 4, bounds=(0, 30, 0, 30))
        beta = rng.standard_normal(16)
        nodes = m.nodes * 30
        assert np.allclose(Surface(m, beta)(nodes), beta, atol=1e-12)

    def test_inner_product_quadrature(self, rng):
        m = make_fem_mesh(5, 4)
        for _ in range(10):
            a, b = rng.standard_normal(20), rng.standard_normal(20)
            ref = 0.0
            for tri in m.triangles:
                P = m.nodes[tri]
                e1, e2 = P[1] - P[0], P[2] - P[0]
                area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
                mids = [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
                # edge-midpoint rule is exact for quadratics
                ref += area / 3 * sum(0.25 * (a[i] + a[j]) * (b[i] + b[j]) for i, j in mids)
            got = surface_inner_product(Surface(m, a), Surface(m, b))
            assert abs(got - ref) <= 1e-7 * abs(ref)

    def test_constant_product(self):
        m = make_fem_mesh(3, 3)
        assert np.isclose(surface_inner_product(Surface(m, np.full(9, 2.0)), Surface(m, np.full(9, -1.5))), -3.0)

    def test_outside_domain(self):
        m = make_fem_mesh(3, 3)
        with pytest.raises(DomainError):
            m.design([[1.5, 0.5]])

    def test_bad_triangles(self):
        with pytest.raises(ValidationError):
            FEMBasis([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])
        with pytest.raises(ValidationError):
            FEMBasis([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])


class TestSmoothing:
    @pytest.mark.parametrize("basis", [make_fem_mesh(4, 4), make_tensor_basis(5, 5)], ids=["fem", "tensor"])
    @pytest.mark.parametrize("lam", [0.0, 1e-4, 1.0, 1e4])
    def test_constants(self, rng, basis, lam):
        pts = rng.uniform(0, 1, (60, 2))
        s = smooth_surface(pts, basis, lam, y=np.full(60, 4.2))
        assert np.allclose(s(rng.uniform(0, 1, (20, 2))), 4.2, atol=1e-9)

    def test_fem_interpolation(self, rng):
        m = make_fem_mesh(4, 4)
        y = rng.standard_normal(16)
        s = smooth_surface(m.nodes, m, 0.0, y=y)
        assert np.max(np.abs(s(m.nodes) - y)) < 1e-8

    def test_three_by_three_dense_oracle(self, rng):
        m = make_fem_mesh(3, 3)
        g = np.linspace(0, 1, 3)
        pts = np.array([[x, y] for y in g for x in g])
        y = rng.standard_normal(9)
        _, P = dense_system(m)
        Phi = np.eye(9)
        ref = np.linalg.solve(Phi.T @ Phi + P, Phi.T @ y)
        assert np.allclose(smooth_surface(pts, m, 1.0, y=y).beta, ref, atol=1e-10)

    def test_monotone_shrinkage(self, rng):
        m = make_fem_mesh(5, 5)
        pts = rng.uniform(0, 1, (80, 2))
        y = np.sin(3 * pts[:, 0]) + pts[:, 1] ** 2 + 0.2 * rng.standard_normal(80)
        pen = [smooth_surface(pts, m, lam, y=y).penalty_value() for lam in np.logspace(-6, 3, 10)]
        assert all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(pen, pen[1:]))

    def test_lambda_zero_needs_support(self, rng):
        with pytest.raises(RankError):
            smooth_coefficients(rng.uniform(0, 1, (5, 2)), np.zeros(5), make_fem_mesh(4, 4), 0.0)

    def test_multi_column(self, rng):
        m = make_fem_mesh(4, 4)
        pts = rng.uniform(0, 1, (40, 2))
        Y = rng.standard_normal((40, 3))
        B = smooth_coefficients(pts, Y, m, 0.1)
        assert np.allclose(B[:, 1], smooth_coefficients(pts, Y[:, 1], m, 0.1))


class TestGCV:
    def test_exact_span_selects_zero(self, rng):
        m = make_fem_mesh(3, 3)
        pts = rng.uniform(0, 1, (40, 2))
        y = m.design(pts) @ rng.standard_normal(9)
        lam, _ = gcv_surface(pts, m, [0.0, 1e8], y=y)
        assert lam == 0.0

    def test_constant_tie(self, rng):
        pts = rng.uniform(0, 1, (30, 2))
        lam, _ = gcv_surface(np.column_stack([pts, np.full(30, 1.0)]), make_fem_mesh(3, 3), [1e-3, 1.0, 10.0])
        assert lam == 10.0

    def test_singleton(self, rng):
        pts = rng.uniform(0, 1, (30, 2))
        lam, _ = gcv_surface(pts, make_fem_mesh(3, 3), [0.5], y=rng.standard_normal(30))
        assert lam == 0.5


class TestMisc:
    def test_zero_surface(self):
        assert eval_surface(Surface(make_fem_mesh(3, 3), np.zeros(9)), np.array([0.2, 0.7])) == 0.0

    def test_raster_shape(self):
        r = raster(Surface(make_tensor_basis(4, 4, bounds=(0, 2, 0, 3)), np.ones(16)), 5, 4)
        assert r.shape == (20, 3) and np.allclose(r[:, 2], 1.0)
        assert r[0, :2].tolist() == [0.0, 0.0] and r[-1, :2].tolist() == [2.0, 3.0]

    @pytest.mark.parametrize("basis", [make_fem_mesh(3, 4, (0, 5, 0, 5)), make_tensor_basis(4, 6, (1, 2, 3, 4), (1, 2)),
                                       FEMBasis([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])])
    def test_descriptor_round_trip(self, basis):
        assert basis_from_descriptor(basis.descriptor()) == basis

    def test_inner_product_basis_mismatch(self):
        with pytest.raises(ValidationError):
            surface_inner_product(Surface(make_fem_mesh(3, 3), np.ones(9)), Surface(make_tensor_basis(4, 4), np.ones(16)))

    @given(st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=20, deadline=None)
    def test_inner_product_bilinear(self, c, d):
        m = make_fem_mesh(3, 3)
        a, b = Surface(m, np.full(9, c)), Surface(m, np.full(9, d))
        assert np.isclose(surface_inner_product(a, b), c * d, atol=1e-12)
