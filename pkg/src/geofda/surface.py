"""Penalized smoothing of scattered data into surfaces.

Two bases are available, both working on the unit square after an affine
rescaling of the study region:

* tensor products of cubic B-splines with second-derivative penalties in
  each coordinate, and
* continuous piecewise-linear finite elements on a triangulation, penalized
  by the discrete squared Laplacian ``A^T M_L^-1 A`` (``A`` the stiffness
  matrix, ``M_L`` the lumped mass matrix).

Inner products between surfaces are taken over the unit square.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as spl
import scipy.sparse as sp

from .basis import argmin_prefer_larger, cached_gram, make_basis, quadrature_rule
from .errors import DomainError, RankError, ValidationError

_TOL = 1e-12


class SurfaceBasis:
    """Common interface: ``M``, ``design(points)``, ``penalty``, ``penalty_root``, ``mass``.

    ``penalty_root`` is any matrix ``L`` with ``L^T L = penalty`` whose null
    space matches the penalty's exactly (constants, and for tensor splines
    also bilinear-free linear surfaces).
    """

    kind: str
    bounds: tuple[float, float, float, float]

    @property
    def M(self) -> int:
        raise NotImplementedError

    def to_unit(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        x0, x1, y0, y1 = self.bounds
        u = np.column_stack([(pts[:, 0] - x0) / (x1 - x0), (pts[:, 1] - y0) / (y1 - y0)])
        if not np.all(np.isfinite(u)) or np.any(u < -1e-9) or np.any(u > 1 + 1e-9):
            raise DomainError("point outside the surface domain")
        return np.clip(u, 0.0, 1.0)

    def design(self, points) -> np.ndarray:
        """Dense ``n x M`` matrix of basis values at ``points`` (original coordinates)."""
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash(repr(self.descriptor()))


def _check_bounds(bounds) -> tuple[float, float, float, float]:
    b = tuple(float(x) for x in bounds)
    if len(b) != 4 or not (b[1] > b[0] and b[3] > b[2]):
        raise ValidationError("bounds must be (xmin, xmax, ymin, ymax) with positive extent")
    return b


class TensorSplineBasis(SurfaceBasis):
    kind = "tensor_spline"

    def __init__(self, K1: int, K2: int, bounds=(0.0, 1.0, 0.0, 1.0), weights=(1.0, 1.0)):
        if K1 < 4 or K2 < 4:
            raise ValidationError("tensor spline basis needs K1, K2 >= 4 (cubic)")
        if min(weights) < 0:
            raise ValidationError("penalty weights must be nonnegative")
        self.K1, self.K2 = int(K1), int(K2)
        self.b1 = make_basis("bspline", self.K1, 4)
        self.b2 = make_basis("bspline", self.K2, 4)
        self.bounds = _check_bounds(bounds)
        self.weights = (float(weights[0]), float(weights[1]))

    @property
    def M(self) -> int:
        return self.K1 * self.K2

    def design(self, points) -> np.ndarray:
        u = self.to_unit(points)
        E1 = self.b1.evaluate(u[:, 0])
        E2 = self.b2.evaluate(u[:, 1])
        return (E1[:, :, None] * E2[:, None, :]).reshape(u.shape[0], self.M)

    @cached_property
    def penalty_parts(self) -> tuple[np.ndarray, np.ndarray]:
        g1, g2 = cached_gram(self.b1), cached_gram(self.b2)
        return np.kron(g1.R, g2.J), np.kron(g1.J, g2.R)

    @cached_property
    def penalty(self) -> np.ndarray:
        P1, P2 = self.penalty_parts
        return self.weights[0] * P1 + self.weights[1] * P2

    @cached_property
    def penalty_root(self) -> np.ndarray:
        def second_derivative_root(b):
            v, w = quadrature_rule(b, max(201, 2 * b.K + 1))
            return spl.qr(np.sqrt(w)[:, None] * b.evaluate(v, deriv=2), mode="r")[0][: b.K]

        def mass_root(b):
            return spl.cholesky(cached_gram(b).J)

        r1, r2 = second_derivative_root(self.b1), second_derivative_root(self.b2)
        c1, c2 = mass_root(self.b1), mass_root(self.b2)
        return np.vstack([np.sqrt(self.weights[0]) * np.kron(r1, c2), np.sqrt(self.weights[1]) * np.kron(c1, r2)])

    @cached_property
    def mass(self) -> np.ndarray:
        return np.kron(cached_gram(self.b1).J, cached_gram(self.b2).J)

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "K1": self.K1,
            "K2": self.K2,
            "bounds": list(self.bounds),
            "weights": list(self.weights),
        }


def p1_element_matrices(verts: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Stiffness and consistent mass matrices of one linear triangle.

    Returns ``(K_e, M_e, area)``; vertices must be counterclockwise.
    """
    (x0, y0), (x1, y1), (x2, y2) = np.asarray(verts, dtype=float)
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    area = 0.5 * det
    if area <= 0:
        raise ValidationError("triangle must be nondegenerate and counterclockwise")
    grads = np.array([[y1 - y2, y2 - y0, y0 - y1], [x2 - x1, x0 - x2, x1 - x0]]) / det
    Ke = area * grads.T @ grads
    Me = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    return Ke, Me, area


class FEMBasis(SurfaceBasis):
    """Continuous P1 elements on a triangulation of the unit square."""

    kind = "fem_p1"

    def __init__(self, nodes, triangles, bounds=(0.0, 1.0, 0.0, 1.0), shape=None):
        self.nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(triangles, dtype=int).reshape(-1, 3)
        self.bounds = _check_bounds(bounds)
        self.shape = shape
        if self.triangles.min() < 0 or self.triangles.max() >= self.nodes.shape[0]:
            raise ValidationError("triangle indices out of range")
        self._assemble()

    def _assemble(self):
        N = self.nodes.shape[0]
        rows, cols, kv, mv = [], [], [], []
        lumped = np.zeros(N)
        for tri in self.triangles:
            Ke, Me, area = p1_element_matrices(self.nodes[tri])
            rows.append(np.repeat(tri, 3))
            cols.append(np.tile(tri, 3))
            kv.append(Ke.ravel())
            mv.append(Me.ravel())
            lumped[tri] += area / 3.0
        r, c = np.concatenate(rows), np.concatenate(cols)
        self.stiffness = sp.csr_matrix((np.concatenate(kv), (r, c)), shape=(N, N))
        self.mass_sparse = sp.csr_matrix((np.concatenate(mv), (r, c)), shape=(N, N))
        self.lumped_mass = lumped
        A = self.stiffness
        self.penalty_sparse = (A.T @ sp.diags(1.0 / lumped) @ A).tocsr()

    @property
    def M(self) -> int:
        return self.nodes.shape[0]

    @cached_property
    def penalty(self) -> np.ndarray:
        return self.penalty_sparse.toarray()

    @cached_property
    def penalty_root(self) -> np.ndarray:
        return (sp.diags(1.0 / np.sqrt(self.lumped_mass)) @ self.stiffness).toarray()

    @cached_property
    def mass(self) -> np.ndarray:
        return self.mass_sparse.toarray()

    @cached_property
    def _tri_geometry(self):
        P = self.nodes[self.triangles]
        v0 = P[:, 0]
        e1 = P[:, 1] - v0
        e2 = P[:, 2] - v0
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        return v0, e1, e2, det

    def locate(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric coordinates for unit-square points."""
        v0, e1, e2, det = self._tri_geometry
        n = u.shape[0]
        tri_idx = np.full(n, -1)
        bary = np.zeros((n, 3))
        chunk = max(1, 2_000_000 // max(1, self.triangles.shape[0]))
        for start in range(0, n, chunk):
            q = u[start:start + chunk, None, :] - v0[None]
            l1 = (q[..., 0] * e2[:, 1] - q[..., 1] * e2[:, 0]) / det
            l2 = (e1[:, 0] * q[..., 1] - e1[:, 1] * q[..., 0]) / det
            l0 = 1.0 - l1 - l2
            inside = (l0 >= -1e-10) & (l1 >= -1e-10) & (l2 >= -1e-10)
            found = inside.any(axis=1)
            first = np.argmax(inside, axis=1)
            rows = np.arange(first.size)
            sl = slice(start, start + first.size)
            tri_idx[sl] = np.where(found, first, -1)
            bary[sl] = np.column_stack([l0[rows, first], l1[rows, first], l2[rows, first]])
        if np.any(tri_idx < 0):
            raise DomainError("point not covered by the mesh")
        return tri_idx, bary

    def design_sparse(self, points) -> sp.csr_matrix:
        u = self.to_unit(points)
        tri_idx, bary = self.locate(u)
        n = u.shape[0]
        rows = np.repeat(np.arange(n), 3)
        cols = self.triangles[tri_idx].ravel()
        return sp.csr_matrix((bary.ravel(), (rows, cols)), shape=(n, self.M))

    def design(self, points) -> np.ndarray:
        return self.design_sparse(points).toarray()

    def descriptor(self) -> dict:
        if self.shape is not None:
            return {"kind": self.kind, "nx": self.shape[0], "ny": self.shape[1], "bounds": list(self.bounds)}
        return {
            "kind": self.kind,
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "bounds": list(self.bounds),
        }


def make_tensor_basis(K1: int, K2: int, bounds=(0.0, 1.0, 0.0, 1.0), weights=(1.0, 1.0)) -> TensorSplineBasis:
    return TensorSplineBasis(K1, K2, bounds, weights)


def make_fem_mesh(nx: int, ny: int, bounds=(0.0, 1.0, 0.0, 1.0)) -> FEMBasis:
    """Structured triangulation of the unit square with ``nx * ny`` nodes.

    Node ``(i, j)`` (column ``i`` along s1, row ``j`` along s2) has index
    ``j * nx + i``; each cell is split along its lower-left/upper-right diagonal.
    """
    if nx < 2 or ny < 2:
        raise ValidationError("FEM mesh needs nx, ny >= 2")
    xs, ys = np.linspace(0.0, 1.0, nx), np.linspace(0.0, 1.0, ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b, c, d = a + 1, a + nx, a + nx + 1
            tris.append((a, b, d))
            tris.append((a, d, c))
    return FEMBasis(nodes, np.array(tris), bounds, shape=(nx, ny))


def basis_from_descriptor(d: dict) -> SurfaceBasis:
    kind = d.get("kind")
    bounds = d.get("bounds", (0.0, 1.0, 0.0, 1.0))
    if kind == "tensor_spline":
        return TensorSplineBasis(int(d["K1"]), int(d["K2"]), bounds, d.get("weights", (1.0, 1.0)))
    if kind == "fem_p1":
        if "nx" in d:
            return make_fem_mesh(int(d["nx"]), int(d["ny"]), bounds)
        return FEMBasis(d["nodes"], d["triangles"], bounds)
    raise ValidationError(f"unknown surface basis kind {kind!r}")


@dataclass(frozen=True)
class Surface:
    basis: SurfaceBasis
    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float).reshape(-1)
        if b.size != self.basis.M:
            raise ValidationError(f"expected {self.basis.M} coefficients, got {b.size}")
        if not np.all(np.isfinite(b)):
            raise ValidationError("surface coefficients must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    def __call__(self, points) -> np.ndarray:
        return self.basis.design(points) @ self.beta

    def penalty_value(self) -> float:
        return float(self.beta @ self.basis.penalty @ self.beta)


def _split_points(points, y=None) -> tuple[np.ndarray, np.ndarray]:
    if y is not None:
        return np.asarray(points, dtype=float).reshape(-1, 2), np.asarray(y, dtype=float).ravel()
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError("points must be (s1, s2, y) rows")
    return arr[:, :2], arr[:, 2]


def smooth_coefficients(S: np.ndarray, Y: np.ndarray, basis: SurfaceBasis, lam: float) -> np.ndarray:
    """Minimize ``|Phi beta - y|^2 + lam beta^T P beta`` for one or more data columns.

    The normal equations are never formed: QR of the stacked matrix
    ``[Phi; sqrt(lam) L]`` keeps constants exact even for very large ``lam``.
    """
    if lam < 0 or not np.isfinite(lam):
        raise ValidationError("smoothing parameter must be a finite nonnegative number")
    if lam == 0 and np.unique(np.round(S, 12), axis=0).shape[0] < basis.M:
        raise RankError(f"lambda=0 needs at least M={basis.M} distinct data locations")
    Phi = basis.design(S)
    L = basis.penalty_root
    Q, R = spl.qr(np.vstack([Phi, np.sqrt(lam) * L]), mode="economic")
    d = np.abs(np.diag(R))
    if d.min() <= 1e-7 * d.max():
        raise RankError(f"surface smoothing system is numerically singular at lambda={lam:g}")
    Y = np.asarray(Y, dtype=float)
    return spl.solve_triangular(R, Q[: Phi.shape[0]].T @ Y)


def smooth_surface(points, basis: SurfaceBasis, lam: float, y=None) -> Surface:
    """Penalized least-squares surface; ``points`` holds ``(s1, s2, y)`` rows
    unless ``y`` is given separately."""
    S, yv = _split_points(points, y)
    return Surface(basis, smooth_coefficients(S, yv, basis, lam))


def gcv_surface(points, basis: SurfaceBasis, lambda_grid, y=None) -> tuple[float, list[float]]:
    """GCV choice of the surface smoothing parameter (ties go to larger lambda).

    ``y`` may be an ``(n, T)`` array, in which case per-column scores are summed.
    """
    from .basis import gcv_score

    S, _ = _split_points(points) if y is None else (np.asarray(points, float).reshape(-1, 2), None)
    Y = _split_points(points)[1] if y is None else np.asarray(y, dtype=float)
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("lambda grid is empty")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ValidationError("lambda grid values must be finite and nonnegative")
    Phi = basis.design(S)
    P = basis.penalty
    values = np.array([gcv_score(None, Y, None, lam, E=Phi, R=P) for lam in grid])
    Y2 = Y[:, None] if Y.ndim == 1 else Y
    best = argmin_prefer_larger(grid, values, float(np.sum(np.mean(Y2**2, axis=0))))
    return float(grid[best]), values.tolist()


def eval_surface(surface: Surface, s) -> np.ndarray | float:
    out = surface(s)
    return float(out[0]) if np.asarray(s).ndim == 1 else out


def surface_inner_product(a: Surface, b: Surface) -> float:
    if a.basis != b.basis:
        raise ValidationError("surfaces live in different bases")
    return float(a.beta @ a.basis.mass @ b.beta)


def raster(surface: Surface, nx: int, ny: int) -> np.ndarray:
    """Values on an ``nx x ny`` grid spanning the domain; rows ``(s1, s2, value)``."""
    x0, x1, y0, y1 = surface.basis.bounds
    X, Y = np.meshgrid(np.linspace(x0, x1, nx), np.linspace(y0, y1, ny), indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return np.column_stack([pts, surface(pts)])
