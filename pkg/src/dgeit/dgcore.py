"""Piecewise quadratic DG spaces on rectangular meshes.

The local basis on each cell is the tensor Legendre family of total degree
at most two in the reference coordinates ``xi, eta`` in ``[-1, 1]``::

    1, xi, eta, P2(xi), xi*eta, P2(eta),      P2(t) = (3 t^2 - 1) / 2

It spans the monomials ``{1, xi, eta, xi^2, xi*eta, eta^2}`` and is
L2-orthogonal, so local mass matrices are diagonal.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .mesh import BOTTOM, LEFT, RIGHT, TOP, Mesh

LOCAL_DIM = 6
N_QUAD_1D = 4

# (degree in xi, degree in eta) of each basis function
_POWERS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def _legendre(deg, t):
    if deg == 0:
        return np.ones_like(t)
    if deg == 1:
        return t
    return 1.5 * t * t - 0.5


def _dlegendre(deg, t):
    if deg == 0:
        return np.zeros_like(t)
    if deg == 1:
        return np.ones_like(t)
    return 3.0 * t


def basis(xi, eta):
    """Basis values, shape ``xi.shape + (6,)``."""
    xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
    return np.stack([_legendre(a, xi) * _legendre(b, eta) for a, b in _POWERS], axis=-1)


def basis_grad(xi, eta):
    """Reference gradients ``(d/dxi, d/deta)``, each of shape ``xi.shape + (6,)``."""
    xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
    dxi = np.stack([_dlegendre(a, xi) * _legendre(b, eta) for a, b in _POWERS], axis=-1)
    deta = np.stack([_legendre(a, xi) * _dlegendre(b, eta) for a, b in _POWERS], axis=-1)
    return dxi, deta


def face_coords(face, t):
    """Reference coordinates of the points ``t`` on a local face."""
    one = np.ones_like(t)
    if face == LEFT:
        return -one, t
    if face == RIGHT:
        return one, t
    if face == BOTTOM:
        return t, -one
    if face == TOP:
        return t, one
    raise InvalidArgumentError(f"unknown face {face}")


class DgSpace:
    """Discontinuous P2 space on a :class:`~dgeit.mesh.Mesh`.

    Quadrature is a 4x4 tensor Gauss rule on cells (exact to degree 7 in each
    variable) and a 4-point Gauss rule on edges.
    """

    degree = 2
    local_dim = LOCAL_DIM

    def __init__(self, mesh):
        if not isinstance(mesh, Mesh):
            raise InvalidArgumentError("DgSpace needs a Mesh")
        self.mesh = mesh
        t, w = np.polynomial.legendre.leggauss(N_QUAD_1D)
        self.edge_points = t
        self.edge_weights = w

        xi, eta = np.meshgrid(t, t, indexing="ij")
        self.ref_points = np.column_stack([xi.ravel(), eta.ravel()])
        self.ref_weights = np.outer(w, w).ravel()
        self.phi = basis(self.ref_points[:, 0], self.ref_points[:, 1])
        dxi, deta = basis_grad(self.ref_points[:, 0], self.ref_points[:, 1])
        # physical gradients on a uniform mesh
        self.dphi_dx = dxi * (2.0 / mesh.hx)
        self.dphi_dy = deta * (2.0 / mesh.hy)
        self.det_jac = 0.25 * mesh.hx * mesh.hy

        # cell rule weights including the Jacobian
        self.weights = self.ref_weights * self.det_jac
        self.local_mass = np.einsum("q,qi,qj->ij", self.weights, self.phi, self.phi)
        self.mass_diag = np.diag(self.local_mass).copy()

        self.quad_points = (mesh.centers[:, None, :]
                            + 0.5 * self.ref_points[None, :, :] * np.array([mesh.hx, mesh.hy]))

        self.face_phi = np.stack([basis(*face_coords(f, t)) for f in range(4)])

        # boundary edge quadrature points, ordered as mesh.boundary_edges
        bnd = mesh.boundary_edges
        mids = mesh.midpoints[bnd]
        half = 0.5 * mesh.lengths[bnd]
        vert = mesh.vertical[bnd]
        pts = np.repeat(mids[:, None, :], t.size, axis=1)
        pts[vert, :, 1] += half[vert, None] * t
        pts[~vert, :, 0] += half[~vert, None] * t
        self.boundary_points = pts
        self.boundary_weights = half[:, None] * w[None, :]
        self.boundary_normals = mesh.normals[bnd]

        for arr in (self.quad_points, self.boundary_points, self.boundary_weights):
            arr.setflags(write=False)
        self._cache = {}

    @property
    def dim(self):
        return self.mesh.n_cells * LOCAL_DIM

    @property
    def n_cells(self):
        return self.mesh.n_cells

    @property
    def trace_shape(self):
        return (self.mesh.boundary_edges.size, self.edge_points.size)

    def zeros(self):
        return DgFunction(self, np.zeros(self.dim))

    def zero_trace(self):
        return BoundaryTrace(self, np.zeros(self.trace_shape))

    def mass_matrix(self):
        """Global (diagonal) mass matrix as a 1D array of its diagonal."""
        return np.tile(self.mass_diag, self.n_cells)

    def integrate(self, values):
        """Integrate per-quadrature-point data of shape (n_cells, 16)."""
        return float(np.sum(values * self.weights))

    def load(self, values):
        """Moments ``int values * phi_i`` per cell, flattened to (dim,)."""
        return np.einsum("kq,q,qi->ki", values, self.weights, self.phi).ravel()

    def __repr__(self):
        return f"DgSpace(P2, {self.mesh!r})"


def _check_space(a, b):
    if a.space is not b.space:
        raise InvalidArgumentError("operands live on different DG spaces")


@dataclass(eq=False)
class DgFunction:
    """Scalar P2 field with coefficients stored cell by cell."""
    space: DgSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dim,):
            raise InvalidArgumentError(
                f"expected {self.space.dim} coefficients, got {self.coeffs.shape}")

    @property
    def local(self):
        """Coefficient view of shape (n_cells, 6)."""
        return self.coeffs.reshape(-1, LOCAL_DIM)

    def quad_values(self):
        """Values at every cell quadrature point, shape (n_cells, 16)."""
        return self.local @ self.space.phi.T

    def center_values(self):
        phi0 = basis(0.0, 0.0)
        return self.local @ phi0

    def trace(self):
        """Boundary trace taken from the adjacent cell."""
        space = self.space
        mesh = space.mesh
        bnd = mesh.boundary_edges
        cells = mesh.cells[bnd, 0]
        faces = mesh.faces[bnd, 0]
        vals = np.einsum("epi,ei->ep", space.face_phi[faces], self.local[cells])
        return BoundaryTrace(space, vals)

    def __call__(self, x, y):
        """Evaluate at physical points (vectorized)."""
        cell, xi, eta = self.space.mesh.locate(x, y)
        return np.sum(basis(xi, eta) * self.local[cell], axis=-1)

    def copy(self):
        return DgFunction(self.space, self.coeffs.copy())

    def __add__(self, other):
        _check_space(self, other)
        return DgFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_space(self, other)
        return DgFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return DgFunction(self.space, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return DgFunction(self.space, -self.coeffs)


@dataclass(eq=False)
class FluxField:
    """Vector P2 field; per cell 6 coefficients of q1 followed by 6 of q2."""
    space: DgSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (2 * self.space.dim,):
            raise InvalidArgumentError(
                f"expected {2 * self.space.dim} coefficients, got {self.coeffs.shape}")

    @property
    def local(self):
        """Coefficient view of shape (n_cells, 2, 6)."""
        return self.coeffs.reshape(-1, 2, LOCAL_DIM)

    def component(self, c):
        return DgFunction(self.space, self.local[:, c, :].ravel())

    def quad_values(self):
        """Values at cell quadrature points, shape (n_cells, 16, 2)."""
        return np.einsum("kci,qi->kqc", self.local, self.space.phi)

    def normal_trace(self):
        """``q . n`` on boundary edges from the adjacent cell."""
        space = self.space
        mesh = space.mesh
        bnd = mesh.boundary_edges
        cells = mesh.cells[bnd, 0]
        faces = mesh.faces[bnd, 0]
        qn = np.einsum("eci,ec->ei", self.local[cells], space.boundary_normals)
        return BoundaryTrace(space, np.einsum("epi,ei->ep", space.face_phi[faces], qn))


@dataclass(eq=False)
class BoundaryTrace:
    """Values on the boundary quadrature points, shape (n_boundary_edges, 4)."""
    space: DgSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.space.trace_shape:
            raise InvalidArgumentError(
                f"trace shape {self.values.shape} != {self.space.trace_shape}")

    @classmethod
    def from_function(cls, space, func):
        pts = space.boundary_points
        return cls(space, np.broadcast_to(func(pts[..., 0], pts[..., 1]),
                                          space.trace_shape).astype(float))

    @property
    def points(self):
        return self.space.boundary_points

    def norm(self):
        return np.sqrt(max(inner_boundary(self, self), 0.0))

    def __add__(self, other):
        _check_space(self, other)
        return BoundaryTrace(self.space, self.values + other.values)

    def __sub__(self, other):
        _check_space(self, other)
        return BoundaryTrace(self.space, self.values - other.values)

    def __mul__(self, scalar):
        return BoundaryTrace(self.space, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return BoundaryTrace(self.space, -self.values)


def project(space, func):
    """Cell-wise L2 projection of ``func(x, y)`` (or a constant)."""
    pts = space.quad_points
    if callable(func):
        vals = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
    else:
        vals = float(func)
    vals = np.broadcast_to(vals, pts.shape[:2])
    moments = space.load(vals).reshape(-1, LOCAL_DIM)
    return DgFunction(space, (moments / space.mass_diag).ravel())


def evaluate(f, cell, point):
    """Value of ``f`` on ``cell`` at reference coordinates ``point``."""
    n = f.space.n_cells
    if not 0 <= cell < n:
        raise IndexError(f"cell {cell} out of range [0, {n})")
    xi, eta = point
    return float(basis(xi, eta) @ f.local[cell])


def inner_l2(a, b):
    _check_space(a, b)
    space = a.space
    return float(np.sum(a.local * b.local * space.mass_diag))


def inner_h1(a, b, grad_a, grad_b):
    """``(a, b)_L2 + (grad_a, grad_b)_L2`` with supplied discrete gradients."""
    _check_space(a, b)
    _check_space(a, grad_a)
    _check_space(a, grad_b)
    grad_term = np.sum(grad_a.local * grad_b.local * a.space.mass_diag)
    return inner_l2(a, b) + float(grad_term)


def inner_boundary(a, b):
    _check_space(a, b)
    return float(np.sum(a.values * b.values * a.space.boundary_weights))


def l2_error(f, exact):
    """L2 distance between ``f`` and a pointwise function, by cell quadrature."""
    pts = f.space.quad_points
    diff = f.quad_values() - exact(pts[..., 0], pts[..., 1])
    return np.sqrt(f.space.integrate(diff * diff))


def write_center_csv(f, path):
    """One row per cell: center coordinates and the value there."""
    centers = f.space.mesh.centers
    vals = f.center_values()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for (x, y), v in zip(centers, vals):
            w.writerow([_fmt(x), _fmt(y), _fmt(v)])


def write_coefficients_csv(f, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell"] + [f"c{i}" for i in range(LOCAL_DIM)])
        for k, row in enumerate(f.local):
            w.writerow([k] + [_fmt(c) for c in row])


def _fmt(x):
    return format(float(x), ".17g")
