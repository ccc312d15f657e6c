import numpy as np
import pytest

from dgeit.dgcore import BoundaryTrace, DgSpace, inner_boundary, inner_h1, project
from dgeit.dtn import (build_cache, df_adjoint_apply, df_apply, df_apply_many, forward_map)
from dgeit.mdldg import lifted_gradient
from dgeit.mesh import build_mesh

BLOB = lambda x, y: 1 + np.exp(-8 * (x * x + (y - 0.55) ** 2))
BUMP = lambda x, y: np.exp(-10 * ((x - 0.2) ** 2 + (y + 0.1) ** 2)) * (1 - x * x) * (1 - y * y)
PHI = lambda x, y: np.cos(3 * x) * y


def _setup(n):
    space = DgSpace(build_mesh((-1, 1, -1, 1), n, n))
    fs = [BoundaryTrace.from_function(space, lambda x, y: np.sin(x + y)),
          BoundaryTrace.from_function(space, lambda x, y: np.cos(2 * (x + y)))]
    return space, build_cache(project(space, BLOB), fs)


@pytest.fixture(scope="module")
def cache8():
    return _setup(8)


def test_forward_map_shapes(cache8):
    space, _ = cache8
    u, q, F = forward_map(project(space, 1.0), BoundaryTrace.from_function(space, lambda x, y: x))
    # u = x solves the unit problem exactly; the flux is n_x
    assert np.allclose(F.values, space.boundary_normals[:, None, 0], atol=1e-10)


def test_df_zero_and_linear(cache8, rng):
    space, c = cache8
    assert np.abs(df_apply(c, 0, space.zeros()).values).max() == 0
    d = project(space, BUMP)
    assert np.allclose(df_apply(c, 1, d * 2.0).values, 2 * df_apply(c, 1, d).values)
    a, b = rng.standard_normal(2)
    e = project(space, lambda x, y: (1 - x * x) * (1 - y * y) * x)
    lhs = df_apply(c, 0, d * a + e * b).values
    rhs = a * df_apply(c, 0, d).values + b * df_apply(c, 0, e).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_df_many_matches_single(cache8):
    space, c = cache8
    d = project(space, BUMP)
    many = df_apply_many(c, d.coeffs)
    assert np.allclose(many[:, 1], df_apply(c, 1, d).values.ravel())


def test_df_index_checked(cache8):
    space, c = cache8
    with pytest.raises(IndexError):
        df_apply(c, 2, space.zeros())


def test_finite_difference_first_order(cache8):
    space, c = cache8
    d = project(space, BUMP)
    lin = df_apply(c, 0, d)
    errs = []
    for eps in (1e-2, 1e-3, 1e-4):
        c2 = build_cache(c.sigma + d * eps, c.fs)
        errs.append(((c2.flux(0) - c.flux(0)) * (1 / eps) - lin).norm())
    assert errs[1] < 0.2 * errs[0] and errs[2] < 0.2 * errs[1]


def test_adjoint_zero_and_orthogonal_gradients():
    space = DgSpace(build_mesh((-1, 1, -1, 1), 6, 6))
    c = build_cache(project(space, 1.0), [BoundaryTrace.from_function(space, lambda x, y: x)])
    assert np.abs(df_adjoint_apply(c, 0, space.zero_trace()).coeffs).max() == 0
    w = df_adjoint_apply(c, 0, BoundaryTrace.from_function(space, lambda x, y: y))
    assert np.abs(w.coeffs).max() < 1e-10


def test_adjoint_linear(cache8):
    space, c = cache8
    p1 = BoundaryTrace.from_function(space, PHI)
    p2 = BoundaryTrace.from_function(space, lambda x, y: x * y)
    lhs = df_adjoint_apply(c, 0, p1 * 3.0 + p2).coeffs
    rhs = 3 * df_adjoint_apply(c, 0, p1).coeffs + df_adjoint_apply(c, 0, p2).coeffs
    assert np.allclose(lhs, rhs, atol=1e-12)


def _adjoint_gap(n):
    space, c = _setup(n)
    d = project(space, BUMP)
    phi = BoundaryTrace.from_function(space, PHI)
    w = df_adjoint_apply(c, 0, phi)
    lhs = inner_boundary(df_apply(c, 0, d), phi)
    rhs = inner_h1(d, w, lifted_gradient(d, zero_trace=True), lifted_gradient(w, zero_trace=True))
    return abs(lhs - rhs) / abs(lhs), np.abs(w.trace().values).max()


def test_adjoint_identity_refines():
    g16, tr16 = _adjoint_gap(16)
    g32, tr32 = _adjoint_gap(32)
    assert g32 <= 0.5 * g16
    assert tr32 < tr16


def test_reciprocity():
    # the conservative flux makes the discrete DtN map symmetric up to roundoff
    gaps = []
    for n in (8, 16):
        space = DgSpace(build_mesh((-1, 1, -1, 1), n, n))
        f = BoundaryTrace.from_function(space, lambda x, y: np.sin(x + y))
        g = BoundaryTrace.from_function(space, lambda x, y: np.cos(2 * x - y))
        c = build_cache(project(space, BLOB), [f, g])
        gaps.append(abs(inner_boundary(c.flux(0), g) - inner_boundary(c.flux(1), f)))
    assert max(gaps) < 1e-12
