import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgeit.dgcore import (BoundaryTrace, DgFunction, DgSpace, evaluate, inner_boundary, inner_l2,
                          l2_error, project, write_center_csv, write_coefficients_csv)
from dgeit.exceptions import InvalidArgumentError
from dgeit.mesh import build_mesh


def test_quadratic_projection_exact(unit_space):
    f = lambda x, y: 1 + 2 * x - y + x * x + 3 * x * y - y * y
    assert l2_error(project(unit_space, f), f) < 1e-13


def test_cubic_not_exact(unit_space):
    assert l2_error(project(unit_space, lambda x, y: x ** 3), lambda x, y: x ** 3) > 1e-5


def test_quadrature_exact_degree7(unit_space):
    # int_0^1 int_0^1 x^7 y^7 = 1/64
    pts = unit_space.quad_points
    assert np.isclose(unit_space.integrate(pts[..., 0] ** 7 * pts[..., 1] ** 7), 1 / 64, rtol=1e-13)


def test_boundary_rule_exact(unit_space):
    one = BoundaryTrace.from_function(unit_space, lambda x, y: 1.0)
    assert np.isclose(inner_boundary(one, one), 4.0)
    cube = BoundaryTrace.from_function(unit_space, lambda x, y: x ** 7)
    # x^7 integrates to 1/8 on the top and bottom sides, 1 on the right side
    assert np.isclose(inner_boundary(cube, one), 1 / 8 + 1 / 8 + 1.0)


def test_constant_evaluation(square_space):
    f = project(square_space, 3.5)
    assert np.allclose(f.center_values(), 3.5)
    assert evaluate(f, 0, (0.3, -0.2)) == pytest.approx(3.5)
    with pytest.raises(IndexError):
        evaluate(f, square_space.n_cells, (0.0, 0.0))


def test_trace_of_linear(square_space):
    f = project(square_space, lambda x, y: x + 2 * y)
    tr = f.trace()
    pts = tr.points
    assert np.allclose(tr.values, pts[..., 0] + 2 * pts[..., 1])


def test_pointwise_call(square_space):
    f = project(square_space, lambda x, y: x * y)
    assert f(np.array([0.3]), np.array([-0.7]))[0] == pytest.approx(-0.21)


def test_mass_is_diagonal(unit_space):
    lm = unit_space.local_mass
    assert np.allclose(lm, np.diag(np.diag(lm)), atol=1e-15)


def test_mismatched_spaces(unit_space, square_space):
    with pytest.raises(InvalidArgumentError):
        unit_space.zeros() + square_space.zeros()
    with pytest.raises(InvalidArgumentError):
        DgFunction(unit_space, np.zeros(3))


def test_csv_writers(tmp_path, unit_space):
    f = project(unit_space, lambda x, y: x)
    write_center_csv(f, tmp_path / "c.csv")
    write_coefficients_csv(f, tmp_path / "k.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "x,y,value" and len(rows) == 1 + unit_space.n_cells
    assert (tmp_path / "k.csv").read_text().startswith("cell,c0,c1,c2,c3,c4,c5\n")


coeffs = st.lists(st.floats(-5, 5), min_size=6, max_size=6)


@given(coeffs)
def test_projection_idempotent(c):
    space = DgSpace(build_mesh((0, 1, 0, 1), 3, 2))
    f = lambda x, y: c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * np.sin(y)
    p1 = project(space, f)
    p2 = project(space, lambda x, y: p1(x, y))
    assert np.allclose(p1.coeffs, p2.coeffs, atol=1e-10)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_projection_linear(a, b):
    space = DgSpace(build_mesh((0, 1, 0, 1), 2, 2))
    f, g = (lambda x, y: np.exp(x) * y), (lambda x, y: np.cos(3 * x * y))
    lhs = project(space, lambda x, y: a * f(x, y) + b * g(x, y))
    rhs = project(space, f) * a + project(space, g) * b
    assert np.allclose(lhs.coeffs, rhs.coeffs, atol=1e-10)


@given(coeffs)
def test_l2_inner_matches_quadrature(c):
    space = DgSpace(build_mesh((0, 1, 0, 1), 2, 3))
    f = project(space, lambda x, y: c[0] + c[1] * x * y + c[2] * y * y)
    g = project(space, lambda x, y: c[3] + c[4] * x + c[5] * x * x)
    assert np.isclose(inner_l2(f, g), space.integrate(f.quad_values() * g.quad_values()),
                      atol=1e-10)
