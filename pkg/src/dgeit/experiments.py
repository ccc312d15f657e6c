"""Phantoms, synthetic measurements and convergence studies."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
import sympy

from .dgcore import BoundaryTrace, DgSpace, basis, l2_error, project
from .dtn import build_cache
from .exceptions import InvalidArgumentError
from .inverse import Measurements
from .mdldg import EllipticProblem, assemble, boundary_flux, solve
from .mesh import DEFAULT_UPWIND, build_mesh, classify_edges


# --------------------------------------------------------------------- phantoms

@dataclass(frozen=True)
class Blob:
    amplitude: float
    center: tuple
    width: float   # exponent factor: amplitude * exp(-width * |x - c|^2)

    def __call__(self, x, y):
        cx, cy = self.center
        return self.amplitude * np.exp(-self.width * ((x - cx) ** 2 + (y - cy) ** 2))


@dataclass(frozen=True)
class Phantom:
    """Background conductivity plus Gaussian bumps.

    ``background`` is either a constant or ``(lower, upper, y_split)``, a
    conductivity that jumps across the horizontal line ``y = y_split``.
    """
    name: str
    background: object = 1.0
    blobs: tuple = ()
    box: tuple = (-1.0, 1.0, -1.0, 1.0)

    def background_sigma(self, x, y):
        bg = self.background
        if isinstance(bg, tuple):
            lower, upper, split = bg
            return np.where(np.asarray(y) < split, lower, upper) + 0.0 * np.asarray(x)
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(bg))

    def __call__(self, x, y):
        out = self.background_sigma(x, y)
        for b in self.blobs:
            out = out + b(x, y)
        return out


PHANTOMS = {
    "single_blob": Phantom("single_blob", 1.0, (Blob(1.0, (0.0, 0.55), 8.0),)),
    "two_blobs": Phantom("two_blobs", 1.0, (Blob(1.0, (-0.7, 0.0), 20.0),
                                            Blob(1.0, (0.0, 0.7), 20.0))),
    "discontinuous_background": Phantom(
        "discontinuous_background", (1.5, 1.0, 0.0),
        (Blob(1.0, (0.0, -0.7), 20.0), Blob(1.0, (0.0, 0.7), 20.0))),
}


def phantom_sigma(p):
    """Pointwise conductivity of a phantom (or of a registered phantom name)."""
    if isinstance(p, str):
        try:
            p = PHANTOMS[p]
        except KeyError:
            raise InvalidArgumentError(
                f"unknown phantom {p!r}; choose from {sorted(PHANTOMS)}") from None
    return p.__call__


def background_function(space, p):
    """Projection of the phantom background; used as ``sigma0``."""
    return project(space, p.background_sigma)


# ----------------------------------------------------------------- measurements

MEASUREMENTS = (
    ("sin(x+y)", lambda x, y: np.sin(x + y)),
    ("cos(x+y)", lambda x, y: np.cos(x + y)),
    ("sin(2(x+y))", lambda x, y: np.sin(2 * (x + y))),
    ("cos(2(x+y))", lambda x, y: np.cos(2 * (x + y))),
)


def measurement_suite(mesh_or_space):
    """The four boundary voltages sampled at boundary quadrature points."""
    space = _as_space(mesh_or_space)
    return [BoundaryTrace.from_function(space, f) for _, f in MEASUREMENTS]


def _as_space(obj):
    return obj if isinstance(obj, DgSpace) else DgSpace(obj)


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative Gaussian noise ``g + eps |g| xi`` from a seeded PCG64 stream."""
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidArgumentError("noise level must be nonnegative")

    def apply(self, traces):
        rng = np.random.default_rng(self.seed)
        out = []
        for g in traces:
            xi = rng.standard_normal(g.values.shape)
            out.append(BoundaryTrace(g.space, g.values + self.epsilon * np.abs(g.values) * xi))
        return out


def _pointwise_flux(cache, j, funcs, points, normals, outflow):
    """Evaluate the conservative boundary flux of measurement ``j`` at arbitrary boundary points."""
    space = cache.space
    x, y = points[..., 0], points[..., 1]
    q = cache.q(j)
    cell, xi, eta = space.mesh.locate(x, y)
    phi = basis(xi, eta)
    ql = q.local[cell]                                            # (..., 2, 6)
    qn = (np.sum(phi * ql[..., 0, :], -1) * normals[..., 0]
          + np.sum(phi * ql[..., 1, :], -1) * normals[..., 1])
    u = np.sum(phi * cache.u(j).local[cell], -1)
    a = cache.system.alpha_stab
    return qn - np.where(outflow, a * (u - funcs[j](x, y)), 0.0)


def true_data(p, fine_mesh, coarse_space, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    """Noise-free currents: forward solves on ``fine_mesh`` read at coarse boundary points."""
    fine = _as_space(fine_mesh)
    sigma = project(fine, p)
    funcs = [f for _, f in MEASUREMENTS]
    fs = [BoundaryTrace.from_function(fine, f) for f in funcs]
    cache = build_cache(sigma, fs, v, alpha_stab_scale)
    cm = coarse_space.mesh
    pts = coarse_space.boundary_points
    normals = np.broadcast_to(coarse_space.boundary_normals[:, None, :], pts.shape)
    out_edges = np.isin(cm.boundary_edges, classify_edges(cm, v).outflow)
    outflow = np.broadcast_to(out_edges[:, None], pts.shape[:2])
    return [BoundaryTrace(coarse_space, _pointwise_flux(cache, j, funcs, pts, normals, outflow))
            for j in range(len(funcs))]


def generate_data(p, fine_mesh, coarse_mesh, noise, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    """Synthetic measurements for phantom ``p`` on the coarse mesh.

    The fine mesh must refine the coarse one by an integer factor of at least
    two in each direction, over the same box.
    """
    coarse = _as_space(coarse_mesh)
    fm = fine_mesh.mesh if isinstance(fine_mesh, DgSpace) else fine_mesh
    cm = coarse.mesh
    if fm.box != cm.box:
        raise InvalidArgumentError("fine and coarse meshes cover different boxes")
    if fm.nx % cm.nx or fm.ny % cm.ny or fm.nx < 2 * cm.nx or fm.ny < 2 * cm.ny:
        raise InvalidArgumentError(
            f"fine mesh {fm.nx}x{fm.ny} must refine {cm.nx}x{cm.ny} by an integer factor >= 2")
    if callable(p) and not isinstance(p, Phantom):
        sigma = p
    else:
        sigma = phantom_sigma(p)
    g_true = true_data(sigma, fine_mesh, coarse, v, alpha_stab_scale)
    if noise.epsilon > 0:
        g = noise.apply(g_true)
    else:
        g = [BoundaryTrace(coarse, t.values.copy()) for t in g_true]
    delta = float(sum((gd - gt).norm() for gd, gt in zip(g, g_true)))
    return Measurements(measurement_suite(coarse), g, delta, g_true)


def write_measurements_csv(meas, path):
    space = meas.space
    pts = space.boundary_points
    edges = space.mesh.boundary_edges
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["measurement", "edge", "qp", "x", "y", "f", "g_true", "g_noisy"])
        for j, (f, g) in enumerate(zip(meas.f, meas.g)):
            gt = meas.g_true[j] if meas.g_true else g
            for e in range(pts.shape[0]):
                for k in range(pts.shape[1]):
                    w.writerow([j, int(edges[e]), k, _fmt(pts[e, k, 0]), _fmt(pts[e, k, 1]),
                                _fmt(f.values[e, k]), _fmt(gt.values[e, k]),
                                _fmt(g.values[e, k])])


# ------------------------------------------------------------------ metrics

def blob_height(sigma):
    """Maximum of ``sigma`` over cell centers."""
    return float(np.max(sigma.center_values()))


def center_of_mass(sigma, background):
    """Center of mass of ``max(sigma - background, 0)`` over cell centers."""
    c = sigma.space.mesh.centers
    wts = np.maximum(sigma.center_values() - background(c[:, 0], c[:, 1]), 0.0)
    if wts.sum() == 0:
        return (float("nan"), float("nan"))
    return tuple(float(v) for v in wts @ c / wts.sum())


def local_maxima(sigma, threshold, background=None):
    """Cell centers where ``sigma - background`` exceeds ``threshold`` and all 8 neighbors."""
    mesh = sigma.space.mesh
    vals = sigma.center_values()
    if background is not None:
        c = mesh.centers
        vals = vals - background(c[:, 0], c[:, 1])
    grid = vals.reshape(mesh.ny, mesh.nx)
    padded = np.pad(grid, 1, constant_values=-np.inf)
    peaks = []
    for j in range(mesh.ny):
        for i in range(mesh.nx):
            v = grid[j, i]
            window = padded[j:j + 3, i:i + 3].copy()
            window[1, 1] = -np.inf
            if v > threshold and v > window.max():
                peaks.append(tuple(mesh.centers[j * mesh.nx + i]))
    return peaks


# ---------------------------------------------------------- manufactured cases

_X, _Y = sympy.symbols("x y")


@dataclass
class ManufacturedCase:
    """Exact solution of ``-div(sigma grad u) = r`` built symbolically."""
    name: str
    box: tuple
    sigma: callable
    u: callable
    source: callable
    qx: callable
    qy: callable

    @classmethod
    def from_sympy(cls, name, box, sigma_expr, u_expr=None, q_expr=None, source_expr=None):
        if q_expr is None:
            q_expr = (sigma_expr * sympy.diff(u_expr, _X), sigma_expr * sympy.diff(u_expr, _Y))
        if source_expr is None:
            source_expr = -(sympy.diff(q_expr[0], _X) + sympy.diff(q_expr[1], _Y))
        lam = lambda e: _vectorize(sympy.lambdify((_X, _Y), sympy.simplify(e), "numpy"))
        return cls(name, box, lam(sigma_expr), lam(u_expr), lam(source_expr),
                   lam(q_expr[0]), lam(q_expr[1]))


def _vectorize(f):
    def g(x, y):
        return np.broadcast_to(f(x, y), np.broadcast(np.asarray(x), np.asarray(y)).shape) + 0.0
    return g


def smooth_case():
    s = sympy.exp(-(_X ** 2 + _Y ** 2))
    return ManufacturedCase.from_sympy("smooth", (0.0, 1.0, 0.0, 1.0), s, sympy.sin(_X + _Y))


def interface_case():
    """Coefficient jump 1 | 10 across ``x = 1/2``; ``sigma u`` is smooth."""
    half = sympy.Rational(1, 2)
    phi = sympy.sin(sympy.pi * _X / 2) * (_X - half) * (_Y - half) * (_X ** 2 + _Y ** 2 + 1)
    sig = sympy.Piecewise((1, _X < half), (10, True))
    q = (sympy.diff(phi, _X), sympy.diff(phi, _Y))
    r = -(sympy.diff(q[0], _X) + sympy.diff(q[1], _Y))
    case = ManufacturedCase.from_sympy("interface", (0.0, 1.0, 0.0, 1.0), sig, phi / sig, q, r)
    sig_np = lambda x, y: np.where(np.asarray(x) < 0.5, 1.0, 10.0) + 0.0 * np.asarray(y)
    phi_np = _vectorize(sympy.lambdify((_X, _Y), phi, "numpy"))
    case.sigma = sig_np
    case.u = lambda x, y: phi_np(x, y) / sig_np(x, y)
    return case


CASES = {"smooth": smooth_case, "interface": interface_case}


@dataclass
class EocReport:
    """Errors and observed orders on a sequence of uniformly refined meshes."""
    case: str
    meshes: list
    n_cells: list
    errors: dict = field(default_factory=dict)

    def orders(self, key):
        e = self.errors[key]
        return [float("nan")] + [_order(a, b) for a, b in zip(e[:-1], e[1:])]

    def rows(self):
        ou, of = self.orders("u"), self.orders("flux")
        for i, n in enumerate(self.meshes):
            yield [f"{n}x{n}", self.n_cells[i], self.errors["u"][i], ou[i],
                   self.errors["flux"][i], of[i]]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mesh", "n_cells", "err_u", "order_u", "err_flux", "order_flux"])
            for row in self.rows():
                w.writerow(row[:2] + [_fmt(v) for v in row[2:]])

    def write_domain_csv(self, path):
        """Domain errors of both flux components."""
        ox, oy = self.orders("qx"), self.orders("qy")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mesh", "n_cells", "err_qx", "order_qx", "err_qy", "order_qy"])
            for i, n in enumerate(self.meshes):
                w.writerow([f"{n}x{n}", self.n_cells[i], _fmt(self.errors["qx"][i]),
                            _fmt(ox[i]), _fmt(self.errors["qy"][i]), _fmt(oy[i])])


def _order(a, b):
    if a <= 0 or b <= 0:
        return float("nan")
    return math.log2(a / b)


def solve_case(case, n, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    """Solve a manufactured case on an ``n x n`` mesh; returns ``(u, q, flux, space)``."""
    space = DgSpace(build_mesh(case.box, n, n))
    prob = EllipticProblem(project(space, case.sigma), source=project(space, case.source),
                           dirichlet=BoundaryTrace.from_function(space, case.u))
    system = assemble(space, prob, v, alpha_stab_scale)
    u, q = solve(system)
    return u, q, boundary_flux(u, q, system, prob.dirichlet), space


def run_eoc(case, meshes=(8, 16, 32, 64), v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    """Convergence study; ``err_flux`` is the boundary L2 error of ``sigma du/dnu``."""
    if isinstance(case, str):
        if case not in CASES:
            raise InvalidArgumentError(f"unknown case {case!r}; choose from {sorted(CASES)}")
        case = CASES[case]()
    report = EocReport(case.name, list(meshes), [], {k: [] for k in ("u", "flux", "qx", "qy")})
    for n in meshes:
        u, q, flux, space = solve_case(case, n, v, alpha_stab_scale)
        pts = space.boundary_points
        nrm = space.boundary_normals[:, None, :]
        exact = case.qx(pts[..., 0], pts[..., 1]) * nrm[..., 0] \
            + case.qy(pts[..., 0], pts[..., 1]) * nrm[..., 1]
        report.n_cells.append(space.n_cells)
        report.errors["u"].append(l2_error(u, case.u))
        report.errors["flux"].append((flux - BoundaryTrace(space, exact)).norm())
        report.errors["qx"].append(l2_error(q.component(0), case.qx))
        report.errors["qy"].append(l2_error(q.component(1), case.qy))
    return report


def _fmt(x):
    return format(float(x), ".17g")
