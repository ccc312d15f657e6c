"""Discrete Dirichlet-to-Neumann map and its first derivative.

``F(sigma, f) = sigma du/dnu`` is the conservative LDG boundary flux of the
solution with Dirichlet data ``f`` and no source.

The derivative in a direction ``dsigma`` is obtained from the linearized mixed
system: the perturbed flux ``dq = sigma grad du + dsigma grad u`` satisfies::

    M_sigma dq = B du + (sigma^-2 dsigma q, w)        (du = 0 on the boundary)
    D dq + P du = 0

and ``DF dsigma = dq_hat . nu``.  The adjoint applies the Sobolev gradient: with
``u*`` the solution for boundary data ``phi``, ``w`` solves
``-lap w + w = grad u . grad u*`` with ``w = 0`` on the boundary, the gradients
being the LDG fluxes divided by sigma.
"""
from dataclasses import dataclass, field

import numpy as np

from .dgcore import LOCAL_DIM, BoundaryTrace, DgFunction, FluxField
from .exceptions import InvalidArgumentError
from .mdldg import EllipticProblem, LdgSystem, get_structure
from .mesh import DEFAULT_UPWIND


@dataclass(eq=False)
class ForwardCache:
    """Factorized sigma-system and the solutions for every measurement."""
    sigma: DgFunction
    system: LdgSystem
    fs: list
    U: np.ndarray       # (6N, M)
    Q: np.ndarray       # (12N, M)
    F: np.ndarray       # (n_trace, M)
    _qquad: np.ndarray = field(default=None, repr=False)

    @property
    def space(self):
        return self.sigma.space

    @property
    def n_measurements(self):
        return len(self.fs)

    def u(self, j):
        return DgFunction(self.space, self.U[:, j])

    def q(self, j):
        return FluxField(self.space, self.Q[:, j])

    def flux(self, j):
        return BoundaryTrace(self.space, self.F[:, j].reshape(self.space.trace_shape))

    def flux_quad(self):
        """Flux fields at quadrature points, shape (N, 16, 2, M)."""
        if self._qquad is None:
            m = self.Q.shape[1]
            ql = self.Q.reshape(-1, 2, LOCAL_DIM, m)
            self._qquad = np.einsum("kcim,qi->kqcm", ql, self.space.phi)
        return self._qquad

    def _check(self, j):
        if not 0 <= j < self.n_measurements:
            raise IndexError(f"measurement {j} out of range [0, {self.n_measurements})")


def _traces_matrix(space, traces):
    if not traces:
        return np.zeros((space.trace_shape[0] * space.trace_shape[1], 0))
    for t in traces:
        if t.space is not space:
            raise InvalidArgumentError("boundary traces must share the sigma space")
    return np.column_stack([t.values.ravel() for t in traces])


def build_cache(sigma, fs, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    """Factorize the sigma-system once and solve for every boundary voltage."""
    space = sigma.space
    structure = get_structure(space, v, alpha_stab_scale)
    system = LdgSystem(structure, EllipticProblem(sigma))
    fs = list(fs)
    data = _traces_matrix(space, fs)
    if data.shape[1]:
        U, Q = system.solve_many(dirichlet=data)
        F = system.numerical_flux(U, Q, data)
    else:
        U = np.zeros((space.dim, 0))
        Q = np.zeros((2 * space.dim, 0))
        F = np.zeros((data.shape[0], 0))
    return ForwardCache(sigma, system, fs, U, Q, F)


def forward_map(sigma, f, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    """Solve ``div(sigma grad u) = 0``, ``u = f``; return ``(u, q, F)``."""
    cache = build_cache(sigma, [f], v, alpha_stab_scale)
    return cache.u(0), cache.q(0), cache.flux(0)


def _flux_loads(cache, dsigma_coeffs, cols):
    """``(sigma^-2 dsigma q_j, w)`` for the measurements ``cols``; shape (12N, len(cols))."""
    space = cache.space
    sig = cache.system.sigma_quad
    ds = dsigma_coeffs.reshape(-1, LOCAL_DIM) @ space.phi.T
    scal = ds / (sig * sig) * space.weights                       # (N, 16)
    qq = cache.flux_quad()[..., cols]                              # (N, 16, 2, m)
    h = np.einsum("kq,kqcm,qi->kcim", scal, qq, space.phi)
    return h.reshape(2 * space.dim, len(cols))


def df_apply_many(cache, dsigma_coeffs):
    """``DF(sigma, f_j) dsigma`` for all measurements; shape (n_trace, M)."""
    m = cache.n_measurements
    if m == 0:
        return np.zeros((cache.F.shape[0], 0))
    h = _flux_loads(cache, dsigma_coeffs, list(range(m)))
    dU, dQ = cache.system.solve_many(flux_load=h)
    return cache.system.numerical_flux(dU, dQ)


def df_apply(cache, j, dsigma):
    """Linearized boundary flux ``DF(sigma, f_j)(dsigma)``."""
    cache._check(j)
    h = _flux_loads(cache, dsigma.coeffs, [j])
    dU, dQ = cache.system.solve_many(flux_load=h)
    vals = cache.system.numerical_flux(dU, dQ)[:, 0]
    return BoundaryTrace(cache.space, vals.reshape(cache.space.trace_shape))


def gradient_source(cache, phis, cols=None):
    """``sum_j grad u_j . grad u*_j`` at quadrature points for traces ``phis`` (n_trace, m)."""
    space = cache.space
    if cols is None:
        cols = list(range(cache.n_measurements))
    Us, Qs = cache.system.solve_many(dirichlet=phis)
    m = phis.shape[1]
    qs = np.einsum("kcim,qi->kqcm", Qs.reshape(-1, 2, LOCAL_DIM, m), space.phi)
    qu = cache.flux_quad()[..., cols]
    sig = cache.system.sigma_quad
    return np.einsum("kqcm,kqcm->kq", qu, qs) / (sig * sig)


def sobolev_solve(structure, source_quad):
    """Solve ``-lap w + w = s``, ``w = 0`` on the boundary, with ``s`` at quadrature points."""
    space = structure.space
    W, _ = structure.sobolev().solve_many(source_load=space.load(source_quad)[:, None])
    return DgFunction(space, W[:, 0])


def adjoint_sum(cache, phis):
    """``sum_j (DF(sigma, f_j))^* phi_j`` for traces ``phis`` of shape (n_trace, M)."""
    space = cache.space
    if cache.n_measurements == 0:
        return space.zeros()
    return sobolev_solve(cache.system.structure, gradient_source(cache, phis))


def df_adjoint_apply(cache, j, phi):
    """Sobolev gradient ``(DF(sigma, f_j))^* phi``."""
    cache._check(j)
    s = gradient_source(cache, phi.values.reshape(-1, 1), [j])
    return sobolev_solve(cache.system.structure, s)
