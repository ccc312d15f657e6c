"""Minimal-dissipation LDG solver for ``-div(sigma grad u) + c u = r``, ``u = b`` on the boundary.

Mixed form with ``q = sigma grad u``, tested cell by cell::

    (sigma^-1 q, w)_K + (u, div w)_K - <u_hat, w.n>_dK = 0
    (q, grad v)_K - <q_hat.n, v>_dK + c (u, v)_K       = (r, v)_K

Fluxes, with ``s = sign(v_up . n_K)`` for a fixed upwind vector ``v_up``::

    interior:  u_hat = {u} + beta.[[u]],   q_hat = {q} - beta [[q]],   beta.n_K = s/2
    boundary:  u_hat = b,   q_hat = q (inflow),   q_hat = q - a_stab (u - b) n (outflow)

so ``u_hat`` is the upwind trace and ``q_hat`` the downwind trace.  The
penalty on outflow edges is what controls the last cells downstream of
``v_up``; without it those cells have a three-dimensional kernel.  In matrix
form, with coefficient vectors ``U`` (6 per cell) and ``Q`` (12 per cell)::

    M_sigma Q = B U + L_dir b + h
    D Q + (P + c M) U = R + P_dir b

Interior stabilization is zero.  ``D == B.T``, so the reduced operator
``D M_sigma^-1 B + P + c M`` is symmetric positive definite.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dgcore import LOCAL_DIM, BoundaryTrace, DgFunction, DgSpace, FluxField
from .exceptions import CoefficientRangeError, InvalidArgumentError, SolverError
from .mesh import DEFAULT_UPWIND, classify_edges

RESIDUAL_TOL = 1e-10


@dataclass
class EllipticProblem:
    """Coefficient and data of one elliptic solve.

    ``source`` and ``dirichlet`` default to zero.
    """
    sigma: DgFunction
    reaction: float = 0.0
    source: DgFunction = None
    dirichlet: BoundaryTrace = None

    def __post_init__(self):
        if self.reaction < 0:
            raise InvalidArgumentError("reaction coefficient must be nonnegative")


def _coo_blocks(row_start, col_start, blocks):
    n, a, b = blocks.shape
    rows = row_start[:, None, None] + np.arange(a)[None, :, None]
    cols = col_start[:, None, None] + np.arange(b)[None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    return rows.ravel(), cols.ravel(), blocks.ravel()


class _Builder:
    def __init__(self, shape):
        self.shape = shape
        self.parts = []

    def add(self, row_start, col_start, blocks):
        self.parts.append(_coo_blocks(np.asarray(row_start), np.asarray(col_start), blocks))

    def tocsr(self):
        if not self.parts:
            return sp.csr_matrix(self.shape)
        rows = np.concatenate([p[0] for p in self.parts])
        cols = np.concatenate([p[1] for p in self.parts])
        vals = np.concatenate([p[2] for p in self.parts])
        return sp.coo_matrix((vals, (rows, cols)), shape=self.shape).tocsr()


class LdgStructure:
    """Coefficient-independent LDG matrices for a space, upwind vector and penalty."""

    def __init__(self, space, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
        if alpha_stab_scale <= 0:
            raise InvalidArgumentError("alpha_stab_scale must be positive")
        mesh = space.mesh
        self.space = space
        self.alpha_stab_scale = float(alpha_stab_scale)
        self.classification = classify_edges(mesh, v)
        self.alpha_stab = alpha_stab_scale / mesh.h
        n = mesh.n_cells
        nu, nq = 6 * n, 12 * n
        nbe = mesh.boundary_edges.size
        nqp = space.edge_points.size
        ntr = nbe * nqp
        L = LOCAL_DIM

        # G[c][i, j] = int phi_j d_c phi_i
        grads = (space.dphi_dx, space.dphi_dy)
        G = np.stack([np.einsum("q,qj,qi->ij", space.weights, space.phi, g) for g in grads])
        # reference face mass between two local faces, per unit half-length
        w = space.edge_weights
        fphi = space.face_phi
        face_mass = np.einsum("p,api,bpj->abij", w, fphi, fphi)

        B = _Builder((nq, nu))
        D = _Builder((nu, nq))
        cells = np.arange(n)
        # volume terms: B gets -(u, div w), D gets (q, grad v)
        vol_B = np.broadcast_to(-G.reshape(2 * L, L), (n, 2 * L, L))
        B.add(12 * cells, 6 * cells, vol_B)
        vol_D = np.broadcast_to(G.transpose(1, 0, 2).reshape(L, 2 * L), (n, L, 2 * L))
        D.add(6 * cells, 12 * cells, vol_D)

        sign = self.classification.sign
        e_int = mesh.interior_edges
        half = 0.5 * mesh.lengths
        for a, b in ((0, 1), (1, 0)):
            ka = mesh.cells[e_int, a]
            kb = mesh.cells[e_int, b]
            fa = mesh.faces[e_int, a]
            fb = mesh.faces[e_int, b]
            na = mesh.normals[e_int] * (1.0 if a == 0 else -1.0)
            sa = sign[e_int] * (1.0 if a == 0 else -1.0)
            h = half[e_int]
            m_own = face_mass[fa, fa] * h[:, None, None]
            m_nb = face_mass[fa, fb] * h[:, None, None]
            # u_hat upwind, q_hat downwind
            lam_own, lam_nb = 0.5 * (1 + sa), 0.5 * (1 - sa)
            mu_own, mu_nb = 0.5 * (1 - sa), 0.5 * (1 + sa)
            # B rows (c, i), cols j: + <u_hat, n_c phi_i>
            B.add(12 * ka, 6 * ka, _stack_c(na, m_own * lam_own[:, None, None]))
            B.add(12 * ka, 6 * kb, _stack_c(na, m_nb * lam_nb[:, None, None]))
            # D rows i, cols (c, j): - <q_hat . n, phi_i>
            D.add(6 * ka, 12 * ka, -_stack_cols(na, m_own * mu_own[:, None, None]))
            D.add(6 * ka, 12 * kb, -_stack_cols(na, m_nb * mu_nb[:, None, None]))

        e_bnd = mesh.boundary_edges
        kb_ = mesh.cells[e_bnd, 0]
        fb_ = mesh.faces[e_bnd, 0]
        nb_ = mesh.normals[e_bnd]
        hb = half[e_bnd]
        m_bnd = face_mass[fb_, fb_] * hb[:, None, None]
        D.add(6 * kb_, 12 * kb_, -_stack_cols(nb_, m_bnd))

        # trace-to-moment blocks: (len/2) w_p phi_i(p)
        tr_blocks = fphi[fb_] * (hb[:, None] * w[None, :])[:, :, None]   # (nbe, p, i)
        tr_blocks = tr_blocks.transpose(0, 2, 1)                           # (nbe, i, p)
        pos = np.arange(nbe)
        Ldir = _Builder((nq, ntr))
        Ldir.add(12 * kb_, nqp * pos, _stack_c(nb_, tr_blocks))

        outflow = np.isin(e_bnd, self.classification.outflow)
        P = _Builder((nu, nu))
        P.add(6 * kb_[outflow], 6 * kb_[outflow], self.alpha_stab * m_bnd[outflow])
        Pdir = _Builder((nu, ntr))
        Pdir.add(6 * kb_[outflow], nqp * pos[outflow], self.alpha_stab * tr_blocks[outflow])

        self.B = B.tocsr()
        self.D = D.tocsr()
        self.L_dir = Ldir.tocsr()
        self.P = P.tocsr()
        self.P_dir = Pdir.tocsr()
        self.outflow_mask = outflow
        self.mass = space.mass_matrix()
        self._sobolev = None

    def flux_mass_inverse(self, sigma=None):
        """Block-diagonal inverse of the sigma^-1-weighted mass for q, and sigma at quad points."""
        space = self.space
        n = space.n_cells
        if sigma is None:
            inv_diag = np.tile(1.0 / space.mass_diag, 2 * n)
            return sp.diags(inv_diag).tocsr(), None
        s = sigma.quad_values()
        if not np.all(np.isfinite(s)) or np.any(s <= 0.0):
            k, q = np.unravel_index(np.argmin(np.where(np.isfinite(s), s, -np.inf)), s.shape)
            raise CoefficientRangeError(
                f"conductivity not positive: sigma = {s[k, q]:.6g} at "
                f"{tuple(np.round(space.quad_points[k, q], 6))} (cell {k})")
        m_sig = np.einsum("q,kq,qi,qj->kij", space.weights, 1.0 / s, space.phi, space.phi)
        inv = np.linalg.inv(m_sig)
        blocks = np.repeat(inv, 2, axis=0)            # both components share a block
        starts = 6 * np.arange(2 * n)
        rows, cols, vals = _coo_blocks(starts, starts, blocks)
        return sp.csr_matrix((vals, (rows, cols)), shape=(12 * n, 12 * n)), s

    def sobolev(self):
        """Factorized system for ``-lap w + w = s`` with ``w = 0`` on the boundary."""
        if self._sobolev is None:
            prob = EllipticProblem(sigma=None, reaction=1.0)
            self._sobolev = LdgSystem(self, prob, unit_sigma=True)
        return self._sobolev

    def stiffness(self):
        """Zero-trace LDG stiffness ``B.T M^-1 B + P`` with unit coefficient."""
        minv, _ = self.flux_mass_inverse(None)
        return (self.D @ minv @ self.B + self.P).tocsr()


def _stack_c(normals, blocks):
    """(E, 6, k) blocks -> (E, 12, k) scaled by each normal component."""
    return np.concatenate([normals[:, 0, None, None] * blocks,
                           normals[:, 1, None, None] * blocks], axis=1)


def _stack_cols(normals, blocks):
    """(E, 6, 6) blocks -> (E, 6, 12), columns ordered (component, j)."""
    return np.concatenate([normals[:, 0, None, None] * blocks,
                           normals[:, 1, None, None] * blocks], axis=2)


def get_structure(space, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    key = (tuple(float(c) for c in v), float(alpha_stab_scale))
    cache = space._cache.setdefault("ldg", {})
    if key not in cache:
        cache[key] = LdgStructure(space, v, alpha_stab_scale)
    return cache[key]


class LdgSystem:
    """Reduced, factorized LDG system for one coefficient.

    The factorization is reused for any number of right-hand sides via
    :meth:`solve_many`.
    """

    def __init__(self, structure, problem, unit_sigma=False):
        self.structure = structure
        self.space = structure.space
        self.problem = problem
        if unit_sigma:
            self.minv, self.sigma_quad = structure.flux_mass_inverse(None)
        else:
            self.minv, self.sigma_quad = structure.flux_mass_inverse(problem.sigma)
        st = structure
        A = st.D @ self.minv @ st.B + st.P
        if problem.reaction:
            A = A + sp.diags(problem.reaction * st.mass)
        self.A = A.tocsc()
        try:
            self.lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}",
                              condition_estimate=float("inf")) from exc

    @property
    def alpha_stab(self):
        return self.structure.alpha_stab

    def _condition_estimate(self):
        n = self.A.shape[0]
        inv = spla.LinearOperator((n, n), matvec=self.lu.solve, rmatvec=lambda x: self.lu.solve(x, trans="T"))
        return float(spla.onenormest(self.A) * spla.onenormest(inv))

    def solve_many(self, source_load=None, dirichlet=None, flux_load=None):
        """Solve for several right-hand sides at once.

        Parameters
        ----------
        source_load : ndarray (6N, k), optional
            Moments ``(r, v)`` of the source.
        dirichlet : ndarray (n_trace, k), optional
            Flattened Dirichlet traces.
        flux_load : ndarray (12N, k), optional
            Extra load ``h`` in the first (flux) equation.

        Returns
        -------
        U, Q : ndarrays (6N, k) and (12N, k)
        """
        st = self.structure
        k = next((x.shape[1] for x in (source_load, dirichlet, flux_load) if x is not None), 1)
        nu = self.space.dim
        rhs = np.zeros((nu, k))
        qload = np.zeros((2 * nu, k))
        if source_load is not None:
            rhs += source_load
        if dirichlet is not None:
            qload += st.L_dir @ dirichlet
            rhs += st.P_dir @ dirichlet
        if flux_load is not None:
            qload += flux_load
        rhs -= st.D @ (self.minv @ qload)
        U = self.lu.solve(rhs)
        if U.ndim == 1:
            U = U[:, None]
        res = np.linalg.norm(self.A @ U - rhs, axis=0)
        scale = np.linalg.norm(rhs, axis=0)
        bad = res > RESIDUAL_TOL * np.maximum(scale, 1e-300)
        bad &= res > 1e-14
        if np.any(bad):
            raise SolverError(
                f"LDG residual {res[bad].max():.3e} exceeds tolerance "
                f"(relative {RESIDUAL_TOL:g})", condition_estimate=self._condition_estimate())
        Q = self.minv @ (st.B @ U + qload)
        return U, Q

    def numerical_flux(self, U, Q, dirichlet=None):
        """``q_hat . n`` on boundary quadrature points, shape (n_trace, k)."""
        space = self.space
        mesh = space.mesh
        bnd = mesh.boundary_edges
        cells = mesh.cells[bnd, 0]
        faces = mesh.faces[bnd, 0]
        fphi = space.face_phi[faces]                         # (nbe, p, i)
        k = U.shape[1]
        Ql = Q.reshape(-1, 2, LOCAL_DIM, k)[cells]            # (nbe, 2, i, k)
        Ul = U.reshape(-1, LOCAL_DIM, k)[cells]
        qn = np.einsum("ecik,ec->eik", Ql, space.boundary_normals)
        flux = np.einsum("epi,eik->epk", fphi, qn)
        u_tr = np.einsum("epi,eik->epk", fphi, Ul)
        if dirichlet is not None:
            u_tr = u_tr - dirichlet.reshape(flux.shape)
        out = self.structure.outflow_mask
        flux[out] -= self.alpha_stab * u_tr[out]
        return flux.reshape(-1, k)


def assemble(space, prob, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    """Assemble and factorize the reduced LDG system for ``prob``.

    Raises
    ------
    CoefficientRangeError
        If ``prob.sigma`` is not positive at some quadrature point.
    """
    if not isinstance(space, DgSpace):
        raise InvalidArgumentError("assemble needs a DgSpace")
    if prob.sigma is None or prob.sigma.space is not space:
        raise InvalidArgumentError("sigma must live on the assembly space")
    return LdgSystem(get_structure(space, v, alpha_stab_scale), prob)


def solve(sys):
    """Solve the problem the system was assembled with; returns ``(u, q)``."""
    prob = sys.problem
    space = sys.space
    load = None
    if prob.source is not None:
        load = (prob.source.local * space.mass_diag).reshape(-1, 1)
    dirichlet = None
    if prob.dirichlet is not None:
        dirichlet = prob.dirichlet.values.reshape(-1, 1)
    U, Q = sys.solve_many(load, dirichlet)
    return DgFunction(space, U[:, 0]), FluxField(space, Q[:, 0])


def boundary_flux(u, q, system, dirichlet=None):
    """Conservative boundary flux ``q_hat . nu`` of a solution ``(u, q)``.

    Equals the trace of ``q . nu`` on inflow edges; on outflow edges it includes
    the penalty ``-a_stab (u - b)``, which makes ``int q_hat . nu`` match the
    source exactly.
    """
    d = None if dirichlet is None else dirichlet.values.reshape(-1, 1)
    vals = system.numerical_flux(u.coeffs[:, None], q.coeffs[:, None], d)
    return BoundaryTrace(u.space, vals[:, 0].reshape(u.space.trace_shape))


def lifted_gradient(f, zero_trace=False, v=DEFAULT_UPWIND, alpha_stab_scale=1.0):
    """LDG discrete gradient of ``f`` with unit coefficient.

    ``M q = B f + L_dir b`` with ``b`` the trace of ``f`` itself, or zero when
    ``zero_trace`` is set.
    """
    st = get_structure(f.space, v, alpha_stab_scale)
    load = st.B @ f.coeffs
    if not zero_trace:
        load = load + st.L_dir @ f.trace().values.ravel()
    inv = np.tile(1.0 / f.space.mass_diag, 2 * f.space.n_cells)
    return FluxField(f.space, inv * load)
