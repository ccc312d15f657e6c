"""Scikit-learn style front end for conductivity reconstruction."""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .dgcore import BoundaryTrace, DgSpace, project
from .dtn import build_cache
from .inverse import InverseConfig, Measurements, gauss_newton
from .mesh import build_mesh
from .validation import check_box, check_is_fitted, check_positive_int, check_traces


class EITReconstructor(RegressorMixin, BaseEstimator):
    """Recover a conductivity from pairs of boundary voltages and currents.

    Rows of ``X`` are voltages ``f_j`` and rows of ``y`` the measured currents
    ``g_j``, both sampled at the boundary quadrature points of an
    ``nx x ny`` mesh (see :meth:`boundary_points`).  ``fit`` runs the
    Gauss-Newton reconstruction; ``predict`` applies the learned
    Dirichlet-to-Neumann map to new voltages.

    Parameters
    ----------
    nx, ny : int
        Reconstruction mesh.
    box : tuple
        ``(xmin, xmax, ymin, ymax)``.
    alpha : float
        Tikhonov weight of ``|sigma - sigma0|_H1^2``.
    tau, rho : float
        Discrepancy factor and inner CG tolerance, with ``rho^2 tau > 2``.
    max_outer, max_inner : int
        Iteration caps.
    sigma0 : float or callable
        Initial guess and regularization anchor, a constant or ``f(x, y)``.
    noise_level : float
        Bound ``delta`` on ``sum_j |g_j - g_j^true|``; 0 for exact data.
    alpha_stab_scale : float
        Outflow penalty is ``alpha_stab_scale / h``.
    cg_norm : {"h1", "l2"}
        Inner product used for the CG residual.

    Attributes
    ----------
    sigma_ : DgFunction
    space_ : DgSpace
    state_ : ReconstructionState
    n_iter_ : int
    misfit_ : float
    stop_reason_ : str
    """

    def __init__(self, nx=32, ny=32, box=(-1.0, 1.0, -1.0, 1.0), alpha=1e-8, tau=3.0,
                 rho=0.9, max_outer=50, max_inner=50, sigma0=1.0, noise_level=0.0,
                 alpha_stab_scale=1.0, cg_norm="h1"):
        self.nx = nx
        self.ny = ny
        self.box = box
        self.alpha = alpha
        self.tau = tau
        self.rho = rho
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.sigma0 = sigma0
        self.noise_level = noise_level
        self.alpha_stab_scale = alpha_stab_scale
        self.cg_norm = cg_norm

    def _space(self):
        nx = check_positive_int(self.nx, "nx")
        ny = check_positive_int(self.ny, "ny")
        return DgSpace(build_mesh(check_box(self.box), nx, ny))

    def boundary_points(self):
        """Boundary sample points, shape ``(n_trace, 2)``, in the order ``X`` expects."""
        space = getattr(self, "space_", None) or self._space()
        return space.boundary_points.reshape(-1, 2).copy()

    def _traces(self, space, arr):
        return [BoundaryTrace(space, row.reshape(space.trace_shape)) for row in arr]

    def fit(self, X, y):
        space = self._space()
        n_trace = space.boundary_weights.size
        X = check_traces(X, n_trace, "X")
        y = check_traces(y, n_trace, "y")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} measurements but y has {y.shape[0]}")
        cfg = InverseConfig(alpha_reg=self.alpha, tau=self.tau, rho=self.rho,
                            max_outer=self.max_outer, max_inner=self.max_inner,
                            sigma0=project(space, self.sigma0),
                            alpha_stab_scale=self.alpha_stab_scale, cg_norm=self.cg_norm)
        meas = Measurements(self._traces(space, X), self._traces(space, y),
                            float(self.noise_level))
        state = gauss_newton(meas, cfg, space)
        self.space_ = space
        self.state_ = state
        self.sigma_ = state.sigma
        self.n_iter_ = state.k
        self.misfit_ = state.misfit
        self.stop_reason_ = state.stop_reason
        self.n_features_in_ = n_trace
        return self

    def predict(self, X):
        """Boundary currents ``F(sigma_, f)`` for each row ``f`` of ``X``."""
        check_is_fitted(self, "sigma_")
        X = check_traces(X, self.n_features_in_, "X")
        cache = build_cache(self.sigma_, self._traces(self.space_, X),
                            alpha_stab_scale=self.alpha_stab_scale)
        return cache.F.T.copy()

    def conductivity(self, x, y):
        """Evaluate the recovered conductivity at physical points."""
        check_is_fitted(self, "sigma_")
        return self.sigma_(np.asarray(x, float), np.asarray(y, float))
