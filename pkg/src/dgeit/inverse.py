"""Tikhonov-regularized Gauss-Newton reconstruction of the conductivity.

Each outer step solves the linearized normal equation::

    (sum_j DF_j^* DF_j + alpha (Id - lap)) dsigma
        = -sum_j DF_j^* (F_j - g_j) - alpha (Id - lap)(sigma - sigma0)

by an inexact conjugate-gradient iteration.  ``DF^*`` is the Sobolev
(H1-Riesz) gradient from :mod:`dgeit.dtn`, so the CG runs in the H1 inner
product by default; there the term ``(Id - lap) p`` is represented by ``p``
itself.  ``cg_norm="l2"`` instead measures residuals in L2(Omega) and applies
``(Id - lap)`` as ``M^-1 (M + K)`` with the zero-trace LDG stiffness ``K``.
"""
import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .dgcore import DgFunction, inner_h1, project
from .dtn import ForwardCache, adjoint_sum, build_cache, df_apply_many
from .exceptions import CoefficientRangeError, InvalidArgumentError, SolverError
from .mdldg import get_structure, lifted_gradient
from .mesh import DEFAULT_UPWIND

logger = logging.getLogger(__name__)


@dataclass
class InverseConfig:
    """Parameters of the outer and inner iterations.

    ``sigma0`` is the initial guess and regularization anchor; ``None`` means
    the constant 1.  With noise level zero the outer loop stops once the
    misfit drops below ``misfit_floor``, improves by less than
    ``min_rel_reduction`` in one step, or the inner solve can no longer reach
    its ``rho`` target within ``max_inner`` steps.
    """
    alpha_reg: float = 1e-8
    tau: float = 3.0
    rho: float = 0.9
    max_outer: int = 50
    max_inner: int = 50
    sigma0: DgFunction = None
    misfit_floor: float = 1e-8
    min_rel_reduction: float = 1e-3
    cg_rtol: float = 1e-12
    cg_norm: str = "h1"
    v: tuple = DEFAULT_UPWIND
    alpha_stab_scale: float = 1.0

    def __post_init__(self):
        if self.alpha_reg < 0:
            raise InvalidArgumentError("alpha_reg must be nonnegative")
        if not self.tau > 1:
            raise InvalidArgumentError("tau must exceed 1")
        if not 0 < self.rho < 1:
            raise InvalidArgumentError("rho must lie in (0, 1)")
        if not self.rho ** 2 * self.tau > 2:
            raise InvalidArgumentError(
                f"need rho^2 * tau > 2, got {self.rho ** 2 * self.tau:.4g}")
        if self.cg_norm not in ("h1", "l2"):
            raise InvalidArgumentError(f"cg_norm must be 'h1' or 'l2', got {self.cg_norm!r}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidArgumentError("iteration caps must be positive")

    def initial_sigma(self, space):
        if self.sigma0 is None:
            return project(space, 1.0)
        if self.sigma0.space is not space:
            raise InvalidArgumentError("sigma0 lives on a different space")
        return self.sigma0


@dataclass
class Measurements:
    """Boundary voltages ``f`` and measured currents ``g`` with noise bound ``delta``."""
    f: list
    g: list
    delta: float = 0.0
    g_true: list = None

    def __post_init__(self):
        if len(self.f) != len(self.g):
            raise InvalidArgumentError("need one current trace per voltage trace")
        if self.delta < 0:
            raise InvalidArgumentError("noise level must be nonnegative")
        traces = list(self.f) + list(self.g) + list(self.g_true or [])
        if traces and any(t.space is not traces[0].space for t in traces):
            raise InvalidArgumentError("all traces must share one mesh and edge rule")

    @property
    def space(self):
        return self.f[0].space if self.f else None

    def __len__(self):
        return len(self.f)

    def g_matrix(self):
        return np.column_stack([t.values.ravel() for t in self.g])


@dataclass
class IterationRecord:
    k: int
    misfit: float
    inner_iterations: int
    dsigma_h1: float
    breakdown: bool = False


@dataclass
class ReconstructionState:
    sigma: DgFunction
    k: int
    cache: ForwardCache
    misfit: float
    history: list = field(default_factory=list)
    stop_reason: str = ""


@dataclass
class CgResult:
    dsigma: DgFunction
    iterations: int
    breakdown: bool
    linearized_misfits: list
    reached_target: bool = True


def residual_norms(cache, meas):
    """Per-measurement boundary norms ``||F(sigma, f_j) - g_j||``."""
    space = cache.space
    w = space.boundary_weights.ravel()
    if len(meas) == 0:
        return np.zeros(0)
    r = cache.F - meas.g_matrix()
    return np.sqrt(np.einsum("pm,p->m", r * r, w))


def data_misfit(cache, meas):
    """``sum_j ||F(sigma, f_j) - g_j||_{L2(boundary)}``."""
    return float(np.sum(residual_norms(cache, meas)))


def _h1_norm_sq(f, zero_trace):
    g = lifted_gradient(f, zero_trace=zero_trace)
    return inner_h1(f, f, g, g)


def objective(state, meas, cfg):
    """``1/2 sum_j ||F_j - g_j||^2 + alpha/2 ||sigma - sigma0||_H1^2``."""
    data = 0.5 * float(np.sum(residual_norms(state.cache, meas) ** 2))
    if cfg.alpha_reg == 0:
        return data
    diff = state.sigma - cfg.initial_sigma(state.sigma.space)
    return data + 0.5 * cfg.alpha_reg * _h1_norm_sq(diff, zero_trace=False)


def _riesz(structure, coeffs):
    """Discrete ``(Id - lap) p = M^-1 (M + K) p``."""
    S = structure.sobolev().A
    return (S @ coeffs) / structure.mass


def _regularizer(structure, cg_norm):
    if cg_norm == "h1":
        return lambda a: a
    return lambda a: _riesz(structure, a)


def _normal_apply(cache, p, alpha, reg):
    """Return ``A p`` and the stacked ``DF_j p`` traces."""
    dfp = df_apply_many(cache, p)
    ap = adjoint_sum(cache, dfp).coeffs if dfp.shape[1] else np.zeros_like(p)
    if alpha:
        ap = ap + alpha * reg(p)
    return ap, dfp


def apply_normal_operator(state, p, cfg):
    """``(sum_j DF_j^* DF_j + alpha (Id - lap)) p`` at the current iterate.

    The regularization term follows ``cfg.cg_norm``: ``p`` itself in H1-Riesz
    form, ``M^-1 (M + K) p`` in L2 form.
    """
    reg = _regularizer(state.cache.system.structure, cfg.cg_norm)
    ap, _ = _normal_apply(state.cache, p.coeffs, cfg.alpha_reg, reg)
    return DgFunction(p.space, ap)


def _trace_norms(space, traces):
    w = space.boundary_weights.ravel()
    return np.sqrt(np.einsum("pm,p->m", traces * traces, w))


def cg_solve(state, meas, cfg):
    """Inexact CG for the Gauss-Newton update, started from zero.

    Stops at the first iterate whose linearized misfit
    ``sum_j ||g_j - F_j - DF_j dsigma||`` falls below ``rho`` times the current
    misfit, after ``max_inner`` steps, or once the residual has shrunk by
    ``cg_rtol``.  The step length is ``|r|^2 / (sum_j |DF_j p|^2 + alpha |p|_H1^2)``.
    """
    cache = state.cache
    space = state.sigma.space
    structure = cache.system.structure
    mass = structure.mass
    S = structure.sobolev().A
    if cfg.cg_norm == "h1":
        norm_sq = lambda a: float(a @ (S @ a))
    else:
        norm_sq = lambda a: float(a @ (mass * a))
    reg = _regularizer(structure, cfg.cg_norm)
    alpha = cfg.alpha_reg
    if len(meas):
        res = meas.g_matrix() - cache.F
    else:
        res = np.zeros((space.boundary_weights.size, 0))
    target = cfg.rho * float(np.sum(_trace_norms(space, res)))

    r = np.zeros(space.dim)
    if res.shape[1]:
        r -= adjoint_sum(cache, -res).coeffs
    if alpha:
        r -= alpha * reg((state.sigma - cfg.initial_sigma(space)).coeffs)
    x = np.zeros(space.dim)
    dfx = np.zeros_like(res)
    p = r.copy()
    rr = norm_sq(r)
    rr0 = rr
    lin = [float(np.sum(_trace_norms(space, res)))]
    breakdown = False
    it = 0
    while it < cfg.max_inner:
        if lin[-1] < target or rr <= cfg.cg_rtol ** 2 * rr0 or rr == 0.0:
            break
        ap, dfp = _normal_apply(cache, p, alpha, reg)
        denom = float(np.sum(_trace_norms(space, dfp) ** 2))
        if alpha:
            denom += alpha * float(p @ (S @ p))
        if not denom > 0.0:
            breakdown = True
            logger.warning("CG breakdown at inner step %d (zero curvature)", it)
            break
        step = rr / denom
        x += step * p
        dfx += step * dfp
        r -= step * ap
        rr_new = norm_sq(r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        lin.append(float(np.sum(_trace_norms(space, res - dfx))))
    return CgResult(DgFunction(space, x), it, breakdown, lin, lin[-1] < target)


def gauss_newton(meas, cfg, space, callback=None):
    """Outer Gauss-Newton loop with discrepancy-principle stopping.

    Parameters
    ----------
    meas : Measurements
    cfg : InverseConfig
    space : DgSpace
        Reconstruction space; the traces in ``meas`` must live on it.
    callback : callable, optional
        Called with the state after every outer step.
    """
    if len(meas) and meas.space is not space:
        raise InvalidArgumentError("measurements were sampled on a different space")
    get_structure(space, cfg.v, cfg.alpha_stab_scale)
    sigma = cfg.initial_sigma(space).copy()
    cache = build_cache(sigma, meas.f, cfg.v, cfg.alpha_stab_scale)
    state = ReconstructionState(sigma, 0, cache, data_misfit(cache, meas))
    state.history.append(IterationRecord(0, state.misfit, 0, 0.0))
    noisy = meas.delta > 0
    threshold = cfg.tau * meas.delta
    logger.info("k=0 misfit=%.6e threshold=%.6e", state.misfit, threshold)

    while True:
        if noisy and state.misfit <= threshold:
            state.stop_reason = "discrepancy"
            break
        if not noisy and state.misfit < cfg.misfit_floor:
            state.stop_reason = "misfit_floor"
            break
        if state.k >= cfg.max_outer:
            state.stop_reason = "max_outer"
            break
        result = cg_solve(state, meas, cfg)
        if not noisy and not result.reached_target and result.iterations >= cfg.max_inner:
            # the linearized model cannot explain a further (1 - rho) of the
            # residual: the remaining misfit is model error, not signal
            state.stop_reason = "inner_exhausted"
            break
        new_sigma = state.sigma + result.dsigma
        try:
            new_cache = build_cache(new_sigma, meas.f, cfg.v, cfg.alpha_stab_scale)
        except SolverError as exc:
            raise SolverError(f"outer iteration {state.k + 1}: {exc}",
                              exc.condition_estimate) from exc
        except CoefficientRangeError as exc:
            raise CoefficientRangeError(f"outer iteration {state.k + 1}: {exc}") from exc
        previous = state.misfit
        state.sigma = new_sigma
        state.cache = new_cache
        state.k += 1
        state.misfit = data_misfit(new_cache, meas)
        dnorm = np.sqrt(_h1_norm_sq(result.dsigma, zero_trace=True))
        state.history.append(IterationRecord(state.k, state.misfit, result.iterations,
                                             float(dnorm), result.breakdown))
        logger.info("k=%d misfit=%.6e inner=%d |dsigma|_H1=%.3e", state.k, state.misfit,
                    result.iterations, dnorm)
        if callback is not None:
            callback(state)
        if not noisy and previous > 0 and (previous - state.misfit) / previous < cfg.min_rel_reduction:
            state.stop_reason = "stagnation"
            break
    return state


def write_history_csv(state, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "misfit", "inner_iterations", "dsigma_h1"])
        for rec in state.history:
            w.writerow([rec.k, format(rec.misfit, ".17g"), rec.inner_iterations,
                        format(rec.dsigma_h1, ".17g")])
