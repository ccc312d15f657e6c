import numpy as np
import pytest

from dgeit.dgcore import BoundaryTrace, DgFunction, DgSpace, project
from dgeit.dtn import build_cache
from dgeit.exceptions import InvalidArgumentError
from dgeit.experiments import PHANTOMS, NoiseModel, generate_data, measurement_suite
from dgeit.inverse import (InverseConfig, Measurements, ReconstructionState,
                           apply_normal_operator, cg_solve, data_misfit, gauss_newton, objective,
                           write_history_csv)
from dgeit.mesh import build_mesh

BOX = (-1.0, 1.0, -1.0, 1.0)
BUMP = lambda x, y: 0.5 * np.exp(-8 * (x * x + (y - 0.55) ** 2)) * (1 - x * x) * (1 - y * y)


def _state(space, sigma, meas):
    cache = build_cache(sigma, meas.f)
    return ReconstructionState(sigma, 0, cache, data_misfit(cache, meas))


def _self_data(space, sigma):
    fs = measurement_suite(space)
    c = build_cache(sigma, fs)
    return Measurements(fs, [c.flux(j) for j in range(len(fs))])


@pytest.fixture(scope="module")
def space8():
    return DgSpace(build_mesh(BOX, 8, 8))


@pytest.fixture(scope="module")
def blob_meas(space8):
    return generate_data(PHANTOMS["single_blob"], build_mesh(BOX, 16, 16), space8,
                         NoiseModel(0.0, 0))


@pytest.mark.parametrize("kw", [dict(alpha_reg=-1), dict(tau=1.0), dict(rho=1.0),
                                dict(rho=0.5, tau=3.0), dict(max_outer=0), dict(cg_norm="l1")])
def test_config_validation(kw):
    with pytest.raises(InvalidArgumentError):
        InverseConfig(**kw)


def test_measurements_validation(space8):
    other = DgSpace(build_mesh(BOX, 4, 4))
    f = measurement_suite(space8)
    with pytest.raises(InvalidArgumentError):
        Measurements(f, f[:2])
    with pytest.raises(InvalidArgumentError):
        Measurements(f[:1], measurement_suite(other)[:1])
    with pytest.raises(InvalidArgumentError):
        Measurements(f, f, delta=-1.0)


def test_objective_zero_on_exact_data(space8):
    sigma = project(space8, lambda x, y: 1 + BUMP(x, y))
    meas = _self_data(space8, sigma)
    cfg = InverseConfig(alpha_reg=0.0)
    assert objective(_state(space8, sigma, meas), meas, cfg) < 1e-25


def test_objective_is_half_squared_misfit(space8, blob_meas):
    st = _state(space8, project(space8, 1.0), blob_meas)
    norms = [(st.cache.flux(j) - blob_meas.g[j]).norm() for j in range(4)]
    assert objective(st, blob_meas, InverseConfig()) == pytest.approx(0.5 * sum(n * n for n in norms))
    assert st.misfit == pytest.approx(sum(norms))


def test_objective_frozen_32():
    space = DgSpace(build_mesh(BOX, 32, 32))
    meas = generate_data(PHANTOMS["single_blob"], build_mesh(BOX, 64, 64), space,
                         NoiseModel(0.0, 0))
    st = _state(space, project(space, 1.0), meas)
    assert st.misfit == pytest.approx(1.4075627464208882, rel=1e-9)
    assert objective(st, meas, InverseConfig()) == pytest.approx(0.26844140360626184, rel=1e-9)


def test_cg_zero_rhs(space8):
    sigma = project(space8, 1.0)
    meas = _self_data(space8, sigma)
    res = cg_solve(_state(space8, sigma, meas), meas, InverseConfig())
    assert res.iterations == 0 and np.abs(res.dsigma.coeffs).max() == 0


@pytest.mark.parametrize("norm", ["h1", "l2"])
def test_cg_without_measurements_returns_anchor(space8, norm):
    sigma = project(space8, lambda x, y: 1 + BUMP(x, y))
    sigma0 = project(space8, 1.0)
    meas = Measurements([], [])
    cfg = InverseConfig(alpha_reg=1.0, sigma0=sigma0, max_inner=200, cg_norm=norm)
    res = cg_solve(_state(space8, sigma, meas), meas, cfg)
    assert np.allclose((sigma + res.dsigma).coeffs, sigma0.coeffs, atol=1e-8)


def test_normal_operator_basics(space8, blob_meas, rng):
    st = _state(space8, project(space8, 1.0), blob_meas)
    cfg = InverseConfig(alpha_reg=1e-3)
    assert np.abs(apply_normal_operator(st, space8.zeros(), cfg).coeffs).max() == 0
    p = project(space8, BUMP)
    a1 = apply_normal_operator(st, p, cfg).coeffs
    assert np.allclose(apply_normal_operator(st, p * 2.0, cfg).coeffs, 2 * a1)
    empty = Measurements([], [])
    st0 = _state(space8, project(space8, 1.0), empty)
    zero = apply_normal_operator(st0, p, InverseConfig(alpha_reg=0.0))
    assert np.abs(zero.coeffs).max() == 0


def _spd_defect(n, rng):
    space = DgSpace(build_mesh(BOX, n, n))
    meas = _self_data(space, project(space, 1.0))
    st = _state(space, project(space, lambda x, y: 1 + BUMP(x, y)), meas)
    cfg = InverseConfig(alpha_reg=1e-4)
    S = st.cache.system.structure.sobolev().A
    # smooth random directions vanishing on the boundary
    c = rng.standard_normal((2, 4))
    bub = lambda x, y: (1 - x * x) * (1 - y * y)
    p1 = project(space, lambda x, y: bub(x, y) * (c[0, 0] + c[0, 1] * x + c[0, 2] * y + c[0, 3] * x * y))
    p2 = project(space, lambda x, y: bub(x, y) * (c[1, 0] + c[1, 1] * x * x + c[1, 2] * y + c[1, 3] * x))
    ip = lambda a, b: float(a.coeffs @ (S @ b.coeffs))
    a1, a2 = apply_normal_operator(st, p1, cfg), apply_normal_operator(st, p2, cfg)
    return ip(a1, p1), ip(a1, p2), ip(p1, a2)


def test_normal_operator_spd(rng):
    seed = rng.integers(1 << 30)
    pos, x12, x21 = _spd_defect(8, np.random.default_rng(seed))
    assert pos > 0
    d8 = abs(x12 - x21) / abs(x12)
    _, y12, y21 = _spd_defect(16, np.random.default_rng(seed))
    assert abs(y12 - y21) / abs(y12) < max(d8, 1e-10)


def test_stops_immediately_on_exact_data(space8):
    sigma = project(space8, 1.0)
    meas = _self_data(space8, sigma)
    st = gauss_newton(meas, InverseConfig(), space8)
    assert st.k == 0 and st.stop_reason == "misfit_floor"
    assert np.array_equal(st.sigma.coeffs, sigma.coeffs)


def test_misfit_recomputable_and_monotone_cg(space8, blob_meas):
    seen = []

    def check(state):
        assert state.misfit == pytest.approx(data_misfit(state.cache, blob_meas), rel=1e-12)
        seen.append(state.misfit)

    st = gauss_newton(blob_meas, InverseConfig(max_outer=6), space8, callback=check)
    assert seen and seen[-1] < seen[0] < st.history[0].misfit
    res = cg_solve(st, blob_meas, InverseConfig())
    lm = np.array(res.linearized_misfits)
    assert np.all(np.diff(lm) <= 1e-12 * lm[0])


def test_discrepancy_invariant(space8):
    meas = generate_data(PHANTOMS["single_blob"], build_mesh(BOX, 16, 16), space8,
                         NoiseModel(0.01, 3))
    cfg = InverseConfig(max_outer=30)
    st = gauss_newton(meas, cfg, space8)
    assert st.misfit <= cfg.tau * meas.delta or st.k == cfg.max_outer
    assert st.stop_reason == "discrepancy"


def test_updates_keep_boundary_values(space8, blob_meas):
    # zero traces are enforced weakly, so the drift shrinks under refinement
    def drift(space, meas):
        st = gauss_newton(meas, InverseConfig(max_outer=5), space)
        d = st.sigma - project(space, 1.0)
        return np.abs(d.trace().values).max(), np.abs(d.center_values()).max()

    d8, _ = drift(space8, blob_meas)
    space16 = DgSpace(build_mesh(BOX, 16, 16))
    meas16 = generate_data(PHANTOMS["single_blob"], build_mesh(BOX, 32, 32), space16,
                           NoiseModel(0.0, 0))
    d16, peak16 = drift(space16, meas16)
    assert d16 < 0.25 * d8
    assert d16 < 0.1 * peak16


def test_space_mismatch(blob_meas):
    with pytest.raises(InvalidArgumentError):
        gauss_newton(blob_meas, InverseConfig(), DgSpace(build_mesh(BOX, 4, 4)))


def test_history_csv(tmp_path, space8, blob_meas):
    st = gauss_newton(blob_meas, InverseConfig(max_outer=2), space8)
    path = tmp_path / "h.csv"
    write_history_csv(st, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,misfit,inner_iterations,dsigma_h1"
    assert len(lines) == 2 + st.k
