import numpy as np
import pytest
from scipy.linalg import sqrtm

from conftest import dense_H, reference_pmm
from indo.costs import sp_cost
from indo.inner import FixedCount, Forcing, InnerSolveError
from indo.objectives import centralized_solution, quadratic_solution
from indo.pmm import (ConfigError, DivergenceError, PmmState, SolverConfig, apply_H,
                      compute_g, gamma_upper, practical_gamma, run)


def test_matches_dense_reference_quadratic(small_quadratic):
    prob, net = small_quadratic
    a = e = prob.M
    cfg = SolverConfig(alpha=a, eps=e, inner=Forcing(1e-14))
    xs, qs = reference_pmm(prob, net.W, a, e, 30)
    res = run(cfg, prob, net, 30)
    np.testing.assert_allclose(res.state.x, xs[-1], atol=1e-8)
    np.testing.assert_allclose(res.state.q, qs[-1], atol=1e-8)
    mid = run(cfg, prob, net, 7)
    np.testing.assert_allclose(mid.state.x, xs[6], atol=1e-8)


def test_matches_dense_reference_logistic(small_logistic):
    prob, net = small_logistic
    a = e = prob.M
    xs, qs = reference_pmm(prob, net.W, a, e, 15)
    for variant in ("indo", "esom"):
        res = run(SolverConfig(variant=variant, alpha=a, eps=e, inner=Forcing(1e-14)),
                  prob, net, 15)
        np.testing.assert_allclose(res.state.x, xs[-1], atol=1e-8)
        np.testing.assert_allclose(res.state.q, qs[-1], atol=1e-8)


def test_dual_matches_v_space_recursion(small_quadratic):
    # original form: v+ = v + alpha (I-W)^{1/2} x+, q = (I-W)^{1/2} v
    prob, net = small_quadratic
    a = e = prob.M
    S = np.real(sqrtm(np.eye(prob.N) - net.W))
    cfg = SolverConfig(alpha=a, eps=e, inner=Forcing(1e-14))
    v = np.zeros((prob.N, prob.n))
    xs, _ = reference_pmm(prob, net.W, a, e, 10)
    for x in xs:
        v = v + a * S @ x
    res = run(cfg, prob, net, 10)
    np.testing.assert_allclose(res.state.q, S @ v, atol=1e-8)


def test_compute_g_and_apply_H(small_quadratic):
    prob, net = small_quadratic
    rng = np.random.default_rng(0)
    st = PmmState(0, rng.standard_normal((5, 3)), rng.standard_normal((5, 3)))
    Lap = np.kron(np.eye(5) - net.W, np.eye(3))
    grad = np.concatenate([prob.gradient(i, st.x[i]) for i in range(5)])
    g = compute_g(st, prob, net, 2.0)
    np.testing.assert_allclose(g.ravel(), grad + st.q.ravel() + 2.0 * Lap @ st.x.ravel())
    v = rng.standard_normal((5, 3))
    H = dense_H(prob.hessians(st.x), net.W, 2.0, 0.5)
    np.testing.assert_allclose(apply_H(prob, net, 2.0, 0.5, st.x, v).ravel(), H @ v.ravel(),
                               atol=1e-11)


def test_exact_convergence_small(small_quadratic):
    prob, net = small_quadratic
    res = run(SolverConfig(alpha=prob.M, eps=prob.M), prob, net, 3000)
    assert res.trace[-1].metric < 1e-10
    np.testing.assert_allclose(res.state.x, np.tile(quadratic_solution(prob), (5, 1)),
                               rtol=1e-9)


def test_logistic_cost_reaches_optimum(small_logistic):
    prob, net = small_logistic
    res = run(SolverConfig(alpha=prob.M, eps=prob.M), prob, net, 400)
    y = centralized_solution(prob)
    V = res.column("metric")
    assert V[-1] == pytest.approx(prob.aggregate_value(y), rel=1e-8)
    assert V[-1] <= V[0]


@pytest.mark.parametrize("variant,ell", [("indo", 1), ("indo", 3), ("esom", 2)])
def test_counters(small_logistic, variant, ell):
    prob, net = small_logistic
    K = 12
    res = run(SolverConfig(variant=variant, alpha=prob.M, eps=prob.M, inner=FixedCount(ell)),
              prob, net, K)
    comm = res.column("comm_rounds_cum")
    np.testing.assert_array_equal(comm, 1 + (ell + 1) * np.arange(1, K + 1))
    per = sp_cost(variant, "logistic", float(np.mean(prob.sizes)), prob.n, prob.N, ell)
    np.testing.assert_allclose(res.column("sp_cost_cum"), per * np.arange(1, K + 1), rtol=1e-14)
    assert np.all(np.diff(res.column("sp_cost_cum")) > 0)
    assert res.column("ell_used").tolist() == [ell] * K


def test_quadratic_esom_pays_inversion_once(small_quadratic):
    prob, net = small_quadratic
    res = run(SolverConfig(variant="esom", alpha=prob.M, eps=prob.M), prob, net, 3)
    sp = res.column("sp_cost_cum")
    steady = sp_cost("esom", "quadratic", 0, 3, 5, 1)
    assert sp[0] == pytest.approx(steady + 9 / 6)
    assert np.diff(sp) == pytest.approx([steady, steady])


def test_dual_sum_stays_zero(small_logistic):
    prob, net = small_logistic
    res = run(SolverConfig(alpha=prob.M, eps=prob.M, inner=FixedCount(2)), prob, net, 100)
    assert res.max_dual_drift < 1e-9
    assert np.abs(res.state.dual_sum()).max() < 1e-9 * (1 + np.abs(res.state.q).max())


def test_gamma_resolution_and_validation(small_quadratic):
    prob, net = small_quadratic
    a = e = prob.M
    cfg = SolverConfig(alpha=a, eps=e).resolve(prob.m, prob.M, net.w_d, net.w_m)
    assert cfg.gamma == practical_gamma(prob.m, prob.M, a, e, net.w_d)
    assert cfg.gamma < gamma_upper(prob.m, prob.M, a, e, net.w_d, net.w_m)
    gmax = gamma_upper(prob.m, prob.M, a, e, net.w_d, net.w_m)
    with pytest.raises(ConfigError, match="interval"):
        SolverConfig(alpha=a, eps=e, gamma=gmax).resolve(prob.m, prob.M, net.w_d, net.w_m)
    SolverConfig(alpha=a, eps=e, gamma=gmax, checked=False).resolve(
        prob.m, prob.M, net.w_d, net.w_m)


@pytest.mark.parametrize("kwargs", [
    {"alpha": 0.0}, {"eps": -1.0}, {"variant": "admm"}, {"gamma": -0.1},
    {"residual_norm": "1"}, {"inner": 3},
])
def test_config_errors(kwargs):
    with pytest.raises(ConfigError):
        SolverConfig(**kwargs)


def test_labels():
    assert SolverConfig(inner=FixedCount(2)).label == "INDO-2"
    assert SolverConfig(variant="esom", alpha=0.5, eps=2.0).label == "ESOM-1-0.5-2"
    assert SolverConfig(inner=Forcing(0.1)).label == "INDO-eta0.1"


def test_divergence_keeps_partial_trace(small_quadratic):
    prob, net = small_quadratic
    a = e = prob.M
    gmax = gamma_upper(prob.m, prob.M, a, e, net.w_d, net.w_m)
    cfg = SolverConfig(alpha=a, eps=e, gamma=3.0 * gmax, checked=False, inner=FixedCount(5))
    with pytest.raises(DivergenceError) as info:
        run(cfg, prob, net, 2000)
    assert 0 < len(info.value.result.trace) < 2000


def test_forcing_cap_keeps_partial_trace(small_quadratic):
    prob, net = small_quadratic
    a = e = prob.M
    gmax = gamma_upper(prob.m, prob.M, a, e, net.w_d, net.w_m)
    cfg = SolverConfig(alpha=a, eps=e, gamma=3.0 * gmax, checked=False,
                       inner=Forcing(0.1, max_iter=200))
    with pytest.raises(InnerSolveError) as info:
        run(cfg, prob, net, 10)
    assert info.value.result.trace == []


def test_warm_start_and_initial_solve(small_quadratic):
    prob, net = small_quadratic
    base = dict(alpha=prob.M, eps=prob.M)
    warm = run(SolverConfig(**base), prob, net, 5)
    cold = run(SolverConfig(warm_start=False, **base), prob, net, 5)
    assert warm.trace[0].metric == cold.trace[0].metric
    assert warm.trace[1].metric != cold.trace[1].metric
    init = run(SolverConfig(initial_solve=True, **base), prob, net, 5)
    assert init.trace[0].ell_used > 1
    assert init.trace[0].comm_rounds_cum == 1 + init.trace[0].ell_used + 1


def test_nonzero_start_and_determinism(small_quadratic):
    prob, net = small_quadratic
    cfg = SolverConfig(alpha=prob.M, eps=prob.M)
    x0 = np.full((5, 3), 2.0)
    a = run(cfg, prob, net, 20, x0=x0)
    b = run(cfg, prob, net, 20, x0=x0)
    np.testing.assert_array_equal(a.state.x, b.state.x)
    xs, _ = reference_pmm(prob, net.W, prob.M, prob.M, 1, x0=x0)
    exact = run(SolverConfig(alpha=prob.M, eps=prob.M, inner=Forcing(1e-14)), prob, net, 1, x0=x0)
    np.testing.assert_allclose(exact.state.x, xs[0], atol=1e-9)


def test_mismatched_sizes(small_quadratic):
    prob, net = small_quadratic
    from indo.network import generate_rgg

    with pytest.raises(ValueError):
        run(SolverConfig(), prob, generate_rgg(6, 0), 1)
    with pytest.raises(ValueError):
        run(SolverConfig(), prob, net, 0)
