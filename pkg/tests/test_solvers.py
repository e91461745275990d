import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from oracles import prox_alm_reference
from smoothprox.diagnostics import stationarity_residual
from smoothprox.gen import gen_negdef_qp, gen_two_block_qp, gen_uniform_qp
from smoothprox.model import (BlockPartition, BoxSet, LinearConstraints, ObjectiveOracle,
                              Problem, make_quadratic_problem)
from smoothprox.solvers import (TRACE_COLUMNS, FeasibilityStop, IterState, SolverParams,
                                StationarityStop, alm_iterate, classic_admm_iterate,
                                initial_state, make_stop, multiblock_iterate,
                                proximal_alm_iterate, read_trace_csv, run,
                                write_trace_csv)


def _params(**kw):
    base = dict(Gamma=1.0, alpha=0.5, beta=0.5, c=0.1, p=1.0)
    base.update(kw)
    return SolverParams(**base)


def _state(x, y, z, t=0):
    return IterState(np.array(x, float), np.array(y, float), np.array(z, float), t)


def test_params_validation():
    for bad in (dict(beta=0.0), dict(beta=1.5), dict(c=0.0), dict(alpha=-1.0),
                dict(Gamma=-1.0), dict(max_iter=-1), dict(record_every=0)):
        with pytest.raises(ValueError):
            _params(**bad)


def test_default_recipe_and_validity():
    prob = gen_uniform_qp(10, 3, 0)
    prm = SolverParams.default_for(prob)
    L, s2 = prob.objective.lipschitz_L, prob.sigma**2
    assert prm.Gamma == 10.0 and prm.alpha == 2.5 and prm.beta == 0.5
    assert prm.p == pytest.approx(2 * L + 20 * s2)
    assert prm.c == pytest.approx(1 / (2 * (L + 10 * s2)))
    v = prm.validity(prob)
    # the recipe's c is 1.5 / L_K, outside c < 1 / L_K
    assert v["c_times_L_K"] == pytest.approx(1.5)
    assert not v["prox_alm"]
    assert prm.replace(c=0.9 / v["L_K"]).validity(prob)["prox_alm"]
    assert not prm.replace(p=-prob.objective.weak_convexity_gamma - 1).validity(prob)[
        "p_gt_minus_gamma"]


def test_alm_fixed_point(scalar_problem):
    s = _state([0.5], [-1.0], [0.2], 3)
    nxt = alm_iterate(s, scalar_problem, _params(Gamma=7.0))
    assert_array_equal(nxt.x, s.x)
    assert_array_equal(nxt.y, s.y)
    assert_array_equal(nxt.z, s.z)
    assert nxt.t == 4


def test_alm_frozen_dual(scalar_problem):
    s = _state([0.9], [0.3], [0.9])
    nxt = alm_iterate(s, scalar_problem, _params(alpha=0.0, Gamma=2.0, c=0.1))
    assert_array_equal(nxt.y, s.y)
    g = 2 * 0.9 + 0.3 + 2.0 * (0.9 - 0.5)
    assert_allclose(nxt.x, [0.9 - 0.1 * g])


def test_prox_alm_update_order(scalar_problem):
    # the dual step uses the old x; the z step uses the new x
    s = _state([0.9], [0.0], [0.1])
    prm = _params(alpha=1.0, Gamma=0.0, c=0.1, p=2.0, beta=0.25)
    nxt = proximal_alm_iterate(s, scalar_problem, prm)
    y_new = 0.0 + 1.0 * (0.9 - 0.5)
    x_new = 0.9 - 0.1 * (2 * 0.9 + y_new + 2.0 * (0.9 - 0.1))
    assert_allclose(nxt.y, [y_new])
    assert_allclose(nxt.x, [x_new])
    assert_allclose(nxt.z, [0.1 + 0.25 * (x_new - 0.1)])


def test_prox_alm_beta_one_sets_z_to_x():
    prob = gen_uniform_qp(6, 2, 1)
    s = initial_state(prob, x0=np.full(6, 0.5), z0=np.full(6, 0.2))
    nxt = proximal_alm_iterate(s, prob, _params(beta=1.0))
    assert_array_equal(nxt.z, nxt.x)


def test_prox_alm_kkt_fixed_point(scalar_problem):
    s = _state([0.5], [-1.0], [0.5])
    nxt = proximal_alm_iterate(s, scalar_problem, _params())
    assert_array_equal(nxt.x, s.x)
    assert_array_equal(nxt.z, s.z)


def test_prox_alm_matches_reference():
    prob = gen_uniform_qp(7, 3, 2)
    prm = _params(Gamma=2.0, alpha=0.3, beta=0.4, c=0.02, p=3.0)
    s = initial_state(prob, x0=np.full(7, 0.3), y0=np.ones(3), z0=np.full(7, 0.6))
    for _ in range(50):
        s = proximal_alm_iterate(s, prob, prm)
    ox, oy, oz = prox_alm_reference(
        prob.objective.Q, prob.objective.r, prob.A, prob.b, prob.box.lower,
        prob.box.upper, 2.0, 0.3, 0.4, 0.02, 3.0, np.full(7, 0.3), np.ones(3),
        np.full(7, 0.6), 50)
    assert_allclose(s.x, ox, rtol=1e-12, atol=1e-14)
    assert_allclose(s.y, oy, rtol=1e-12, atol=1e-14)
    assert_allclose(s.z, oz, rtol=1e-12, atol=1e-14)


def test_reductions_single_step():
    prob = gen_uniform_qp(6, 2, 5)
    s = initial_state(prob, x0=np.full(6, 0.7), y0=np.array([0.2, -0.1]))
    prm = _params(p=0.0, beta=1.0)
    a, b = alm_iterate(s, prob, prm), proximal_alm_iterate(s, prob, prm)
    assert_array_equal(a.x, b.x)
    assert_array_equal(a.y, b.y)
    single = prob.with_blocks(BlockPartition.single(6))
    prm = _params()
    a, b = multiblock_iterate(s, single, prm), proximal_alm_iterate(s, prob, prm)
    assert_array_equal(a.x, b.x)
    assert_array_equal(a.z, b.z)


def test_multiblock_gauss_seidel_order():
    prob = gen_two_block_qp(6, 2, 0)
    prm = _params(Gamma=1.0, c=0.01)
    s = initial_state(prob, x0=np.full(6, 1.0), y0=np.array([0.5, 0.5]))
    nxt = multiblock_iterate(s, prob, prm)
    y = s.y + prm.alpha * (prob.A @ s.x - prob.b)
    cfg_grad = lambda x: (prob.objective.grad(x) + prob.A.T @ (y + prm.Gamma * (  # noqa: E731
        prob.A @ x - prob.b)) + prm.p * (x - s.z))
    x = s.x.copy()
    for idx in prob.blocks.blocks:
        x[idx] = np.clip(s.x[idx] - prm.c * cfg_grad(x)[idx], 0, 10)
    assert_allclose(nxt.x, x, rtol=1e-14)


def test_multiblock_order_irrelevant_when_separable():
    Q = 2.0 * np.eye(4)
    A = np.array([[1.0, 1.0, 0, 0], [0, 0, 1.0, 1.0]])
    box = BoxSet.uniform(4, 0.0, 1.0)
    fwd = make_quadratic_problem(Q, np.zeros(4), A, [0.5, 0.5], box,
                                 blocks=BlockPartition(([0, 1], [2, 3])))
    rev = fwd.with_blocks(BlockPartition(([2, 3], [0, 1])))
    prm = _params(Gamma=0.0, c=0.1)
    s = initial_state(fwd, x0=[0.9, 0.1, 0.4, 0.8], y0=[0.3, -0.2])
    assert_allclose(multiblock_iterate(s, fwd, prm).x, multiblock_iterate(s, rev, prm).x,
                    rtol=0, atol=1e-15)


def test_multiblock_needs_blocks():
    prob = gen_uniform_qp(4, 2, 0)
    with pytest.raises(ValueError, match="block partition"):
        multiblock_iterate(initial_state(prob), prob, _params())


def test_classic_admm_separable():
    Q = np.diag([2.0, 2.0, 4.0, 4.0])
    A = np.array([[1.0, 0.0, 1.0, 0.0]])
    prob = make_quadratic_problem(Q, np.zeros(4), A, [1.0], BoxSet.uniform(4, -5, 5),
                                  blocks=BlockPartition.halves(4))
    prm = _params(Gamma=1.0, alpha=1.0)
    s = initial_state(prob, x0=np.ones(4), y0=[0.5])
    nxt, evals = classic_admm_iterate(s, prob, prm, inner_tol=1e-12)
    # block 1: minimize x1^2 + x2^2 + 0.5 (x1 + x3 - 1) + 0.5 (x1 + x3 - 1)^2 with x3 = 1
    x1 = -0.5 / 3.0
    # block 2 at the new x1: 2 x3^2 + 0.5 x3 + 0.5 (x1 + x3 - 1)^2
    x3 = (1 - x1 - 0.5) / 5.0
    assert_allclose(nxt.x, [x1, 0.0, x3, 0.0], atol=1e-10)
    assert_allclose(nxt.y, [0.5 + (x1 + x3 - 1.0)], atol=1e-10)
    assert evals > 2


def test_classic_admm_loose_tolerance_takes_one_step_per_block():
    prob = gen_two_block_qp(6, 2, 1)
    prm = _params(Gamma=1.0)
    _, evals = classic_admm_iterate(initial_state(prob), prob, prm, inner_tol=1e9)
    assert evals == 4  # one step plus one certifying evaluation per block


def test_classic_admm_needs_two_blocks():
    prob = gen_uniform_qp(6, 2, 0).with_blocks(BlockPartition(([0, 1], [2, 3], [4, 5])))
    with pytest.raises(ValueError, match="exactly 2 blocks"):
        classic_admm_iterate(initial_state(prob), prob, _params(), 1e-6)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["ALM", "ProxALM", "MultiBlock"]), st.integers(0, 1000),
       st.floats(0.05, 1.0), st.floats(0.1, 5.0))
def test_box_and_dual_range_invariance(algo, seed, beta, alpha):
    prob = gen_two_block_qp(6, 2, seed)
    prm = _params(Gamma=1.0, alpha=alpha, beta=beta, c=0.01, p=1.0, max_iter=30)
    y0 = np.array([0.3, -0.7])
    res = run(prob, prm, algo, init=initial_state(prob, y0=y0),
              stop=lambda *a: False, keep_history=True)
    U, sv, _ = np.linalg.svd(prob.A)
    rank = int(np.sum(sv > 1e-12 * sv[0]))
    for s in res.history:
        assert prob.box.contains(s.x) and prob.box.contains(s.z)
        d = s.y - y0
        resid = d - U[:, :rank] @ (U[:, :rank].T @ d)
        assert np.linalg.norm(resid) <= 1e-10 * (1 + np.linalg.norm(d))


def test_run_zero_budget(scalar_problem):
    init = initial_state(scalar_problem, x0=[0.2])
    res = run(scalar_problem, _params(max_iter=0), init=init)
    assert res.final is init
    assert res.trace == []
    assert res.status == "max_iter"


def test_run_scalar_converges(scalar_problem):
    prm = _params(Gamma=1.0, alpha=0.5, beta=0.5, c=0.2, p=1.0, max_iter=5000,
                  stop_tol=1e-7, record_every=10)
    res = run(scalar_problem, prm)
    assert res.converged
    assert_allclose(res.final.x, [0.5], atol=1e-6)
    assert_allclose(res.final.y, [-1.0], atol=1e-5)
    assert res.best_certificate.epsilon <= 1e-6
    assert res.trace[-1].t == res.final.t
    assert res.trace[-1].feas == pytest.approx(
        stationarity_residual(res.final.x, res.final.y, scalar_problem)[1], abs=1e-15)
    assert [r.t for r in res.trace[:3]] == [0, 10, 20]


def test_trace_columns_describe_forward_step():
    prob = gen_uniform_qp(6, 2, 0)
    prm = _params(max_iter=5, stop_tol=0.0)
    res = run(prob, prm, keep_history=True)
    H = res.history
    for rec in res.trace[:-1]:
        a, b = H[rec.t], H[rec.t + 1]
        assert rec.feas == pytest.approx(np.linalg.norm(prob.A @ a.x - prob.b))
        assert rec.f_val == pytest.approx(prob.objective.value(a.x))
        assert rec.step_x == pytest.approx(np.linalg.norm(a.x - b.x))
        assert rec.step_z == pytest.approx(np.linalg.norm(a.z - b.z))
        assert rec.prox_gap == pytest.approx(np.linalg.norm(b.x - a.z))
        assert rec.grad_evals == rec.t + 1
    evals = [r.grad_evals for r in res.trace]
    assert evals == sorted(evals)
    assert res.grad_evals == prm.max_iter + 1


def test_stop_rules():
    assert StationarityStop(1e-3)(1e-4, 1e-4, 1e-4)
    assert not StationarityStop(1e-3)(1e-4, 1e-4, 1e-2)
    assert make_stop("measure", 1e-3)(1e-4, 1e-4, 1e-2)
    assert FeasibilityStop(1e-3)(10.0, 1e-4, None)
    with pytest.raises(ValueError):
        make_stop("nope", 1.0)


def test_nonfinite_divergence_reported():
    calls = {"n": 0}

    def grad(x):
        calls["n"] += 1
        return np.full_like(x, np.nan) if calls["n"] > 3 else 2 * x

    obj = ObjectiveOracle(lambda x: float(x @ x), grad, 2.0, 2.0)
    prob = Problem(obj, LinearConstraints([[1.0, 1.0]], [1.0]), BoxSet.uniform(2, -1, 1))
    res = run(prob, _params(max_iter=50), algo="ALM")
    assert res.diverged
    assert "non-finite" in res.message and "iteration 4" in res.message


def test_dual_blowup_reported():
    prob = gen_negdef_qp(6, 2, 0)
    res = run(prob, _params(Gamma=0.0, alpha=1e12, c=1e-9, p=0.0, max_iter=100),
              algo="ALM", stop=lambda *a: False)
    assert res.diverged and "dual iterate norm" in res.message


def test_csv_roundtrip(tmp_path):
    prob = gen_uniform_qp(5, 2, 0)
    res = run(prob, _params(max_iter=20, record_every=3))
    path = tmp_path / "trace.csv"
    write_trace_csv(res.trace, path)
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header[:len(TRACE_COLUMNS)]) == TRACE_COLUMNS
    back = read_trace_csv(path)
    assert [r.t for r in back] == [r.t for r in res.trace]
    assert back[4].feas == res.trace[4].feas
    assert back[0].potential is None


def test_csv_missing_column():
    buf = io.StringIO("t,f,feas,step_x,step_z,prox_gap,potential,inner_feas\n")
    with pytest.raises(ValueError, match="grad_evals"):
        read_trace_csv(buf)


def test_fixed_point_implies_stationarity():
    # iterate until one step leaves the state bitwise unchanged
    prob = make_quadratic_problem(np.diag([2.0, 2.0]), [0.0, -1.0], [[1.0, 1.0]], [1.0],
                                  BoxSet.uniform(2, 0, 1))
    prm = _params(Gamma=1.0, alpha=0.5, beta=0.5, c=0.1, p=1.0)
    s = initial_state(prob)
    for _ in range(5000):
        nxt = proximal_alm_iterate(s, prob, prm)
        if all(np.array_equal(getattr(nxt, k), getattr(s, k)) for k in "xyz"):
            break
        s = nxt
    else:
        pytest.fail("no exact fixed point reached")
    opt, feas = stationarity_residual(s.x, s.y, prob)
    assert opt <= 1e-9 and feas <= 1e-9
    assert_allclose(s.x, [0.25, 0.75])
