import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from oracles import fd_gradient, jacobi_eigenvalues, jacobi_singular_values
from smoothprox.core import (CurvatureConstants, PenaltyConfig, aug_lagrangian,
                             grad_K, project_box, prox_aug_difference, prox_aug_value,
                             spectral_norm, symmetric_eig_bounds)
from smoothprox.gen import gen_negdef_qp, gen_uniform_qp
from smoothprox.model import BoxSet

vectors = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3).map(np.array)
BOX3 = BoxSet.uniform(3, 0.0, 1.0)


def test_project_box_cases():
    assert_array_equal(project_box([-1.0, 0.5, 7.0], BOX3), [0.0, 0.5, 1.0])
    x = np.array([0.2, 0.3, 0.9])
    assert_array_equal(project_box(x, BOX3), x)
    assert_array_equal(project_box([0.0], BoxSet([0.0], [1.0])), [0.0])
    with pytest.raises(ValueError, match="dimension"):
        project_box([1.0, 2.0], BOX3)


@given(vectors, vectors)
def test_projection_idempotent_and_nonexpansive(x, xp):
    px, pxp = project_box(x, BOX3), project_box(xp, BOX3)
    assert_array_equal(project_box(px, BOX3), px)
    assert BOX3.contains(px)
    assert np.linalg.norm(px - pxp) <= np.linalg.norm(x - xp) + 1e-12


def test_aug_lagrangian_scalar(scalar_problem):
    assert aug_lagrangian([1.0], [2.0], scalar_problem, 4.0) == pytest.approx(2.5)
    assert aug_lagrangian([0.5], [7.0], scalar_problem, 3.0) == pytest.approx(0.25)
    assert aug_lagrangian([1.0], [0.0], scalar_problem, 0.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        aug_lagrangian([1.0], [1.0, 2.0], scalar_problem, 1.0)


def test_prox_aug_value_scalar(scalar_problem):
    cfg = PenaltyConfig(4.0, 2.0)
    assert prox_aug_value([1.0], [0.0], [2.0], scalar_problem, cfg) == pytest.approx(3.5)
    assert prox_aug_value([1.0], [1.0], [2.0], scalar_problem, cfg) == pytest.approx(2.5)
    assert prox_aug_value([1.0], [0.0], [2.0], scalar_problem,
                          PenaltyConfig(4.0, 0.0)) == pytest.approx(2.5)


def test_grad_K_reductions(scalar_problem):
    cfg = PenaltyConfig(3.0, 2.0)
    assert_allclose(grad_K([0.5], [0.5], [0.0], scalar_problem, cfg), [1.0])
    assert_allclose(grad_K([0.8], [0.1], [2.0], scalar_problem, PenaltyConfig(0.0, 0.0)),
                    [1.6 + 2.0])


def test_penalty_rejects_negative_gamma():
    with pytest.raises(ValueError):
        PenaltyConfig(-1.0)


@pytest.mark.parametrize("seed", range(5))
def test_grad_K_finite_differences(seed):
    prob = gen_uniform_qp(8, 3, seed)
    rng = np.random.default_rng(seed)
    cfg = PenaltyConfig(10.0, 3.0)
    for _ in range(20):
        x, z = rng.random(8), rng.random(8)
        y = rng.standard_normal(3)
        g = grad_K(x, z, y, prob, cfg)
        fd = fd_gradient(lambda u: prox_aug_value(u, z, y, prob, cfg), x)
        assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)


def test_prox_aug_difference_matches_direct(rng):
    prob = gen_uniform_qp(6, 2, 3)
    cfg = PenaltyConfig(5.0, 2.0)
    for _ in range(10):
        a = [rng.random(6), rng.random(6), rng.standard_normal(2)]
        b = [rng.random(6), rng.random(6), rng.standard_normal(2)]
        direct = prox_aug_value(*b, prob, cfg) - prox_aug_value(*a, prob, cfg)
        fast = prox_aug_difference(a[0], a[1], a[2], b[0], b[1], b[2], prob, cfg)
        assert fast == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_curvature_audits(rng):
    prob = gen_uniform_qp(8, 3, 1)
    cfg = PenaltyConfig(10.0, 5.0)
    cc = CurvatureConstants.from_problem(prob, cfg)
    assert cc.L_K == pytest.approx(prob.objective.lipschitz_L + 5.0 + 10.0 * prob.sigma**2)
    assert cc.gamma_K == pytest.approx(5.0 + prob.objective.weak_convexity_gamma)
    assert cc.gamma_K > 0
    z, y = rng.random(8), rng.standard_normal(3)
    for _ in range(100):
        x, xp = rng.random(8), rng.random(8)
        dg = grad_K(x, z, y, prob, cfg) - grad_K(xp, z, y, prob, cfg)
        dx = x - xp
        assert np.linalg.norm(dg) <= cc.L_K * np.linalg.norm(dx) * (1 + 1e-10)
        assert dg @ dx >= cc.gamma_K * (dx @ dx) * (1 - 1e-10)


def test_spectral_norm_examples(rng):
    assert spectral_norm(np.eye(2)) == pytest.approx(1.0)
    assert spectral_norm(np.diag([3.0, 4.0])) == pytest.approx(4.0)
    assert spectral_norm(np.zeros((3, 2))) == 0.0
    M = rng.standard_normal((5, 8))
    assert spectral_norm(M) == pytest.approx(jacobi_singular_values(M)[0], rel=1e-6)
    assert spectral_norm(M.T) == pytest.approx(jacobi_singular_values(M)[0], rel=1e-6)


def test_eig_bounds_examples(rng):
    assert_allclose(symmetric_eig_bounds(np.diag([-2.0, 5.0])), (-2.0, 5.0))
    assert_allclose(symmetric_eig_bounds(np.diag([1.0, -1.0])), (-1.0, 1.0))
    assert symmetric_eig_bounds(np.zeros((2, 2))) == (0.0, 0.0)
    V = rng.standard_normal((6, 6))
    S = V + V.T
    ev = jacobi_eigenvalues(S)
    lo, hi = symmetric_eig_bounds(S)
    assert lo == pytest.approx(ev[0], rel=1e-6)
    assert hi == pytest.approx(ev[-1], rel=1e-6)
    with pytest.raises(ValueError):
        symmetric_eig_bounds(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_negdef_upper_eigenvalue():
    Q = gen_negdef_qp(10, 3, 2).objective.Q
    _, hi = symmetric_eig_bounds(Q)
    assert hi <= 1e-10 * np.max(np.abs(Q))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_eig_bounds_property(n, seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, n))
    S = V + V.T
    ev = jacobi_eigenvalues(S)
    lo, hi = symmetric_eig_bounds(S)
    # power iteration stalls only on nearly tied dominant eigenvalues
    scale = np.max(np.abs(ev))
    assert lo == pytest.approx(ev[0], abs=1e-4 * scale)
    assert hi == pytest.approx(ev[-1], abs=1e-4 * scale)
