import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from smoothprox.core import symmetric_eig_bounds
from smoothprox.gen import (GenSpec, SplitMix64, Xoshiro256, feasibility_residual,
                            gen_negdef_qp, gen_two_block_qp, gen_uniform_qp, generate)


def test_splitmix_reference_values():
    # published test vector for seed 1234567
    sm = SplitMix64(1234567)
    assert [sm.next() for _ in range(5)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
        4593380528125082431, 16408922859458223821]


def _xoshiro_uint64(seed, count):
    # second implementation on numpy uint64 with wraparound arithmetic
    def rotl(x, k):
        return (x << np.uint64(k)) | (x >> np.uint64(64 - k))

    with np.errstate(over="ignore"):
        sm = np.uint64(seed)
        s = []
        for _ in range(4):
            sm = sm + np.uint64(0x9E3779B97F4A7C15)
            z = sm
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            s.append(z ^ (z >> np.uint64(31)))
        out = []
        for _ in range(count):
            out.append(int(rotl(s[1] * np.uint64(5), 7) * np.uint64(9)))
            t = s[1] << np.uint64(17)
            s[2] ^= s[0]
            s[3] ^= s[1]
            s[1] ^= s[2]
            s[0] ^= s[3]
            s[2] ^= t
            s[3] = rotl(s[3], 45)
    return out


@pytest.mark.parametrize("seed", [0, 1, 2**63 + 5])
def test_xoshiro_matches_second_implementation(seed):
    rng = Xoshiro256(seed)
    assert [rng.next() for _ in range(50)] == _xoshiro_uint64(seed, 50)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**64 - 1))
def test_uniforms_in_unit_interval(seed):
    u = Xoshiro256(seed).random(200)
    assert np.all(u >= 0.0) and np.all(u < 1.0)


def test_normals_moments():
    z = Xoshiro256(7).standard_normal(20_001)
    assert z.shape == (20_001,)
    assert abs(z.mean()) < 0.03
    assert abs(z.std() - 1.0) < 0.03


@pytest.mark.parametrize("family, n, m", [("NegDefQP", 1, 1), ("UniformQP", 4, 4),
                                          ("UniformQP", 4, 0), ("TwoBlockQP", 5, 2),
                                          ("Other", 4, 2)])
def test_genspec_rejects(family, n, m):
    with pytest.raises(ValueError):
        GenSpec(family, n, m, 0)
    with pytest.raises(ValueError):
        GenSpec("UniformQP", 4, 2, -1)


@pytest.mark.parametrize("family", ["NegDefQP", "UniformQP", "TwoBlockQP"])
def test_determinism(family):
    spec = GenSpec(family, 8, 3, 11)
    assert generate(spec).to_json() == generate(spec).to_json()
    assert generate(spec).to_json() != generate(GenSpec(family, 8, 3, 12345)).to_json()


@pytest.mark.parametrize("seed", [0, 1, 9])
def test_negdef_structure(seed):
    p = gen_negdef_qp(12, 4, seed)
    lo, hi = symmetric_eig_bounds(p.objective.Q)
    assert hi <= 1e-10 * abs(lo)
    assert p.objective.weak_convexity_gamma < -1e-8
    assert_array_equal(p.box.lower, 0.0)
    assert_array_equal(p.box.upper, 1000.0)
    # redraw x0 in the documented order: U, A, r, x0
    rng = Xoshiro256(seed)
    rng.standard_normal((12, 12))
    A = rng.standard_normal((4, 12))
    rng.standard_normal(12)
    x0 = rng.uniform(0.0, 5.0, 12)
    assert_array_equal(A, p.A)
    assert np.all((x0 >= 0) & (x0 <= 5))
    assert_allclose(p.A @ x0, p.b, atol=1e-10)


def test_uniform_structure():
    p = gen_uniform_qp(10, 3, 4)
    Q = p.objective.Q
    assert_array_equal(Q, Q.T)
    for a in (Q, p.objective.r, p.A, p.b):
        assert np.all((a >= 0) & (a <= 1))
    assert_array_equal(p.box.lower, 0.0)
    assert_array_equal(p.box.upper, 1.0)
    assert feasibility_residual(p.A, p.b, p.box)[0] <= 1e-8


def test_two_block_structure(rng):
    p = gen_two_block_qp(10, 2, 3)
    assert p.blocks.to_list() == [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]]
    assert_array_equal(p.box.upper, 10.0)
    assert feasibility_residual(p.A, p.b, p.box)[0] <= 1e-8
    Q = p.objective.Q
    assert np.all(Q[:5, 5:] == 0) and np.all(Q[5:, :5] == 0)
    for _ in range(5):
        x = rng.random(10) * 10
        f1 = x[:5] @ (0.5 * Q[:5, :5]) @ x[:5]
        f2 = x[5:] @ (0.5 * Q[5:, 5:]) @ x[5:]
        assert p.objective.value(x) == pytest.approx(f1 + f2, rel=1e-12)
    with pytest.raises(ValueError):
        gen_two_block_qp(9, 2, 0)


def test_infeasible_draws_are_redrawn():
    # m close to n makes infeasible draws common; the result must still be feasible
    p = gen_uniform_qp(6, 5, 0)
    assert feasibility_residual(p.A, p.b, p.box)[0] <= 1e-8
