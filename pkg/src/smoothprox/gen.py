"""Seeded random QP instances for the three experiment families.

Instances are drawn from a small, fully specified generator so that any
implementation can reproduce them bit for bit:

* seeding: four successive outputs of SplitMix64 started at ``seed`` form the
  xoshiro256** state;
* uniforms: ``(next() >> 11) * 2**-53`` in ``[0, 1)``;
* normals: Box-Muller on pairs ``(u1, u2)`` with ``u1`` replaced by
  ``1 - u1``; each pair yields ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``, and
  an odd request discards the final sine. Every array draw starts fresh pairs.

Matrices are filled in row-major order.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .core import project_box
from .model import BlockPartition, BoxSet, make_quadratic_problem

__all__ = [
    "Xoshiro256",
    "GenSpec",
    "gen_negdef_qp",
    "gen_uniform_qp",
    "gen_two_block_qp",
    "generate",
    "FAMILIES",
    "feasibility_residual",
]

_MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & _MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** seeded through SplitMix64."""

    def __init__(self, seed):
        sm = SplitMix64(seed)
        self.s = [sm.next() for _ in range(4)]

    def next(self):
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self, size=None):
        if size is None:
            return (self.next() >> 11) * 2.0**-53
        count = int(np.prod(size))
        out = np.fromiter(((self.next() >> 11) * 2.0**-53 for _ in range(count)),
                          dtype=float, count=count)
        return out.reshape(size)

    def uniform(self, low, high, size):
        return low + (high - low) * self.random(size)

    def standard_normal(self, size):
        count = int(np.prod(size))
        out = np.empty(2 * ((count + 1) // 2))
        for i in range(0, out.size, 2):
            u1 = 1.0 - (self.next() >> 11) * 2.0**-53
            u2 = (self.next() >> 11) * 2.0**-53
            rad = math.sqrt(-2.0 * math.log(u1))
            out[i] = rad * math.cos(2.0 * math.pi * u2)
            out[i + 1] = rad * math.sin(2.0 * math.pi * u2)
        return out[:count].reshape(size)


FAMILIES = ("NegDefQP", "UniformQP", "TwoBlockQP")


@dataclass(frozen=True)
class GenSpec:
    family: str
    n: int
    m: int
    seed: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 1 <= self.m < self.n:
            raise ValueError("m must satisfy 1 <= m < n")
        if self.family == "TwoBlockQP" and self.n % 2:
            raise ValueError("TwoBlockQP requires even n")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        return {"family": self.family, "n": self.n, "m": self.m, "seed": self.seed}


def feasibility_residual(A, b, box):
    """Minimum of ``||Ax - b||`` over the box, and a minimizer."""
    sol = lsq_linear(A, b, bounds=(box.lower, box.upper), method="bvls",
                     tol=1e-14)
    x = project_box(sol.x, box)
    return float(np.linalg.norm(A @ x - b)), x


def _symmetrize(V):
    return 0.5 * (V + V.T)


def gen_negdef_qp(n, m, seed):
    """Negative semidefinite QP: ``Q = -U^T U`` with standard normal ``U``.

    ``A`` and ``r`` are standard normal, ``b = A x0`` for ``x0`` uniform on
    ``[0, 5]^n``, and the box is ``[0, 1000]^n``. Draw order: U, A, r, x0.
    """
    GenSpec("NegDefQP", n, m, seed)
    rng = Xoshiro256(seed)
    U = rng.standard_normal((n, n))
    A = rng.standard_normal((m, n))
    r = rng.standard_normal(n)
    x0 = rng.uniform(0.0, 5.0, n)
    Q = -(U.T @ U)
    Q = _symmetrize(Q)
    return make_quadratic_problem(Q, r, A, A @ x0, BoxSet.uniform(n, 0.0, 1000.0))


def _resample_until_feasible(draw, seed, box, tol=1e-8, max_tries=2000):
    for k in range(max_tries):
        parts = draw(Xoshiro256((seed + k) & _MASK))
        A, b = parts[-2], parts[-1]
        res, _ = feasibility_residual(A, b, box)
        if res <= tol:
            return parts
    raise RuntimeError(f"no feasible instance within {max_tries} reseeds of {seed}")


def gen_uniform_qp(n, m, seed):
    """Indefinite QP with every entry of ``V, r, A, b`` uniform on ``[0, 1]``.

    ``Q = (V + V^T) / 2`` and the box is ``[0, 1]^n``. Draw order: V, r, A, b.
    An instance whose constraints are infeasible over the box is redrawn with
    ``seed + 1``, ``seed + 2``, ...
    """
    GenSpec("UniformQP", n, m, seed)
    box = BoxSet.uniform(n, 0.0, 1.0)

    def draw(rng):
        V = rng.random((n, n))
        r = rng.random(n)
        A = rng.random((m, n))
        b = rng.random(m)
        return V, r, A, b

    V, r, A, b = _resample_until_feasible(draw, seed, box)
    return make_quadratic_problem(_symmetrize(V), r, A, b, box)


def gen_two_block_qp(n, m, seed):
    """Two-block QP ``x1^T Q1 x1 + x2^T Q2 x2`` subject to ``A1 x1 + A2 x2 = b``.

    ``Q1, Q2`` are symmetrized uniform matrices; ``A1, A2, b`` are uniform on
    ``[0, 1]``; both blocks live in ``[0, 10]^(n/2)``. The objective carries no
    factor 1/2, so the stored Hessian is ``2 blockdiag(Q1, Q2)``.
    Draw order: V1, V2, A1, A2, b.
    """
    GenSpec("TwoBlockQP", n, m, seed)
    h = n // 2
    box = BoxSet.uniform(n, 0.0, 10.0)

    def draw(rng):
        V1 = rng.random((h, h))
        V2 = rng.random((h, h))
        A1 = rng.random((m, h))
        A2 = rng.random((m, h))
        b = rng.random(m)
        return V1, V2, np.hstack([A1, A2]), b

    V1, V2, A, b = _resample_until_feasible(draw, seed, box)
    Q = np.zeros((n, n))
    Q[:h, :h] = 2.0 * _symmetrize(V1)
    Q[h:, h:] = 2.0 * _symmetrize(V2)
    return make_quadratic_problem(Q, np.zeros(n), A, b, box,
                                  blocks=BlockPartition.halves(n))


_GENERATORS = {
    "NegDefQP": gen_negdef_qp,
    "UniformQP": gen_uniform_qp,
    "TwoBlockQP": gen_two_block_qp,
}


def generate(spec):
    """Build the instance described by a :class:`GenSpec`."""
    return _GENERATORS[spec.family](spec.n, spec.m, spec.seed)
