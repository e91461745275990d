"""Problem instances: objective oracles, linear equality constraints, box
bounds, and block partitions.

All types are immutable after construction: arrays are copied and marked
read-only, so a :class:`Problem` can be shared across concurrent solver runs.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import is_symmetric, spectral_norm, symmetric_eig_bounds

__all__ = [
    "BoxSet",
    "LinearConstraints",
    "ObjectiveOracle",
    "QuadraticObjective",
    "BlockPartition",
    "Problem",
    "validate_problem",
    "make_quadratic_problem",
    "check_vector",
]


def _frozen(a, ndim):
    a = np.array(a, dtype=float, ndmin=ndim)
    a.setflags(write=False)
    return a


def check_vector(v, n, name="x"):
    """Return ``v`` as a float vector of length ``n`` or raise ValueError."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 and n == 1:
        v = v.reshape(1)
    if v.shape != (n,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({n},)")
    return v


@dataclass(frozen=True)
class BoxSet:
    """The box ``{x : lower <= x <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen(self.lower, 1))
        object.__setattr__(self, "upper", _frozen(self.upper, 1))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")

    @classmethod
    def uniform(cls, n, lower, upper):
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    @property
    def n(self):
        return self.lower.shape[0]

    def contains(self, x, atol=0.0):
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def sub(self, idx):
        return BoxSet(self.lower[idx], self.upper[idx])


@dataclass(frozen=True)
class LinearConstraints:
    """Equality constraints ``A x = b`` with dense ``A`` of shape (m, n)."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, 2))
        object.__setattr__(self, "b", _frozen(self.b, 1))

    @property
    def m(self):
        return self.A.shape[0]


class ObjectiveOracle:
    """Differentiable objective with known curvature bounds.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> float``.
    grad : callable
        ``grad(x) -> ndarray``, the gradient of ``fun``.
    lipschitz_L : float
        Lipschitz constant of ``grad`` over the box.
    weak_convexity_gamma : float
        Lower curvature bound, possibly negative:
        ``<grad(x) - grad(x'), x - x'> >= gamma ||x - x'||^2``.
    """

    def __init__(self, fun, grad, lipschitz_L, weak_convexity_gamma):
        self._fun = fun
        self._grad = grad
        self.lipschitz_L = float(lipschitz_L)
        self.weak_convexity_gamma = float(weak_convexity_gamma)
        # gradient evaluations, counted per oracle; solvers keep their own
        self.n_grad_evals = 0

    def value(self, x):
        return float(self._fun(x))

    def grad(self, x):
        return np.asarray(self._grad(x), dtype=float)

    def difference(self, x1, x2):
        """``f(x2) - f(x1)``; subclasses may avoid the cancellation."""
        return self.value(x2) - self.value(x1)

    __call__ = value


class QuadraticObjective(ObjectiveOracle):
    """``f(x) = 1/2 x^T Q x + r^T x``.

    ``L`` and ``gamma`` are estimated from the extreme eigenvalues of ``Q``
    unless given explicitly. The estimate uses the symmetric part of ``Q`` so
    that an asymmetric matrix can still be constructed and reported by
    :func:`validate_problem`.
    """

    def __init__(self, Q, r, lipschitz_L=None, weak_convexity_gamma=None):
        self.Q = _frozen(Q, 2)
        self.r = _frozen(r, 1)
        if lipschitz_L is None or weak_convexity_gamma is None:
            lo, hi = symmetric_eig_bounds(0.5 * (self.Q + self.Q.T))
            if lipschitz_L is None:
                lipschitz_L = max(abs(lo), abs(hi))
            if weak_convexity_gamma is None:
                weak_convexity_gamma = lo
        super().__init__(self._value, self._gradient, lipschitz_L, weak_convexity_gamma)

    def _value(self, x):
        return 0.5 * x @ (self.Q @ x) + self.r @ x

    def _gradient(self, x):
        return self.Q @ x + self.r

    def difference(self, x1, x2):
        d = x2 - x1
        return float(d @ (self.Q @ x1 + self.r) + 0.5 * d @ (self.Q @ d))

    def hessian(self, x=None):
        return np.asarray(self.Q)


@dataclass(frozen=True)
class BlockPartition:
    """Ordered, disjoint, covering index blocks (0-based)."""

    blocks: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "blocks",
            tuple(np.array(b, dtype=np.intp, ndmin=1) for b in self.blocks))
        for b in self.blocks:
            b.setflags(write=False)

    @classmethod
    def halves(cls, n):
        h = n // 2
        return cls((np.arange(h), np.arange(h, n)))

    @classmethod
    def single(cls, n):
        return cls((np.arange(n),))

    @property
    def k(self):
        return len(self.blocks)

    def violations(self, n):
        out = []
        if any(b.size == 0 for b in self.blocks):
            out.append("blocks nonempty")
        allidx = np.concatenate(self.blocks) if self.blocks else np.array([], int)
        if np.unique(allidx).size != allidx.size:
            out.append("blocks disjoint")
        if set(allidx.tolist()) != set(range(n)):
            out.append("blocks cover {0..n-1}")
        return out

    def to_list(self):
        return [b.tolist() for b in self.blocks]


@dataclass(frozen=True)
class Problem:
    """Minimize ``f(x)`` subject to ``A x = b`` and ``x`` in the box."""

    objective: ObjectiveOracle
    constraints: LinearConstraints
    box: BoxSet
    blocks: BlockPartition = field(default=None)

    @property
    def n(self):
        return self.box.n

    @property
    def m(self):
        return self.constraints.m

    @property
    def A(self):
        return self.constraints.A

    @property
    def b(self):
        return self.constraints.b

    @cached_property
    def sigma(self):
        """Spectral norm of ``A``."""
        return spectral_norm(self.A)

    @cached_property
    def block_sigmas(self):
        if self.blocks is None:
            return (self.sigma,)
        return tuple(spectral_norm(self.A[:, idx]) for idx in self.blocks.blocks)

    @property
    def is_quadratic(self):
        return isinstance(self.objective, QuadraticObjective)

    def with_blocks(self, blocks):
        return Problem(self.objective, self.constraints, self.box, blocks)

    def with_objective(self, objective):
        return Problem(objective, self.constraints, self.box, self.blocks)

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        if not self.is_quadratic:
            raise TypeError("only quadratic problems are serializable")
        d = {
            "Q": self.objective.Q.tolist(),
            "r": self.objective.r.tolist(),
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "lower": self.box.lower.tolist(),
            "upper": self.box.upper.tolist(),
        }
        if self.blocks is not None:
            d["blocks"] = self.blocks.to_list()
        return d

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ("Q", "r", "A", "b", "lower", "upper") if k not in d]
        if missing:
            raise ValueError(f"problem document is missing keys {missing}")
        blocks = d.get("blocks")
        return make_quadratic_problem(
            d["Q"], d["r"], d["A"], d["b"], BoxSet(d["lower"], d["upper"]),
            blocks=BlockPartition(tuple(blocks)) if blocks else None)

    def to_json(self, **kwargs):
        # repr-exact float formatting makes the bytes a function of the data
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def make_quadratic_problem(Q, r, A, b, box, blocks=None):
    """Build a :class:`Problem` with objective ``1/2 x^T Q x + r^T x``.

    Raises
    ------
    ValueError
        On inconsistent dimensions or an asymmetric ``Q``.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = box.n
    if Q.shape != (n, n):
        raise ValueError(f"Q has shape {Q.shape}, expected ({n}, {n})")
    if r.shape != (n,):
        raise ValueError(f"r has shape {r.shape}, expected ({n},)")
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"A has shape {A.shape}, expected (m, {n})")
    if b.shape != (A.shape[0],):
        raise ValueError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
    if not is_symmetric(Q):
        raise ValueError("Q must be symmetric")
    return Problem(QuadraticObjective(Q, r), LinearConstraints(A, b), box, blocks)


def _sample_box(box, rng, size):
    lo, hi = box.lower, box.upper
    return lo + (hi - lo) * rng.random((size, box.n))


def validate_problem(p, n_samples=20, seed=0):
    """List the invariants ``p`` violates; empty when the instance is well formed.

    Sampled checks (gradient by central finite differences, the weak-convexity
    and Lipschitz bounds) use ``n_samples`` points drawn uniformly from the box.
    """
    out = []
    box = p.box
    n = box.n
    if not (np.all(np.isfinite(box.lower)) and np.all(np.isfinite(box.upper))):
        out.append("bounds finite")
    if not np.all(box.lower < box.upper):
        out.append("lower < upper")
    A, b = p.constraints.A, p.constraints.b
    if A.shape[1] != n:
        out.append("A columns == n")
    if b.shape != (A.shape[0],):
        out.append("b length == m")
    if A.shape[0] < 1:
        out.append("m >= 1")
    if p.blocks is not None:
        out.extend(p.blocks.violations(n))
    obj = p.objective
    if isinstance(obj, QuadraticObjective):
        if obj.Q.shape != (n, n):
            out.append("Q shape n x n")
            return out
        if not is_symmetric(obj.Q):
            out.append("Q symmetric")
        if obj.r.shape != (n,):
            out.append("r length == n")
            return out
    if out and ("bounds finite" in out or "lower < upper" in out):
        return out

    rng = np.random.default_rng(seed)
    xs = _sample_box(box, rng, n_samples)
    xps = _sample_box(box, rng, n_samples)
    L, gamma = obj.lipschitz_L, obj.weak_convexity_gamma
    if not L >= 0:
        out.append("lipschitz_L >= 0")
    grad_ok = lip_ok = gam_ok = True
    for x, xp in zip(xs, xps):
        g = obj.grad(x)
        h = 1e-6 * (1.0 + np.linalg.norm(x))
        fd = np.array([(obj.value(x + h * e) - obj.value(x - h * e)) / (2 * h)
                       for e in np.eye(n)])
        if np.linalg.norm(fd - g) > 1e-5 * max(np.linalg.norm(g), 1.0):
            grad_ok = False
        dx = x - xp
        dg = g - obj.grad(xp)
        nd2 = dx @ dx
        slack = 1e-9 * (1.0 + abs(L)) * nd2
        if np.linalg.norm(dg) > L * np.sqrt(nd2) + np.sqrt(slack):
            lip_ok = False
        if dg @ dx < gamma * nd2 - slack:
            gam_ok = False
    if not grad_ok:
        out.append("grad matches finite differences")
    if not lip_ok:
        out.append("gradient Lipschitz with constant L")
    if not gam_ok:
        out.append("weak convexity with constant gamma")
    return out
