"""Augmented-Lagrangian values and gradients, box projection, and curvature
constant estimation."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PenaltyConfig",
    "CurvatureConstants",
    "project_box",
    "aug_lagrangian",
    "prox_aug_value",
    "grad_K",
    "spectral_norm",
    "symmetric_eig_bounds",
    "is_symmetric",
    "prox_aug_difference",
]

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weight ``Gamma`` on ``||Ax - b||^2`` and proximal weight ``p``."""

    Gamma: float
    p: float = 0.0

    def __post_init__(self):
        if not self.Gamma >= 0:
            raise ValueError(f"Gamma must be nonnegative, got {self.Gamma}")


@dataclass(frozen=True)
class CurvatureConstants:
    """Smoothness and strong-convexity moduli of ``K(., z; y)``.

    Attributes
    ----------
    L_K : float
        ``L + p + Gamma * sigma**2``.
    gamma_K : float
        ``p + gamma``; ``K`` is strongly convex in ``x`` when positive.
    sigma : float
        Largest singular value of ``A``.
    """

    L_K: float
    gamma_K: float
    sigma: float

    @classmethod
    def from_problem(cls, problem, cfg):
        L = problem.objective.lipschitz_L
        gamma = problem.objective.weak_convexity_gamma
        sigma = problem.sigma
        return cls(L + cfg.p + cfg.Gamma * sigma**2, cfg.p + gamma, sigma)


def _check_len(name, v, n):
    if v.shape != (n,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({n},)")


def project_box(x, box):
    """Componentwise projection of ``x`` onto ``[lower, upper]``."""
    x = np.asarray(x, dtype=float)
    if x.shape != box.lower.shape:
        raise ValueError(
            f"x has shape {x.shape}, box has dimension {box.lower.shape[0]}")
    return np.minimum(np.maximum(x, box.lower), box.upper)


def _residual(x, problem):
    _check_len("x", x, problem.n)
    return problem.A @ x - problem.b


def aug_lagrangian(x, y, problem, Gamma):
    """``f(x) + y^T (Ax - b) + Gamma/2 ||Ax - b||^2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_len("y", y, problem.m)
    res = _residual(x, problem)
    return float(problem.objective.value(x) + y @ res + 0.5 * Gamma * (res @ res))


def prox_aug_value(x, z, y, problem, cfg):
    """Proximal augmented Lagrangian ``L(x; y) + p/2 ||x - z||^2``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_len("z", z, problem.n)
    d = x - z
    return aug_lagrangian(x, y, problem, cfg.Gamma) + 0.5 * cfg.p * float(d @ d)


def grad_K(x, z, y, problem, cfg):
    """Gradient in ``x`` of the proximal augmented Lagrangian.

    ``grad f(x) + A^T y + Gamma A^T (Ax - b) + p (x - z)``
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_len("z", z, problem.n)
    _check_len("y", y, problem.m)
    res = _residual(x, problem)
    g = problem.objective.grad(x) + problem.A.T @ (y + cfg.Gamma * res)
    if cfg.p != 0.0:
        g = g + cfg.p * (x - z)
    return g


def _start_vector(n):
    # fixed start keeps estimates deterministic; a random direction is almost
    # surely not orthogonal to the dominant eigenvector
    return np.random.default_rng(0x5EED).standard_normal(n)


def _power(apply, n, tol, max_iter):
    """Dominant ``|eigenvalue|`` and Rayleigh quotient of a symmetric operator."""
    v = _start_vector(n)
    v /= np.linalg.norm(v)
    w = apply(v)
    est = np.linalg.norm(w)
    for _ in range(max_iter):
        if est == 0.0:
            return 0.0, 0.0, v
        v = w / est
        w = apply(v)
        new = np.linalg.norm(w)
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return est, float(v @ w), v


def prox_aug_difference(x1, z1, y1, x2, z2, y2, problem, cfg):
    """``K(x2, z2; y2) - K(x1, z1; y1)`` without cancellation.

    Every term is expanded around the first point, so the result stays
    accurate when the two points are close even though the values of ``K``
    are large.
    """
    A = problem.A
    dx = x2 - x1
    r1 = A @ x1 - problem.b
    Adx = A @ dx
    out = problem.objective.difference(x1, x2)
    out += float((y2 - y1) @ r1 + y2 @ Adx)
    out += 0.5 * cfg.Gamma * float(Adx @ (2.0 * r1 + Adx))
    if cfg.p != 0.0:
        u1 = x1 - z1
        du = dx - (z2 - z1)
        out += 0.5 * cfg.p * float(du @ (2.0 * u1 + du))
    return out


def spectral_norm(A, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Largest singular value of ``A`` by power iteration on the Gram matrix.

    Iterates on whichever of ``A^T A`` and ``A A^T`` is smaller. Returns 0 for
    the zero matrix.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.any(A):
        return 0.0
    m, n = A.shape
    if n <= m:
        est, _, _ = _power(lambda v: A.T @ (A @ v), n, tol, max_iter)
    else:
        est, _, _ = _power(lambda v: A @ (A.T @ v), m, tol, max_iter)
    return float(np.sqrt(est))


def is_symmetric(Q, rtol=1e-12):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(Q))) if Q.size else 1.0)
    return bool(np.max(np.abs(Q - Q.T), initial=0.0) <= rtol * scale)


def symmetric_eig_bounds(Q, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Extreme eigenvalues ``(lambda_min, lambda_max)`` of a symmetric matrix.

    Plain power iteration finds the eigenvalue of largest magnitude; a second
    power iteration on ``Q - lambda_dom I`` (whose spectrum has one sign) finds
    the opposite end of the spectrum.
    """
    Q = np.asarray(Q, dtype=float)
    if not is_symmetric(Q):
        raise ValueError("symmetric_eig_bounds requires a symmetric matrix")
    n = Q.shape[0]
    if not np.any(Q):
        return 0.0, 0.0
    radius, rho, _ = _power(lambda v: Q @ v, n, tol, max_iter)
    if abs(abs(rho) - radius) > 1e-6 * radius:
        # +radius and -radius are both eigenvalues; the iterate never settles
        # but the norm ratio still converges to the spectral radius
        return -radius, radius
    dom = np.sign(rho) * radius
    _, mu, _ = _power(lambda v: Q @ v - dom * v, n, tol, max_iter)
    other = dom + mu
    if dom > 0:
        return float(min(other, dom)), float(dom)
    return float(dom), float(max(other, dom))
