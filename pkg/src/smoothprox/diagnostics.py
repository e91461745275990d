"""Convergence diagnostics: inner solves, the potential function, stationarity
certificates, KKT checks, inequality audits, and linear-rate fits.

Two inner problems recur throughout:

``d(y, z) = min_{x in box} K(x, z; y)``
    solved by :func:`solve_x_of_yz`; its minimizer is ``x(y, z)``.
``M(z) = min {f(x) + p/2 ||x - z||^2 : Ax = b, x in box}``
    solved by :func:`solve_proximal`; its minimizer is ``x*(z)``.

Both are strongly convex when ``p > -gamma``. Every value computed from them
carries an explicit error bar, and audits widen their tolerances by exactly
those bars.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (CurvatureConstants, PenaltyConfig, grad_K, project_box,
                   prox_aug_difference, prox_aug_value)
from .model import ObjectiveOracle, Problem, check_vector
from .solvers import (IterState, SolverParams, _block_sweep, _dual_step,
                      _prox_step, _smooth)

__all__ = [
    "Certificate",
    "InnerSolveResult",
    "ErrorBoundConstants",
    "PotentialValue",
    "AuditCheck",
    "AuditReport",
    "ComplementarityReport",
    "RateFit",
    "solve_x_of_yz",
    "solve_proximal",
    "potential_phi",
    "stationarity_residual",
    "epsilon_certificate",
    "kkt_residual",
    "recover_multipliers",
    "strict_complementarity_check",
    "error_bound_audit",
    "descent_audit",
    "linear_rate_fit",
    "default_inner_tol",
]

_EPS = np.finfo(float).eps
LEMMA4_SLACK = 1e-9
MIN_RATE_POINTS = 30


# -- certificates ---------------------------------------------------------------

@dataclass
class Certificate:
    """Approximate-stationarity certificate for ``(x, y)``.

    ``v`` lies in ``grad f(x) + A^T y + N_box(x)``; ``epsilon`` is
    ``max(||v||, ||Ax - b||)``.
    """

    x: np.ndarray
    y: np.ndarray
    v_norm: float
    feas: float
    epsilon: float
    at_iter: int
    v: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {"v_norm": self.v_norm, "feas": self.feas, "epsilon": self.epsilon,
                "at_iter": self.at_iter, "x": self.x.tolist(), "y": self.y.tolist()}


def _certificate_from_grads(x_prev, x_next, y_next, g_used, gf_next, problem, c,
                            at_iter):
    # x_next = [x_prev - c g_used]_+ gives -(g_used + (x_next - x_prev)/c) in the
    # normal cone at x_next; adding grad f(x_next) + A^T y_next yields v
    v = gf_next + problem.A.T @ y_next - g_used - (x_next - x_prev) / c
    v_norm = float(np.linalg.norm(v))
    feas = float(np.linalg.norm(problem.A @ x_next - problem.b))
    return Certificate(x_next, y_next, v_norm, feas, max(v_norm, feas), at_iter, v)


def epsilon_certificate(s, problem, params, algo="ProxALM"):
    """Take one step from ``s`` and certify the new pair ``(x^{s+1}, y^{s+1})``.

    The vector is ``v = grad_x K(x^{s+1}, z^s; y^{s+1}) - grad_x K(x^s, z^s;
    y^{s+1}) - (x^{s+1} - x^s)/c - Gamma A^T (A x^{s+1} - b) - p (x^{s+1} -
    z^s)``, which simplifies to ``grad f(x^{s+1}) + A^T y^{s+1}`` minus the
    gradient actually used, minus the scaled step.

    Parameters
    ----------
    s : IterState
    problem : Problem
    params : SolverParams
    algo : {"ProxALM", "ALM", "MultiBlock"}

    Returns
    -------
    Certificate
        With ``at_iter = s.t + 1``.
    """
    if algo == "MultiBlock":
        y_new = _dual_step(s, problem, params)
        x_new, g = _block_sweep(s, y_new, problem, params)
    elif algo in ("ProxALM", "ALM"):
        cfg = params.penalty if algo == "ProxALM" else PenaltyConfig(params.Gamma, 0.0)
        x_new, y_new, g = _prox_step(s, problem, params, cfg)
    else:
        raise ValueError(f"no certificate for algorithm {algo!r}")
    return _certificate_from_grads(s.x, x_new, y_new, g, problem.objective.grad(x_new),
                                   problem, params.c, s.t + 1)


def stationarity_residual(x, y, problem):
    """``(||x - [x - (grad f(x) + A^T y)]_+||, ||Ax - b||)``."""
    x = check_vector(x, problem.n, "x")
    y = check_vector(y, problem.m, "y")
    g = problem.objective.grad(x) + problem.A.T @ y
    opt = float(np.linalg.norm(x - project_box(x - g, problem.box)))
    return opt, float(np.linalg.norm(problem.A @ x - problem.b))


# -- KKT ----------------------------------------------------------------------

def recover_multipliers(x, y, problem):
    """Bound multipliers ``(mu, nu)`` consistent with stationarity at ``(x, y)``.

    With ``g = grad f(x) + A^T y``: ``mu_i = max(g_i, 0)`` where ``x_i`` sits at
    its lower bound, ``nu_i = max(-g_i, 0)`` where it sits at its upper bound,
    zero elsewhere.
    """
    x = check_vector(x, problem.n, "x")
    g = problem.objective.grad(x) + problem.A.T @ check_vector(y, problem.m, "y")
    at_lo = x <= problem.box.lower
    at_hi = x >= problem.box.upper
    mu = np.where(at_lo, np.maximum(g, 0.0), 0.0)
    nu = np.where(at_hi, np.maximum(-g, 0.0), 0.0)
    return mu, nu


def kkt_residual(x, y, mu, nu, problem):
    """Largest violation among stationarity, feasibility and complementarity.

    Stationarity is ``grad f + A^T y - mu + nu = 0``; complementarity terms are
    ``|mu_i (l_i - x_i)|`` and ``|nu_i (x_i - u_i)|``. All norms are infinity
    norms.

    Raises
    ------
    ValueError
        If ``mu`` or ``nu`` has a negative entry.
    """
    n = problem.n
    x = check_vector(x, n, "x")
    y = check_vector(y, problem.m, "y")
    mu = check_vector(mu, n, "mu")
    nu = check_vector(nu, n, "nu")
    if np.any(mu < 0) or np.any(nu < 0):
        raise ValueError("bound multipliers must be nonnegative")
    lo, hi = problem.box.lower, problem.box.upper
    parts = [
        np.abs(problem.objective.grad(x) + problem.A.T @ y - mu + nu),
        np.abs(problem.A @ x - problem.b),
        np.maximum(lo - x, 0.0),
        np.maximum(x - hi, 0.0),
        np.abs(mu * (lo - x)),
        np.abs(nu * (x - hi)),
    ]
    return float(max(np.max(p, initial=0.0) for p in parts))


@dataclass
class ComplementarityReport:
    """Per-coordinate labels ``inactive``, ``active-strict`` or ``degenerate``."""

    labels: list

    @property
    def strict(self):
        return "degenerate" not in self.labels

    @property
    def degenerate_indices(self):
        return [i for i, lab in enumerate(self.labels) if lab == "degenerate"]


def strict_complementarity_check(x, y, mu, nu, box, tol):
    """Classify each coordinate of a KKT point.

    A coordinate within ``tol`` of a bound is ``active-strict`` when that
    bound's multiplier exceeds ``tol`` and ``degenerate`` otherwise; all other
    coordinates are ``inactive``. ``y`` is accepted for symmetry with
    :func:`kkt_residual` and not used.
    """
    x, mu, nu = (np.asarray(a, dtype=float) for a in (x, mu, nu))
    labels = []
    for i in range(x.size):
        near_lo = x[i] - box.lower[i] <= tol
        near_hi = box.upper[i] - x[i] <= tol
        if near_lo or near_hi:
            strong = (near_lo and mu[i] > tol) or (near_hi and nu[i] > tol)
            labels.append("active-strict" if strong else "degenerate")
        else:
            labels.append("inactive")
    return ComplementarityReport(labels)


# -- inner solves -----------------------------------------------------------------

@dataclass
class InnerSolveResult:
    """Outcome of an inner solve.

    Attributes
    ----------
    x_star : ndarray
    value : float
        Objective value at ``x_star``.
    residual : float
        Exit residual (scaled projected-gradient norm, or certificate epsilon).
    iters : int
    converged : bool
    value_error : float
        Bound on ``|value - true optimal value|``.
    x_error : float
        Bound on ``||x_star - true minimizer||``.
    y_star : ndarray, optional
        Multiplier estimate, for solves with equality constraints.
    """

    x_star: np.ndarray
    value: float
    residual: float
    iters: int
    converged: bool = True
    value_error: float = 0.0
    x_error: float = 0.0
    y_star: np.ndarray = None


def default_inner_tol(problem, x=None):
    """``1e-8 (1 + |f(x)|)`` at ``x`` (default: the box projection of 0)."""
    if x is None:
        x = project_box(np.zeros(problem.n), problem.box)
    return 1e-8 * (1.0 + abs(problem.objective.value(x)))


def solve_x_of_yz(y, z, problem, cfg, tol, x0=None, max_iter=500_000):
    """Minimize ``K(., z; y)`` over the box by projected gradient.

    The stepsize is ``1/L_K`` and the loop stops once the gradient mapping
    ``L_K ||x - [x - grad K / L_K]_+||`` is at most ``tol``. Strong convexity
    with modulus ``gamma_K = p + gamma`` then puts the returned point within
    ``tol / gamma_K`` of the minimizer and its value within
    ``tol**2 / (2 gamma_K)`` above the minimum.

    Raises
    ------
    ValueError
        If ``p <= -gamma``: the subproblem is not strongly convex.
    """
    consts = CurvatureConstants.from_problem(problem, cfg)
    if not consts.gamma_K > 0:
        raise ValueError(
            f"p = {cfg.p} <= -gamma = {-problem.objective.weak_convexity_gamma}: "
            "subproblem is not strongly convex")
    L_K, mu = consts.L_K, consts.gamma_K
    y = check_vector(y, problem.m, "y")
    z = check_vector(z, problem.n, "z")
    x = project_box(z if x0 is None else check_vector(x0, problem.n, "x0"), problem.box)
    res = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        x_new = project_box(x - grad_K(x, z, y, problem, cfg) / L_K, problem.box)
        res = L_K * float(np.linalg.norm(x - x_new))
        x = x_new
        if res <= tol:
            break
    ok = res <= tol
    return InnerSolveResult(
        x_star=x, value=prox_aug_value(x, z, y, problem, cfg), residual=res,
        iters=it, converged=ok, value_error=res**2 / (2.0 * mu),
        x_error=res / mu)


def _proximal_problem(problem, z, p):
    obj = problem.objective
    base = obj

    def fun(x):
        d = x - z
        return base.value(x) + 0.5 * p * float(d @ d)

    def grad(x):
        return base.grad(x) + p * (x - z)

    wrapped = ObjectiveOracle(fun, grad, obj.lipschitz_L + max(p, 0.0),
                              obj.weak_convexity_gamma + p)
    return Problem(wrapped, problem.constraints, problem.box)


def _inner_params(prox_problem):
    """Parameters for running the proximal method on a strongly convex problem.

    The penalty makes ``Gamma sigma^2`` comparable with the objective
    curvature; a small extra proximal weight keeps the method in the regime of
    its convergence guarantee.
    """
    L = prox_problem.objective.lipschitz_L
    s2 = max(prox_problem.sigma**2, 1e-300)
    Gamma = L / s2
    p_in = 0.1 * prox_problem.objective.weak_convexity_gamma
    L_K = L + p_in + Gamma * s2
    return SolverParams(Gamma=Gamma, alpha=Gamma / 4.0, beta=0.5, c=0.95 / L_K,
                        p=p_in, max_iter=1)


def solve_proximal(z, problem, p, tol, x0=None, y0=None, max_iter=500_000):
    """Solve ``min f(x) + p/2 ||x - z||^2`` s.t. ``Ax = b``, ``x`` in the box.

    The proximal primal-dual method itself is run on this strongly convex
    problem until the certificate epsilon is at most ``tol``.

    ``value`` is the augmented dual function at the final multiplier,
    ``min_{x in box} f(x) + p/2 ||x - z||^2 + y^T (Ax - b) + G/2 ||Ax - b||^2``
    with the inner penalty ``G``. By weak duality it never exceeds ``M(z)``.
    ``value_error`` adds the duality gap to the final point's weighted
    infeasibility ``|y^T (Ax - b)|``.

    Returns
    -------
    InnerSolveResult
        ``converged`` is False when the budget ran out first.

    Raises
    ------
    ValueError
        If ``p <= -gamma``.
    """
    gamma = problem.objective.weak_convexity_gamma
    if not p + gamma > 0:
        raise ValueError(f"p = {p} <= -gamma = {-gamma}: proximal problem not "
                         "strongly convex")
    z = check_vector(z, problem.n, "z")
    pp = _proximal_problem(problem, z, p)
    params = _inner_params(pp)
    cfg = params.penalty
    x = project_box(z if x0 is None else check_vector(x0, problem.n, "x0"), problem.box)
    y = np.zeros(problem.m) if y0 is None else check_vector(y0, problem.m, "y0").copy()
    s = IterState(x, y, x.copy(), 0)
    gf = pp.objective.grad(s.x)
    eps = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        x_new, y_new, g = _prox_step(s, pp, params, cfg, gf)
        gf = pp.objective.grad(x_new)
        cert = _certificate_from_grads(s.x, x_new, y_new, g, gf, pp, params.c, it)
        s = IterState(x_new, y_new, _smooth(s.z, x_new, params.beta), it)
        eps = cert.epsilon
        if eps <= tol:
            break
    ok = eps <= tol
    x, y = s.x, s.y
    # the augmented dual value at y bounds M(z) from below and, unlike the
    # primal value at a nearly feasible x, is accurate to second order in the
    # multiplier error
    dual = solve_x_of_yz(y, z, problem, PenaltyConfig(params.Gamma, p),
                         tol=max(tol * 1e-3, 1e-15), x0=x)
    primal = pp.objective.value(x)
    res = problem.A @ x - problem.b
    err = abs(primal - dual.value) + abs(float(y @ res)) + dual.value_error
    return InnerSolveResult(x_star=x, value=dual.value, residual=eps, iters=it,
                            converged=ok and dual.converged, value_error=err,
                            x_error=math.sqrt(2.0 * err / (p + gamma)), y_star=y)


# -- potential ----------------------------------------------------------------------

@dataclass
class PotentialValue:
    """``phi = K - 2 d + 2 M`` with its ingredients and an error bar.

    ``available`` is False when an inner solve did not reach its tolerance;
    ``value`` is then NaN.
    """

    value: float
    error: float
    K: float
    d: float
    M: float
    x_yz: np.ndarray = None
    x_star: np.ndarray = None
    y_star: np.ndarray = None
    available: bool = True

    def __float__(self):
        return float(self.value)


def potential_phi(s, problem, params, tol=None, warm=None):
    """Evaluate the potential ``K(x, z; y) - 2 d(y, z) + 2 M(z)`` at ``s``.

    Parameters
    ----------
    s : IterState
    problem : Problem
    params : SolverParams
        Only ``Gamma`` and ``p`` are used.
    tol : float, optional
        Inner tolerance; defaults to :func:`default_inner_tol` at ``s.x``.
    warm : PotentialValue, optional
        A nearby evaluation whose minimizers warm-start the inner solves.

    Returns
    -------
    PotentialValue
        ``error`` is ``2 err_d + 2 err_M`` plus a rounding allowance.
    """
    cfg = params.penalty
    if tol is None:
        tol = default_inner_tol(problem, s.x)
    K = prox_aug_value(s.x, s.z, s.y, problem, cfg)
    xd0 = s.x if warm is None or warm.x_yz is None else warm.x_yz
    inner = solve_x_of_yz(s.y, s.z, problem, cfg, tol, x0=xd0)
    xm0 = s.x if warm is None or warm.x_star is None else warm.x_star
    ym0 = s.y if warm is None or warm.y_star is None else warm.y_star
    prox = solve_proximal(s.z, problem, params.p, tol, x0=xm0, y0=ym0)
    if not (inner.converged and prox.converged):
        return PotentialValue(math.nan, math.inf, K, inner.value, prox.value,
                              inner.x_star, prox.x_star, prox.y_star, available=False)
    d, M = inner.value, prox.value
    rounding = 16 * _EPS * (abs(K) + 2 * abs(d) + 2 * abs(M))
    err = 2.0 * inner.value_error + 2.0 * prox.value_error + rounding
    return PotentialValue(K - 2.0 * d + 2.0 * M, err, K, d, M,
                          inner.x_star, prox.x_star, prox.y_star)


# -- audits -----------------------------------------------------------------------

@dataclass
class ErrorBoundConstants:
    """``sigma1 = c (p + gamma)``, ``sigma2 = sigma1 / (1 + sigma1)``,
    ``sigma3 = (gamma + p) / sigma``, ``sigma4 = (gamma + p) / p``."""

    sigma1: float
    sigma2: float
    sigma3: float
    sigma4: float

    @classmethod
    def from_params(cls, problem, params):
        gk = params.p + problem.objective.weak_convexity_gamma
        s1 = params.c * gk
        sig = problem.sigma
        return cls(s1, s1 / (1.0 + s1),
                   gk / sig if sig > 0 else math.inf,
                   gk / params.p if params.p > 0 else math.inf)


@dataclass
class AuditCheck:
    """One inequality ``lhs >= rhs - slack`` at one iteration."""

    name: str
    iteration: int
    lhs: float
    rhs: float
    slack: float
    passed: bool = None
    skipped: bool = False

    def __post_init__(self):
        if self.passed is None and not self.skipped:
            self.passed = bool(self.lhs >= self.rhs - self.slack)


@dataclass
class AuditReport:
    checks: list = field(default_factory=list)

    def add(self, check):
        self.checks.append(check)

    @property
    def violations(self):
        return [c for c in self.checks if not c.skipped and not c.passed]

    @property
    def n_violations(self):
        return len(self.violations)

    def by_name(self, name):
        return [c for c in self.checks if c.name == name]

    def summary(self):
        out = {}
        for c in self.checks:
            row = out.setdefault(c.name, {"checked": 0, "violations": 0, "skipped": 0})
            if c.skipped:
                row["skipped"] += 1
            else:
                row["checked"] += 1
                row["violations"] += int(not c.passed)
        return out

    def to_dict(self):
        return {"summary": self.summary(),
                "checks": [_jsonable(asdict(c)) for c in self.checks]}

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def extend(self, other):
        self.checks.extend(other.checks)
        return self


def _jsonable(d):
    # JSON has no infinities or NaN; encode them as strings
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            v = str(v)
        out[k] = v
    return out


def _pairs(states):
    states = list(states)
    if states and isinstance(states[0], IterState):
        return list(zip(states[:-1], states[1:]))
    return states


def _require_valid(problem, params):
    gk = params.p + problem.objective.weak_convexity_gamma
    if not gk > 0:
        raise ValueError("audit needs p > -gamma")
    return gk


def error_bound_audit(trace_states, problem, params, tol=None):
    """Check the primal error bounds along a proximal method trajectory.

    For each consecutive pair ``(s^t, s^{t+1})`` the point
    ``xh = x(y^{t+1}, z^t)`` is computed at tolerance ``tol`` and

    * ``eb1``: ``||x^{t+1} - x^t|| >= sigma1 ||x^t - xh||``
    * ``eb2``: ``||x^{t+1} - x^t|| >= sigma2 ||x^{t+1} - xh||``

    are checked with slack ``(1 + sigma1) tol / gamma_K``. The Lipschitz bound
    of ``x(y, .)``, ``||z^t - z^{t+1}|| >= sigma4 ||x(y^{t+1}, z^t) -
    x(y^{t+1}, z^{t+1})||``, is checked as ``eb3`` with slack
    ``2 sigma4 tol / gamma_K``.

    Parameters
    ----------
    trace_states : list
        Consecutive states, or a list of ``(s_t, s_t+1)`` pairs.

    Returns
    -------
    AuditReport
    """
    gk = _require_valid(problem, params)
    cfg = params.penalty
    ebc = ErrorBoundConstants.from_params(problem, params)
    report = AuditReport()
    for a, b in _pairs(trace_states):
        if tol is None:
            tol_i = default_inner_tol(problem, a.x)
        else:
            tol_i = tol
        slack = (1.0 + ebc.sigma1) * tol_i / gk
        step = float(np.linalg.norm(b.x - a.x))
        xh = solve_x_of_yz(b.y, a.z, problem, cfg, tol_i, x0=b.x)
        if not xh.converged:
            for name in ("eb1", "eb2", "eb3"):
                report.add(AuditCheck(name, a.t, math.nan, math.nan, slack,
                                      passed=False, skipped=True))
            continue
        report.add(AuditCheck("eb1", a.t, step,
                              ebc.sigma1 * float(np.linalg.norm(a.x - xh.x_star)), slack))
        report.add(AuditCheck("eb2", a.t, step,
                              ebc.sigma2 * float(np.linalg.norm(b.x - xh.x_star)), slack))
        if params.p > 0:
            xh2 = solve_x_of_yz(b.y, b.z, problem, cfg, tol_i, x0=xh.x_star)
            report.add(AuditCheck(
                "eb3", a.t, float(np.linalg.norm(a.z - b.z)),
                ebc.sigma4 * float(np.linalg.norm(xh.x_star - xh2.x_star)),
                2.0 * ebc.sigma4 * tol_i / gk,
                skipped=not xh2.converged))
    return report


def descent_audit(trace_states, problem, params, tol=None, potential=False,
                  slack=LEMMA4_SLACK):
    """Check the one-step descent inequalities along a trajectory.

    ``primal_descent`` (every pair)::

        K(x^t, z^t; y^t) - K(x^{t+1}, z^{t+1}; y^{t+1})
            >= 1/(2c) ||dx||^2 + p/(2 beta) ||dz||^2 - alpha ||A x^t - b||^2

    ``pg_descent`` (every pair)::

        K(x^t, z^t; y^{t+1}) - K(x^{t+1}, z^t; y^{t+1}) >= 1/(2c) ||dx||^2

    Both differences are evaluated without cancellation and checked with
    absolute ``slack``. With ``potential=True`` also::

        phi^t - phi^{t+1} >= 1/(8c) ||dx||^2
            + alpha/2 ||A x(y^{t+1}, z^t) - b||^2 + p/(6 beta) ||dz||^2

    (``potential_descent``) and ``phi^{t+1} <= phi^t`` (``potential_monotone``),
    each with slack equal to the two potentials' error bars; a failed inner
    solve marks these checks skipped.
    """
    cfg = params.penalty
    c, alpha, beta, p = params.c, params.alpha, params.beta, params.p
    report = AuditReport()
    prev_phi = None
    for a, b in _pairs(trace_states):
        dx = b.x - a.x
        dz = b.z - a.z
        nx2 = float(dx @ dx)
        nz2 = float(dz @ dz)
        res_a = problem.A @ a.x - problem.b
        drop = -prox_aug_difference(a.x, a.z, a.y, b.x, b.z, b.y, problem, cfg)
        rhs = nx2 / (2 * c) + (p / (2 * beta) * nz2 if p else 0.0) - alpha * float(res_a @ res_a)
        report.add(AuditCheck("primal_descent", a.t, drop, rhs, slack))
        drop_pg = -prox_aug_difference(a.x, a.z, b.y, b.x, a.z, b.y, problem, cfg)
        report.add(AuditCheck("pg_descent", a.t, drop_pg, nx2 / (2 * c), slack))
        if not potential:
            continue
        _require_valid(problem, params)
        tol_i = default_inner_tol(problem, a.x) if tol is None else tol
        phi_a = prev_phi if prev_phi is not None and prev_phi[0] is a else None
        phi_a = phi_a[1] if phi_a else potential_phi(a, problem, params, tol_i)
        phi_b = potential_phi(b, problem, params, tol_i, warm=phi_a)
        prev_phi = (b, phi_b)
        xh = solve_x_of_yz(b.y, a.z, problem, cfg, tol_i, x0=b.x)
        if not (phi_a.available and phi_b.available and xh.converged):
            for name in ("potential_descent", "potential_monotone"):
                report.add(AuditCheck(name, a.t, math.nan, math.nan, math.inf,
                                      passed=False, skipped=True))
            continue
        err = phi_a.error + phi_b.error
        rh = problem.A @ xh.x_star - problem.b
        rh_norm = float(np.linalg.norm(rh))
        dres = problem.sigma * xh.x_error
        # inexact xh perturbs the feasibility term by at most this much
        err_feas = 0.5 * alpha * (2.0 * rh_norm * dres + dres**2)
        gap = phi_a.value - phi_b.value
        rhs_phi = (nx2 / (8 * c) + 0.5 * alpha * float(rh @ rh)
                   + (p / (6 * beta) * nz2 if p else 0.0))
        report.add(AuditCheck("potential_descent", a.t, gap, rhs_phi, err + err_feas))
        report.add(AuditCheck("potential_monotone", a.t, gap, 0.0, err))
    return report


# -- rate fit --------------------------------------------------------------------

@dataclass
class RateFit:
    """Per-iteration contraction ``ratio`` of a geometric tail and the fit's
    ``r_squared``; ``n_points`` decrements entered the regression."""

    ratio: float
    r_squared: float
    n_points: int

    def __iter__(self):
        return iter((self.ratio, self.r_squared))


def linear_rate_fit(potential_tail):
    """Fit a geometric decay ``phi_t = phi_inf + C rho^t`` to a sampled tail.

    The log of successive decrements ``phi_t - phi_{t+h}`` is regressed on
    ``t``; for a geometric tail the decrements are themselves geometric with
    the same ratio, so ``phi_inf`` never has to be estimated. Only samples at
    the most common spacing ``h`` and only positive decrements are used.

    Parameters
    ----------
    potential_tail : sequence of (t, phi)

    Returns
    -------
    RateFit
        ``ratio = exp(slope)``. A tail with no decrease at all gives
        ``ratio = 1`` and ``r_squared = 0``.

    Raises
    ------
    ValueError
        With fewer than 30 points.
    """
    pts = sorted((int(t), float(v)) for t, v in potential_tail)
    if len(pts) < MIN_RATE_POINTS:
        raise ValueError(f"need at least {MIN_RATE_POINTS} points, got {len(pts)}")
    t = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts])
    h = np.diff(t)
    vals, counts = np.unique(h, return_counts=True)
    h0 = vals[np.argmax(counts)]
    dec = v[:-1] - v[1:]
    use = (h == h0) & (dec > 0) & np.isfinite(dec)
    if not np.any(use):
        return RateFit(1.0, 0.0, 0)
    if use.sum() < MIN_RATE_POINTS - 1:
        raise ValueError(f"only {int(use.sum())} usable decrements; need "
                         f"{MIN_RATE_POINTS - 1}")
    tt, ld = t[:-1][use], np.log(dec[use])
    slope, icpt = np.polyfit(tt, ld, 1)
    pred = slope * tt + icpt
    ss_res = float(np.sum((ld - pred) ** 2))
    ss_tot = float(np.sum((ld - ld.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(np.exp(slope)), r2, int(use.sum()))
