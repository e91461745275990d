"""Single-loop primal-dual iterations and the driver that runs them.

Four methods share one state type :class:`IterState`:

``ALM``
    inexact augmented Lagrangian: one dual ascent step, then one projected
    gradient step on ``L(.; y)``.
``ProxALM``
    the same with a proximal term centred at a smoothed sequence ``z``,
    which is averaged toward each new primal iterate.
``MultiBlock``
    linearized proximal ADMM: the projected gradient step is taken block by
    block in Gauss-Seidel order.
``ClassicADMM``
    two-block ADMM whose block subproblems are solved to tolerance by
    projected gradient; the double-loop baseline.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import PenaltyConfig, grad_K, project_box
from .model import check_vector

__all__ = [
    "ALGORITHMS",
    "SolverParams",
    "IterState",
    "TraceRecord",
    "RunResult",
    "StationarityStop",
    "FeasibilityStop",
    "alm_iterate",
    "proximal_alm_iterate",
    "multiblock_iterate",
    "classic_admm_iterate",
    "initial_state",
    "run",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_COLUMNS",
    "STOP_RULES",
    "EXTRA_COLUMNS",
    "make_stop",
]

ALGORITHMS = ("ALM", "ProxALM", "MultiBlock", "ClassicADMM")
DUAL_BLOWUP = 1e12


@dataclass(frozen=True)
class SolverParams:
    """Stepsizes and budget shared by all methods.

    Attributes
    ----------
    Gamma : float
        Penalty weight on ``||Ax - b||^2``.
    alpha : float
        Dual stepsize.
    beta : float
        Averaging weight of the smoothed sequence, in ``(0, 1]``.
    c : float
        Primal stepsize.
    p : float
        Proximal weight.
    max_iter : int
        Iteration budget.
    stop_tol : float
        Tolerance of the default stopping rule.
    record_every : int
        Trace sampling period; the final iteration is always recorded.
    """

    Gamma: float
    alpha: float
    beta: float
    c: float
    p: float = 0.0
    max_iter: int = 10_000
    stop_tol: float = 1e-6
    record_every: int = 1

    def __post_init__(self):
        if not self.Gamma >= 0:
            raise ValueError("Gamma must be nonnegative")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.max_iter < 0 or self.record_every < 1:
            raise ValueError("max_iter must be >= 0 and record_every >= 1")

    @property
    def penalty(self):
        return PenaltyConfig(self.Gamma, self.p)

    @classmethod
    def default_for(cls, problem, **overrides):
        """Parameter recipe of the uniform-QP comparison experiment.

        ``Gamma = 10``, ``alpha = Gamma / 4``, ``p = 2 L + 2 Gamma sigma^2``,
        ``c = 1 / (2 (L + Gamma sigma^2))``, ``beta = 0.5``.
        """
        Gamma = overrides.pop("Gamma", 10.0)
        L = problem.objective.lipschitz_L
        s2 = problem.sigma**2
        kw = dict(Gamma=Gamma, alpha=Gamma / 4, beta=0.5,
                  c=1.0 / (2.0 * (L + Gamma * s2)), p=2.0 * L + 2.0 * Gamma * s2)
        kw.update(overrides)
        return cls(**kw)

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "Gamma", "alpha", "beta", "c", "p", "max_iter", "stop_tol", "record_every")}

    def validity(self, problem):
        """Report the stepsize conditions under which convergence is proven.

        Returns a dict with ``prox_alm`` (``c < 1/L_K`` and ``p > -gamma``),
        ``multiblock`` (``c <= 1/(L + p + Gamma max_j ||A_j||^2)`` and
        ``p > -gamma``), and the constants involved. Violations are reported,
        never enforced.
        """
        L = problem.objective.lipschitz_L
        gamma = problem.objective.weak_convexity_gamma
        L_K = L + self.p + self.Gamma * problem.sigma**2
        sbar = max(problem.block_sigmas)
        L_bar = L + self.p + self.Gamma * sbar**2
        prox_ok = self.p > -gamma
        return {
            "prox_alm": bool(self.c < 1.0 / L_K and prox_ok),
            "multiblock": bool(self.c <= 1.0 / L_bar and prox_ok),
            "p_gt_minus_gamma": bool(prox_ok),
            "L_K": L_K,
            "gamma_K": self.p + gamma,
            "c_times_L_K": self.c * L_K,
            "sigma_bar": sbar,
        }


@dataclass(frozen=True)
class IterState:
    """Primal iterate ``x``, multiplier ``y``, smoothed iterate ``z``, counter."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    t: int = 0

    def copy(self):
        return IterState(self.x.copy(), self.y.copy(), self.z.copy(), self.t)


def initial_state(problem, x0=None, y0=None, z0=None):
    """Starting point; defaults to the projection of 0 onto the box, ``y = 0``
    and ``z = x``."""
    x = project_box(np.zeros(problem.n) if x0 is None
                    else check_vector(x0, problem.n, "x0"), problem.box)
    y = np.zeros(problem.m) if y0 is None else check_vector(y0, problem.m, "y0").copy()
    z = x.copy() if z0 is None else project_box(check_vector(z0, problem.n, "z0"),
                                                problem.box)
    return IterState(x, y, z, 0)


TRACE_COLUMNS = ("t", "f", "feas", "step_x", "step_z", "prox_gap", "grad_evals",
                 "potential", "inner_feas")
# trailing column written by this package; readers treat it as optional
EXTRA_COLUMNS = ("opt_gap",)


@dataclass
class TraceRecord:
    """Diagnostics of iterate ``t`` and the step leaving it.

    ``f_val``, ``feas`` and ``opt_gap`` are measured at ``(x^t, y^t)``;
    ``step_x`` is ``||x^t - x^{t+1}||``, ``step_z`` is ``||z^t - z^{t+1}||``
    and ``prox_gap`` is ``||x^{t+1} - z^t||``. ``grad_evals`` counts the
    evaluations spent to reach state ``t``. The last row of a run describes
    the final iterate; its step columns come from one look-ahead step that
    is neither applied nor counted. ``potential`` and ``inner_feas`` are
    filled only when potential tracking is on.
    """

    t: int
    f_val: float
    feas: float
    step_x: float
    step_z: float
    prox_gap: float
    grad_evals: int
    potential: float = None
    inner_feas: float = None
    opt_gap: float = None

    def as_row(self):
        opt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        return [str(self.t), repr(float(self.f_val)), repr(float(self.feas)),
                repr(float(self.step_x)), repr(float(self.step_z)),
                repr(float(self.prox_gap)), str(self.grad_evals),
                opt(self.potential), opt(self.inner_feas), opt(self.opt_gap)]


def write_trace_csv(trace, path_or_buf):
    """Write records in the ``t,f,feas,...`` schema sorted by ``t``."""
    rows = sorted(trace, key=lambda r: r.t)
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS + EXTRA_COLUMNS)
        for r in rows:
            w.writerow(r.as_row())
    finally:
        if own:
            fh.close()


def read_trace_csv(path_or_buf):
    """Parse a trace CSV; raises ValueError naming any missing column."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, newline="", encoding="utf-8") if own else path_or_buf
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TRACE_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"trace is missing column(s): {', '.join(missing)}")
        out = []
        for row in reader:
            opt = lambda k: float(row[k]) if row.get(k) not in ("", None) else None  # noqa: E731
            out.append(TraceRecord(
                t=int(row["t"]), f_val=float(row["f"]), feas=float(row["feas"]),
                step_x=float(row["step_x"]), step_z=float(row["step_z"]),
                prox_gap=float(row["prox_gap"]), grad_evals=int(float(row["grad_evals"])),
                potential=opt("potential"), inner_feas=opt("inner_feas"),
                opt_gap=opt("opt_gap")))
        return out
    finally:
        if own:
            fh.close()


# -- single iterations ------------------------------------------------------

def _dual_step(s, problem, params):
    return s.y + params.alpha * (problem.A @ s.x - problem.b)


def _smooth(z, x_new, beta):
    if beta == 1.0:
        return x_new.copy()
    return z + beta * (x_new - z)


def _grad_K_cached(s, y_new, problem, cfg, gf):
    # same expression as grad_K, with grad f(x) supplied
    res = problem.A @ s.x - problem.b
    g = gf + problem.A.T @ (y_new + cfg.Gamma * res)
    if cfg.p != 0.0:
        g = g + cfg.p * (s.x - s.z)
    return g


def _prox_step(s, problem, params, cfg, gf=None):
    """One dual-then-primal step; returns the new x, y and the gradient used."""
    y_new = _dual_step(s, problem, params)
    if gf is None:
        g = grad_K(s.x, s.z, y_new, problem, cfg)
    else:
        g = _grad_K_cached(s, y_new, problem, cfg, gf)
    x_new = project_box(s.x - params.c * g, problem.box)
    return x_new, y_new, g


def alm_iterate(s, problem, params):
    """One step of the inexact augmented Lagrangian method.

    ``y+ = y + alpha (Ax - b)``, then ``x+ = [x - c grad_x L(x; y+)]``;
    ``z`` is carried unchanged.
    """
    cfg = PenaltyConfig(params.Gamma, 0.0)
    x_new, y_new, _ = _prox_step(s, problem, params, cfg)
    return IterState(x_new, y_new, s.z, s.t + 1)


def proximal_alm_iterate(s, problem, params):
    """One step of the proximal inexact augmented Lagrangian method.

    In order: ``y+ = y + alpha (Ax - b)`` from the old ``x``;
    ``x+ = [x - c grad_x K(x, z; y+)]``; ``z+ = z + beta (x+ - z)``.
    """
    x_new, y_new, _ = _prox_step(s, problem, params, params.penalty)
    return IterState(x_new, y_new, _smooth(s.z, x_new, params.beta), s.t + 1)


def _require_blocks(problem):
    if problem.blocks is None:
        raise ValueError("problem has no block partition")
    return problem.blocks


def _block_sweep(s, y_new, problem, params, gf=None):
    """Gauss-Seidel projected gradient sweep; returns x+ and the gradient
    actually applied to each block. ``gf`` is a cached ``grad f(x^t)``, which
    serves the first block."""
    blocks = _require_blocks(problem)
    cfg = params.penalty
    lo, hi = problem.box.lower, problem.box.upper
    x = s.x.copy()
    g_used = np.empty_like(x)
    for j, idx in enumerate(blocks.blocks):
        if j == 0 and gf is not None:
            g = _grad_K_cached(s, y_new, problem, cfg, gf)[idx]
        else:
            g = grad_K(x, s.z, y_new, problem, cfg)[idx]
        x[idx] = np.minimum(np.maximum(s.x[idx] - params.c * g, lo[idx]), hi[idx])
        g_used[idx] = g
    return x, g_used


def multiblock_iterate(s, problem, params):
    """One step of the linearized proximal ADMM.

    The dual step comes first; block ``j`` then takes a projected gradient step
    using the gradient at the point whose blocks ``1..j-1`` are already
    updated; finally ``z`` is averaged as in :func:`proximal_alm_iterate`.
    """
    y_new = _dual_step(s, problem, params)
    x_new, _ = _block_sweep(s, y_new, problem, params)
    return IterState(x_new, y_new, _smooth(s.z, x_new, params.beta), s.t + 1)


def _inner_block_pg(x, j_idx, y, problem, Gamma, step, inner_tol, max_inner):
    """Minimize ``L(x; y)`` over block ``j_idx`` in place by projected gradient.

    At least one step is always taken. Returns the number of block-gradient
    evaluations, including the one that certifies the tolerance.
    """
    cfg = PenaltyConfig(Gamma, 0.0)
    lo, hi = problem.box.lower[j_idx], problem.box.upper[j_idx]
    evals = 0
    for k in range(max_inner):
        g = grad_K(x, x, y, problem, cfg)[j_idx]
        evals += 1
        xj = x[j_idx]
        if k > 0 and np.linalg.norm(xj - np.minimum(np.maximum(xj - g, lo), hi)) <= inner_tol:
            break
        x[j_idx] = np.minimum(np.maximum(xj - step * g, lo), hi)
    return evals


def classic_admm_iterate(s, problem, params, inner_tol, max_inner=100_000):
    """One outer iteration of two-block ADMM with inexact block solves.

    Block 1 minimizes ``L(x1, x2; y)`` over its box, then block 2 does the same
    at the new ``x1``; both by projected gradient with stepsize
    ``1 / (L + Gamma ||A_j||^2)`` until the unit-step projected-gradient
    residual is at most ``inner_tol``. The multiplier step follows:
    ``y+ = y + alpha (A x+ - b)``.

    Returns
    -------
    state : IterState
    inner_grad_evals : int
        Block-gradient evaluations spent in the two inner solves.
    """
    blocks = _require_blocks(problem)
    if blocks.k != 2:
        raise ValueError(f"classic ADMM needs exactly 2 blocks, got {blocks.k}")
    L = problem.objective.lipschitz_L
    x = s.x.copy()
    total = 0
    for idx, sj in zip(blocks.blocks, problem.block_sigmas):
        step = 1.0 / (L + params.Gamma * sj**2)
        total += _inner_block_pg(x, idx, s.y, problem, params.Gamma, step,
                                 inner_tol, max_inner)
    y_new = s.y + params.alpha * (problem.A @ x - problem.b)
    return IterState(x, y_new, x.copy(), s.t + 1), total


# -- stopping rules ----------------------------------------------------------

class StationarityStop:
    """Fires when ``opt_gap + feas <= tol`` at ``(x^{t+1}, y^{t+1})`` and, if
    ``require_certificate``, the iteration's certificate (when the method
    provides one) is within ``tol``."""

    def __init__(self, tol, require_certificate=True):
        self.tol = tol
        self.require_certificate = require_certificate

    def __call__(self, opt_gap, feas, cert_eps):
        if opt_gap + feas > self.tol:
            return False
        if not self.require_certificate or cert_eps is None:
            return True
        return cert_eps <= self.tol


class FeasibilityStop:
    """Fires when ``||A x^{t+1} - b|| <= tol``."""

    def __init__(self, tol):
        self.tol = tol

    def __call__(self, opt_gap, feas, cert_eps):
        return feas <= self.tol


STOP_RULES = ("stationarity", "measure", "feasibility")


def make_stop(name, tol):
    """``stationarity`` (gap, feasibility and certificate), ``measure`` (gap
    plus feasibility only) or ``feasibility``."""
    if name == "stationarity":
        return StationarityStop(tol)
    if name == "measure":
        return StationarityStop(tol, require_certificate=False)
    if name == "feasibility":
        return FeasibilityStop(tol)
    raise ValueError(f"unknown stopping rule {name!r}; expected one of {STOP_RULES}")


# -- driver -------------------------------------------------------------------

@dataclass
class RunResult:
    """Outcome of :func:`run`.

    ``status`` is ``"converged"`` (stopping rule fired), ``"max_iter"``, or
    ``"diverged"`` (non-finite values or a dual blowup; ``message`` names the
    iteration).
    """

    final: IterState
    trace: list
    certificate: object = None
    status: str = "max_iter"
    message: str = ""
    grad_evals: int = 0
    validity: dict = field(default_factory=dict)
    algo: str = "ProxALM"
    best_certificate: object = None
    history: list = None
    # (t, best certificate epsilon so far) every record_every iterations
    certificate_trace: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def diverged(self):
        return self.status == "diverged"

    def __iter__(self):
        return iter((self.final, self.trace, self.certificate))


def _stationarity(x, y, gf, problem):
    g = gf + problem.A.T @ y
    opt = float(np.linalg.norm(x - project_box(x - g, problem.box)))
    feas = float(np.linalg.norm(problem.A @ x - problem.b))
    return opt, feas


def _advance(s, problem, params, algo, cfg, gf, inner_tol):
    """One iteration of ``algo``; returns ``(next_state, g_used, evals)``.

    ``g_used`` is the gradient applied in the primal step (None for classic
    ADMM); ``evals`` counts block-gradient evaluations spent, excluding the
    evaluation of ``grad f`` at the new iterate.
    """
    if algo == "ClassicADMM":
        nxt, inner = classic_admm_iterate(s, problem, params, inner_tol)
        return nxt, None, inner
    if algo == "MultiBlock":
        y_new = _dual_step(s, problem, params)
        x_new, g_used = _block_sweep(s, y_new, problem, params, gf)
        # block 1 reuses the cached grad f(x^t); blocks 2..k evaluate afresh
        nxt = IterState(x_new, y_new, _smooth(s.z, x_new, params.beta), s.t + 1)
        return nxt, g_used, problem.blocks.k - 1
    x_new, y_new, g_used = _prox_step(s, problem, params, cfg, gf)
    z_new = s.z if algo == "ALM" else _smooth(s.z, x_new, params.beta)
    return IterState(x_new, y_new, z_new, s.t + 1), g_used, 0


def _finite(state):
    return bool(np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.y)))


def run(problem, params, algo="ProxALM", init=None, stop=None, *,
        inner_tol=None, potential=None, keep_history=False, history_every=1,
        callback=None):
    """Iterate ``algo`` from ``init`` until ``stop`` fires or the budget ends.

    Parameters
    ----------
    problem : Problem
    params : SolverParams
    algo : {"ALM", "ProxALM", "MultiBlock", "ClassicADMM"}
    init : IterState, optional
        Defaults to :func:`initial_state`.
    stop : callable or {"stationarity", "measure", "feasibility"}, optional
        ``stop(opt_gap, feas, cert_eps) -> bool`` evaluated after every
        iteration at ``(x^{t+1}, y^{t+1})``. Defaults to
        ``StationarityStop(params.stop_tol)``.
    inner_tol : float, optional
        Subproblem tolerance for ``ClassicADMM``; defaults to
        ``params.stop_tol / 10``.
    potential : callable, optional
        ``potential(state, next_state) -> (value, inner_feas)`` evaluated for
        recorded rows; fills the trace's optional columns.
    keep_history : bool
        Keep every ``history_every``-th state (for audits).
    callback : callable, optional
        ``callback(prev_state, new_state)`` after every iteration.

    Returns
    -------
    RunResult
        Iterable as ``(final, trace, certificate)``; ``certificate`` is the
        one of the final iteration.

    Notes
    -----
    Row ``t`` of the trace describes ``x^t`` and the step to ``x^{t+1}``.
    Rows are written every ``record_every`` iterations; the final iterate
    always gets a row, whose step columns come from one look-ahead iteration
    that is not counted in ``grad_evals`` and not applied.
    """
    from .diagnostics import _certificate_from_grads

    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    if algo in ("MultiBlock", "ClassicADMM"):
        _require_blocks(problem)
    if isinstance(stop, str):
        stop = make_stop(stop, params.stop_tol)
    elif stop is None:
        stop = StationarityStop(params.stop_tol)
    if inner_tol is None:
        inner_tol = params.stop_tol / 10.0

    s = initial_state(problem) if init is None else init
    obj = problem.objective
    cfg = PenaltyConfig(params.Gamma, 0.0 if algo == "ALM" else params.p)
    result = RunResult(final=s, trace=[], validity=params.validity(problem), algo=algo)
    history = [s] if keep_history else None
    result.history = history
    if params.max_iter == 0:
        return result

    def record(state, nxt, evals_at_state, opt_gap):
        rec = TraceRecord(
            t=state.t, f_val=obj.value(state.x),
            feas=float(np.linalg.norm(problem.A @ state.x - problem.b)),
            step_x=float(np.linalg.norm(state.x - nxt.x)),
            step_z=float(np.linalg.norm(state.z - nxt.z)),
            prox_gap=float(np.linalg.norm(nxt.x - state.z)),
            grad_evals=evals_at_state, opt_gap=opt_gap)
        if potential is not None:
            rec.potential, rec.inner_feas = potential(state, nxt)
        result.trace.append(rec)
        return rec

    gf = obj.grad(s.x)
    evals = 0 if algo == "ClassicADMM" else 1
    opt_cur = _stationarity(s.x, s.y, gf, problem)[0]
    best = None
    cert = None
    nonfinite = False
    for it in range(params.max_iter):
        t = s.t
        nxt, g_used, spent = _advance(s, problem, params, algo, cfg, gf, inner_tol)
        if not _finite(nxt):
            result.status = "diverged"
            result.message = f"non-finite iterate at iteration {t + 1}"
            record(s, nxt, evals, opt_cur)
            nonfinite = True
            break
        evals_prev = evals
        evals += spent
        gf_next = obj.grad(nxt.x)
        if algo != "ClassicADMM":
            evals += 1
        if float(np.linalg.norm(nxt.y)) > DUAL_BLOWUP:
            result.status = "diverged"
            result.message = (f"dual iterate norm exceeded {DUAL_BLOWUP:g} "
                              f"at iteration {t + 1}")

        opt_gap, feas_next = _stationarity(nxt.x, nxt.y, gf_next, problem)
        cert_eps = None
        if g_used is not None:
            cert = _certificate_from_grads(s.x, nxt.x, nxt.y, g_used, gf_next,
                                           problem, params.c, t + 1)
            if best is None or cert.epsilon < best.epsilon:
                best = cert
            cert_eps = cert.epsilon
            if (t + 1) % params.record_every == 0:
                result.certificate_trace.append((t + 1, best.epsilon))

        fired = result.status != "diverged" and stop(opt_gap, feas_next, cert_eps)
        if t % params.record_every == 0:
            rec = record(s, nxt, evals_prev, opt_cur)
            if not math.isfinite(rec.f_val):
                result.status = "diverged"
                result.message = f"non-finite objective at iteration {t}"
        if callback is not None:
            callback(s, nxt)
        s = nxt
        gf = gf_next
        opt_cur = opt_gap
        if keep_history and s.t % history_every == 0:
            history.append(s)
        if result.status == "diverged":
            break
        if fired:
            result.status = "converged"
            break

    if not nonfinite:
        ahead, _, _ = _advance(s, problem, params, algo, cfg, gf, inner_tol)
        record(s, ahead, evals, opt_cur)
        if best is not None and (not result.certificate_trace
                                 or result.certificate_trace[-1][0] != s.t):
            result.certificate_trace.append((s.t, best.epsilon))
    result.final = s
    result.certificate = cert
    result.best_certificate = best
    result.grad_evals = evals
    return result
