"""Estimator-style front end to the solvers.

Each solver is a scikit-learn :class:`~sklearn.base.BaseEstimator`, so it
supports ``get_params`` / ``set_params`` / ``clone``. ``fit`` consumes a
:class:`~smoothprox.model.Problem` instead of a data matrix and stores the
solution in trailing-underscore attributes.

Unset stepsizes are resolved per problem: ``Gamma``, ``alpha``, ``beta`` and
``p`` follow the uniform-QP comparison recipe of
:meth:`SolverParams.default_for`, while ``c`` defaults to ``0.99`` times the
largest stepsize covered by the convergence theory of the chosen method.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .diagnostics import stationarity_residual
from .model import Problem, check_vector, validate_problem
from .solvers import SolverParams, initial_state, run

__all__ = [
    "check_problem",
    "InexactALM",
    "ProximalALM",
    "LinearizedProximalADMM",
    "ClassicADMM",
]

STEP_FRACTION = 0.99


def check_problem(problem, require_blocks=False, n_samples=20):
    """Validate a problem instance and return it.

    Raises
    ------
    TypeError
        If ``problem`` is not a :class:`Problem`.
    ValueError
        Listing every violated condition reported by
        :func:`~smoothprox.model.validate_problem`.
    """
    if not isinstance(problem, Problem):
        raise TypeError(f"expected a Problem, got {type(problem).__name__}")
    bad = validate_problem(problem, n_samples=n_samples)
    if require_blocks and problem.blocks is None:
        bad.append("block partition present")
    if bad:
        raise ValueError("invalid problem: " + "; ".join(bad))
    return problem


class _PrimalDualSolver(BaseEstimator):
    _algo = None

    def _resolve_params(self, problem):
        kw = {k: v for k, v in dict(Gamma=self.Gamma, alpha=self.alpha,
                                    beta=self.beta, p=self.p).items()
              if v is not None}
        base = SolverParams.default_for(problem, **kw)
        c = self.c
        if c is None:
            L = problem.objective.lipschitz_L
            sig = (max(problem.block_sigmas) if self._algo == "MultiBlock"
                   else problem.sigma)
            c = STEP_FRACTION / (L + base.p + base.Gamma * sig**2)
        return base.replace(c=c, max_iter=self.max_iter, stop_tol=self.tol,
                            record_every=self.record_every)

    def _run_kwargs(self):
        return {}

    def fit(self, problem, x0=None, y0=None, z0=None):
        """Run the method on ``problem`` from ``(x0, y0, z0)``.

        Parameters
        ----------
        problem : Problem
        x0, y0, z0 : array_like, optional
            Starting point; see :func:`~smoothprox.solvers.initial_state`.

        Returns
        -------
        self
        """
        check_problem(problem, require_blocks=self._algo in ("MultiBlock", "ClassicADMM"),
                      n_samples=self.validation_samples)
        params = self._resolve_params(problem)
        init = initial_state(problem, x0, y0, z0)
        res = run(problem, params, self._algo, init=init, stop=self.stop,
                  **self._run_kwargs())
        self.params_ = params
        self.result_ = res
        self.x_ = res.final.x
        self.y_ = res.final.y
        self.z_ = res.final.z
        self.n_iter_ = res.final.t
        self.trace_ = res.trace
        self.certificate_ = res.best_certificate
        self.status_ = res.status
        self.grad_evals_ = res.grad_evals
        self.problem_ = problem
        return self

    def predict(self, problem=None):
        """The primal solution ``x_``; ``problem`` is accepted and ignored."""
        check_is_fitted(self, "x_")
        return self.x_

    def residuals(self, problem=None):
        """``(opt_gap, feas)`` of ``(x_, y_)`` on ``problem`` (default: the
        fitted one)."""
        check_is_fitted(self, "x_")
        problem = self.problem_ if problem is None else problem
        return stationarity_residual(check_vector(self.x_, problem.n),
                                     self.y_, problem)

    def score(self, problem=None):
        """Negative optimality measure ``-(opt_gap + feas)``; larger is better."""
        return -float(np.sum(self.residuals(problem)))


_COMMON_DOC = """
    Parameters
    ----------
    Gamma, alpha, beta, p, c : float, optional
        Penalty weight, dual stepsize, smoothing weight, proximal weight and
        primal stepsize. ``None`` resolves per problem (see module notes).
    max_iter : int
    tol : float
        Tolerance of the stopping rule.
    stop : {"stationarity", "measure", "feasibility"}
    record_every : int
        Trace sampling period.
    validation_samples : int
        Random points used by :func:`check_problem`.

    Attributes
    ----------
    x_, y_, z_ : ndarray
        Final iterate.
    n_iter_ : int
    trace_ : list of TraceRecord
    certificate_ : Certificate or None
        Best certificate observed during the run.
    status_ : {"converged", "max_iter", "diverged"}
    grad_evals_ : int
    params_ : SolverParams
        The resolved parameters.
"""


class ProximalALM(_PrimalDualSolver):
    __doc__ = """Proximal inexact augmented Lagrangian method with a smoothed
    proximal centre.
    """ + _COMMON_DOC
    _algo = "ProxALM"

    def __init__(self, Gamma=None, alpha=None, beta=None, p=None, c=None,
                 max_iter=10_000, tol=1e-6, stop="stationarity", record_every=1,
                 validation_samples=20):
        self.Gamma = Gamma
        self.alpha = alpha
        self.beta = beta
        self.p = p
        self.c = c
        self.max_iter = max_iter
        self.tol = tol
        self.stop = stop
        self.record_every = record_every
        self.validation_samples = validation_samples


class InexactALM(_PrimalDualSolver):
    __doc__ = """Inexact augmented Lagrangian method: one projected gradient step
    per dual update, no proximal term. ``p`` and ``beta`` are fixed at 0 and 1.
    """ + _COMMON_DOC
    _algo = "ALM"

    def __init__(self, Gamma=None, alpha=None, c=None, max_iter=10_000, tol=1e-6,
                 stop="stationarity", record_every=1, validation_samples=20):
        self.Gamma = Gamma
        self.alpha = alpha
        self.c = c
        self.max_iter = max_iter
        self.tol = tol
        self.stop = stop
        self.record_every = record_every
        self.validation_samples = validation_samples

    # the plain method has no proximal term
    p = 0.0
    beta = 1.0


class LinearizedProximalADMM(_PrimalDualSolver):
    __doc__ = """Multi-block proximal ADMM with one linearized Gauss-Seidel sweep
    per dual update. The problem must carry a block partition.
    """ + _COMMON_DOC
    _algo = "MultiBlock"

    def __init__(self, Gamma=None, alpha=None, beta=None, p=None, c=None,
                 max_iter=10_000, tol=1e-6, stop="stationarity", record_every=1,
                 validation_samples=20):
        self.Gamma = Gamma
        self.alpha = alpha
        self.beta = beta
        self.p = p
        self.c = c
        self.max_iter = max_iter
        self.tol = tol
        self.stop = stop
        self.record_every = record_every
        self.validation_samples = validation_samples


class ClassicADMM(_PrimalDualSolver):
    __doc__ = """Two-block ADMM with block subproblems solved by projected
    gradient to ``inner_tol`` (default ``tol / 10``). Only ``Gamma`` and
    ``alpha`` affect the iteration.
    """ + _COMMON_DOC
    _algo = "ClassicADMM"

    def __init__(self, Gamma=None, alpha=None, inner_tol=None, max_iter=10_000,
                 tol=1e-6, stop="measure", record_every=1, validation_samples=20):
        self.Gamma = Gamma
        self.alpha = alpha
        self.inner_tol = inner_tol
        self.max_iter = max_iter
        self.tol = tol
        self.stop = stop
        self.record_every = record_every
        self.validation_samples = validation_samples

    p = None
    beta = None
    c = None

    def _run_kwargs(self):
        return {"inner_tol": self.inner_tol}
