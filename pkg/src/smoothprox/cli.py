"""Experiment runner: ad-hoc solves from JSON configs, named presets, trace
comparison, and instance generation.

Command line::

    smoothprox solve --config F | --preset NAME [--seed S] [--paper-scale] [--out DIR]
    smoothprox compare --metric {feas,opt_gap,sum} T1 T2 ...
    smoothprox gen --family F --n N --m M --seed S --out file.json

Exit codes: 0 on completion, 2 on a bad config or trace schema, 3 on an
unreadable input or failed write, 4 when a run blew up (non-finite iterate or
dual norm above the blowup threshold).
"""

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (default_inner_tol, descent_audit, error_bound_audit,
                          potential_phi, solve_x_of_yz, stationarity_residual)
from .gen import FAMILIES, GenSpec, generate
from .model import Problem
from .solvers import (ALGORITHMS, STOP_RULES, SolverParams, read_trace_csv, run,
                      write_trace_csv)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "run_experiment",
    "run_preset",
    "compare_traces",
    "CompareTable",
    "PRESETS",
    "main",
]

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_BLOWUP = 0, 2, 3, 4
AUDIT_NAMES = ("descent", "error_bounds", "potential", "certificate")
PARAM_KEYS = ("Gamma", "alpha", "beta", "c", "p", "max_iter", "stop_tol",
              "record_every", "c_fraction")
CONFIG_KEYS = ("problem", "gen", "algo", "params", "stop", "audits", "audit_every",
               "inner_tol", "output_dir", "preset", "name")


class ConfigError(ValueError):
    """Malformed experiment config or trace file."""


# -- configs ---------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """One solver run.

    Exactly one of ``problem`` (an inline problem document) and ``gen`` (a
    generator spec ``{"family", "n", "m", "seed"}``) is set. ``params`` may be
    partial: missing entries follow :meth:`SolverParams.default_for`, and
    ``c_fraction`` sets ``c`` to that fraction of the largest stepsize the
    convergence theory allows for ``algo``.
    """

    problem: dict = None
    gen: dict = None
    algo: str = "ProxALM"
    params: dict = field(default_factory=dict)
    stop: str = "stationarity"
    audits: dict = field(default_factory=lambda: {"certificate": True})
    audit_every: int = None
    inner_tol: float = None
    output_dir: str = "out"
    preset: str = None
    name: str = "run"

    def __post_init__(self):
        if (self.problem is None) == (self.gen is None):
            raise ConfigError("config needs exactly one of 'problem' and 'gen'")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {ALGORITHMS}")
        if self.stop not in STOP_RULES:
            raise ConfigError(f"unknown stop {self.stop!r}; expected one of {STOP_RULES}")
        bad = [k for k in self.params if k not in PARAM_KEYS]
        if bad:
            raise ConfigError(f"unknown params {bad}")
        bad = [k for k in self.audits if k not in AUDIT_NAMES]
        if bad:
            raise ConfigError(f"unknown audits {bad}; expected a subset of {AUDIT_NAMES}")
        if self.audit_every is not None and self.audit_every < 1:
            raise ConfigError("audit_every must be >= 1")

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        bad = [k for k in d if k not in CONFIG_KEYS]
        if bad:
            raise ConfigError(f"unknown config keys {bad}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(d)

    def build_problem(self):
        try:
            if self.gen is not None:
                return generate(GenSpec(**self.gen))
            return Problem.from_dict(self.problem)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad problem: {exc}") from exc

    def build_params(self, problem):
        kw = dict(self.params)
        frac = kw.pop("c_fraction", None)
        if frac is not None and "c" in kw:
            raise ConfigError("give at most one of 'c' and 'c_fraction'")
        try:
            params = SolverParams.default_for(problem, **kw)
            if frac is not None:
                params = params.replace(c=frac / step_bound(problem, params, self.algo))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad params: {exc}") from exc
        return params


def step_bound(problem, params, algo):
    """``L + p + Gamma s^2``, the reciprocal of the largest admissible ``c``;
    ``s`` is the largest block norm for the multi-block method and ``||A||``
    otherwise."""
    L = problem.objective.lipschitz_L
    s = max(problem.block_sigmas) if algo == "MultiBlock" else problem.sigma
    p = 0.0 if algo == "ALM" else params.p
    return L + p + params.Gamma * s**2


# -- single run --------------------------------------------------------------------

def _potential_column(problem, params, tol):
    last = [None]

    def potential(state, nxt):
        pv = potential_phi(state, problem, params, tol, warm=last[0])
        if pv.available:
            last[0] = pv
        tol_i = default_inner_tol(problem, state.x) if tol is None else tol
        xh = solve_x_of_yz(nxt.y, state.z, problem, params.penalty, tol_i, x0=nxt.x)
        return pv.value, float(np.linalg.norm(problem.A @ xh.x_star - problem.b))

    return potential


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_experiment(cfg, problem=None, params=None):
    """Run one configured solve and write its artifacts to ``cfg.output_dir``.

    Writes ``trace.csv``, ``summary.json`` and, when any audit other than the
    certificate is enabled, ``audits.json``. ``problem`` and ``params``
    override what the config would build.

    Returns
    -------
    summary : dict
        Also has ``exit_code``: 0, or 4 after a blowup.
    """
    problem = cfg.build_problem() if problem is None else problem
    params = cfg.build_params(problem) if params is None else params
    audits = {k: bool(cfg.audits.get(k, False)) for k in AUDIT_NAMES}
    every = cfg.audit_every or params.record_every
    proximal = cfg.algo != "ALM"
    valid_p = params.p + problem.objective.weak_convexity_gamma > 0

    sampled = []

    def callback(a, b):
        if a.t % every == 0:
            sampled.append((a, b))

    want_pairs = audits["descent"] or audits["error_bounds"]
    potential = None
    if audits["potential"] and proximal and valid_p:
        potential = _potential_column(problem, params, cfg.inner_tol)

    t0 = time.perf_counter()
    res = run(problem, params, cfg.algo, stop=cfg.stop, inner_tol=cfg.inner_tol,
              potential=potential, callback=callback if want_pairs else None)
    wall = time.perf_counter() - t0

    os.makedirs(cfg.output_dir, exist_ok=True)
    write_trace_csv(res.trace, os.path.join(cfg.output_dir, "trace.csv"))

    audit_doc = {}
    if want_pairs or audits["potential"]:
        audit_doc = _audit(sampled, problem, params, cfg, audits, proximal, valid_p)
        _write_json(os.path.join(cfg.output_dir, "audits.json"), audit_doc)

    fin = res.final
    opt_gap, feas = stationarity_residual(fin.x, fin.y, problem)
    if res.trace:
        feas = res.trace[-1].feas
    nonfinite = not (np.all(np.isfinite(fin.x)) and np.all(np.isfinite(fin.y)))
    summary = {
        "name": cfg.name,
        "algo": cfg.algo,
        "status": res.status,
        "message": res.message,
        "iterations": fin.t,
        "final": {"opt_gap": opt_gap, "feas": feas,
                  "f": problem.objective.value(fin.x) if not nonfinite else math.nan},
        "grad_evals": res.grad_evals,
        "wall_time_s": wall,
        "diverged": res.diverged,
        "params": params.to_dict(),
        "validity": res.validity,
        "stop": cfg.stop,
        "problem": {"n": problem.n, "m": problem.m,
                    "gen": cfg.gen if cfg.gen is not None else None},
    }
    if audits["certificate"]:
        summary["certificate"] = (res.best_certificate.to_dict()
                                  if res.best_certificate is not None else None)
        summary["final_certificate"] = (res.certificate.to_dict()
                                        if res.certificate is not None else None)
    if audit_doc:
        summary["audit_violations"] = {k: v.get("n_violations")
                                       for k, v in audit_doc.items()
                                       if isinstance(v, dict)}
    summary["exit_code"] = EXIT_BLOWUP if res.diverged else EXIT_OK
    _write_json(os.path.join(cfg.output_dir, "summary.json"), summary)
    return summary


def _audit(pairs, problem, params, cfg, audits, proximal, valid_p):
    doc = {}
    if audits["descent"] or audits["potential"]:
        want_phi = audits["potential"] and proximal and valid_p
        rep = descent_audit(pairs, problem, params, cfg.inner_tol, potential=want_phi)
        if audits["potential"] and not want_phi:
            doc["potential_skipped"] = "needs a proximal method with p > -gamma"
        doc["descent"] = _report_doc(rep)
    if audits["error_bounds"]:
        if proximal and valid_p:
            doc["error_bounds"] = _report_doc(
                error_bound_audit(pairs, problem, params, cfg.inner_tol))
        else:
            doc["error_bounds_skipped"] = "needs a proximal method with p > -gamma"
    return doc


def _report_doc(rep):
    d = rep.to_dict()
    d["n_violations"] = rep.n_violations
    return d


# -- presets ---------------------------------------------------------------------

@dataclass
class _Setting:
    name: str
    algo: str
    params: dict
    stop: str
    family: str
    n: int
    m: int
    inner_tol: float = None


def _negdef_settings(preset, paper_scale):
    n, m = (500, 100) if paper_scale else (50, 10)
    budget = 2_000_000 if paper_scale else 500_000
    base = dict(Gamma=1000.0, p=5000.0, c_fraction=0.99, max_iter=budget,
                stop_tol=1e-6, record_every=100)
    out = []
    if preset in ("oscillation", "oscillation-prox"):
        algo = "ALM" if preset == "oscillation" else "ProxALM"
        for a in (1000.0, 50.0, 1.0):
            out.append(_Setting(f"alpha-{a:g}", algo, dict(base, alpha=a, beta=1.0),
                                "feasibility", "NegDefQP", n, m))
    else:
        for beta in (1.0, 0.02, 0.01):
            out.append(_Setting(f"beta-{beta:g}", "ProxALM",
                                dict(base, alpha=50.0, beta=beta),
                                "feasibility", "NegDefQP", n, m))
    return out


def admm_compare_params(problem):
    """Parameters of the ADMM comparison: the multi-block method runs with
    ``p = 2 |gamma|``, ``Gamma = 10``, ``alpha = Gamma / 4``, ``beta = 1/2`` and
    ``c`` at 0.99 of its admissible bound; classic ADMM uses the same
    ``Gamma`` and ``alpha``."""
    gamma = problem.objective.weak_convexity_gamma
    prm = SolverParams.default_for(problem, p=2.0 * abs(gamma))
    return prm.replace(c=0.99 / step_bound(problem, prm, "MultiBlock"))


def _admm_settings():
    out = []
    for m in (2, 8):
        for eps in (1e-4, 1e-5):
            tag = f"m{m}-eps{eps:.0e}"
            common = dict(max_iter=200_000, stop_tol=eps, record_every=10)
            out.append(_Setting(f"{tag}/multiblock", "MultiBlock", common, "measure",
                                "TwoBlockQP", 20, m))
            out.append(_Setting(f"{tag}/classic", "ClassicADMM", common, "measure",
                                "TwoBlockQP", 20, m, inner_tol=eps / 10))
    return out


PRESETS = ("oscillation", "oscillation-prox", "beta-sweep", "admm-compare")


def preset_settings(name, paper_scale=False):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
    if name == "admm-compare":
        return _admm_settings()
    return _negdef_settings(name, paper_scale)


def run_preset(name, seed=1, out_dir="out", paper_scale=False, log=None):
    """Run every setting of a preset, each into its own subdirectory.

    Writes ``preset.json`` (one entry per setting) and, for ``admm-compare``,
    ``table.csv`` with the gradient-evaluation counts.

    Returns
    -------
    list of dict
        The per-setting summaries.
    """
    problems = {}
    summaries = []
    for st in preset_settings(name, paper_scale):
        key = (st.family, st.n, st.m)
        if key not in problems:
            problems[key] = generate(GenSpec(st.family, st.n, st.m, seed))
        problem = problems[key]
        gen = {"family": st.family, "n": st.n, "m": st.m, "seed": seed}
        cfg = ExperimentConfig(gen=gen, algo=st.algo, params=st.params, stop=st.stop,
                               inner_tol=st.inner_tol, preset=name, name=st.name,
                               output_dir=os.path.join(out_dir, st.name))
        params = None
        if name == "admm-compare":
            params = admm_compare_params(problem).replace(
                max_iter=st.params["max_iter"], stop_tol=st.params["stop_tol"],
                record_every=st.params["record_every"])
        summary = run_experiment(cfg, problem=problem, params=params)
        summaries.append(summary)
        if log is not None:
            log(f"{name}/{st.name}: {summary['status']} after {summary['iterations']} "
                f"iterations, feas {summary['final']['feas']:.3e}, "
                f"grad_evals {summary['grad_evals']}")
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "preset.json"), {
        "preset": name, "seed": seed, "paper_scale": paper_scale,
        "settings": [{k: s[k] for k in ("name", "algo", "status", "iterations",
                                        "grad_evals", "final", "diverged")}
                     for s in summaries]})
    if name == "admm-compare":
        _write_admm_table(os.path.join(out_dir, "table.csv"), summaries)
    return summaries


def _write_admm_table(path, summaries):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "eps", "algo", "grad_evals", "iterations", "status"])
        for s in summaries:
            w.writerow([s["problem"]["m"], repr(s["params"]["stop_tol"]), s["algo"],
                        s["grad_evals"], s["iterations"], s["status"]])


# -- trace comparison ----------------------------------------------------------------

METRICS = ("feas", "opt_gap", "sum")


@dataclass
class CompareTable:
    """Traces aligned on the union of their recorded iterations.

    ``values[k][i]`` is trace ``k``'s metric at iteration ``t[i]`` (NaN where
    that trace has no row); ``diffs[k]`` is ``values[k] - values[0]``.
    ``first_below[k]`` is the first recorded iteration at which trace ``k``'s
    metric is at most ``threshold`` (None if never).
    """

    paths: list
    metric: str
    t: np.ndarray
    values: list
    diffs: list
    threshold: float
    first_below: list

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        head = ["t"] + [f"{self.metric}[{i}]" for i in range(len(self.paths))]
        head += [f"diff[{i}]" for i in range(1, len(self.paths))]
        w.writerow(head)
        for i, t in enumerate(self.t):
            row = [str(int(t))]
            row += [_fmt(v[i]) for v in self.values]
            row += [_fmt(d[i]) for d in self.diffs[1:]]
            w.writerow(row)


def _fmt(v):
    return "" if math.isnan(v) else repr(float(v))


def _metric(rec, metric, path):
    if metric == "feas":
        return rec.feas
    if rec.opt_gap is None:
        raise ConfigError(f"trace {path} is missing column(s): opt_gap")
    return rec.opt_gap if metric == "opt_gap" else rec.opt_gap + rec.feas


def compare_traces(trace_paths, metric="feas", threshold=1e-6):
    """Align traces by iteration and compare one metric.

    Parameters
    ----------
    trace_paths : list of path
        At least two trace CSV files.
    metric : {"feas", "opt_gap", "sum"}
        ``sum`` is ``opt_gap + feas``; the two gap metrics need the
        ``opt_gap`` column.
    threshold : float
        Level for the iterations-to-threshold summary.

    Returns
    -------
    CompareTable

    Raises
    ------
    ConfigError
        On a schema mismatch, naming the missing column.
    """
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if len(trace_paths) < 2:
        raise ConfigError("compare needs at least two traces")
    series = []
    for path in trace_paths:
        try:
            recs = read_trace_csv(path)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        series.append({r.t: _metric(r, metric, path) for r in recs})
    ts = np.array(sorted(set().union(*series)), dtype=np.int64)
    values = [np.array([s.get(int(t), math.nan) for t in ts]) for s in series]
    diffs = [v - values[0] for v in values]
    first = []
    for s in series:
        hit = [t for t in sorted(s) if s[t] <= threshold]
        first.append(hit[0] if hit else None)
    return CompareTable(list(trace_paths), metric, ts, values, diffs, threshold, first)


# -- command line ------------------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(prog="smoothprox", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run a config or a preset")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment config JSON")
    src.add_argument("--preset", choices=PRESETS)
    sp.add_argument("--seed", type=int, help="instance seed (overrides the config)")
    sp.add_argument("--paper-scale", action="store_true",
                    help="n=500, m=100 instances and a 2e6 iteration budget")
    sp.add_argument("--out", help="output directory (overrides the config)")

    cp = sub.add_parser("compare", help="compare trace CSVs iteration by iteration")
    cp.add_argument("--metric", choices=METRICS, default="feas")
    cp.add_argument("--threshold", type=float, default=1e-6)
    cp.add_argument("--out", help="write the table here instead of stdout")
    cp.add_argument("traces", nargs="+")

    gp = sub.add_parser("gen", help="write a generated instance as problem JSON")
    gp.add_argument("--family", choices=FAMILIES, required=True)
    gp.add_argument("--n", type=int, required=True)
    gp.add_argument("--m", type=int, required=True)
    gp.add_argument("--seed", type=int, required=True)
    gp.add_argument("--out", required=True)
    return ap


def _err(msg):
    print(f"smoothprox: {msg}", file=sys.stderr)


def _solve(args):
    if args.preset:
        seed = 1 if args.seed is None else args.seed
        out = args.out or os.path.join("out", args.preset)
        summaries = run_preset(args.preset, seed, out, args.paper_scale,
                               log=lambda s: print(s))
        return EXIT_BLOWUP if any(s["diverged"] for s in summaries) else EXIT_OK
    if args.paper_scale:
        raise ConfigError("--paper-scale applies to presets only")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        if cfg.gen is None:
            raise ConfigError("--seed needs a config with a 'gen' entry")
        cfg.gen = dict(cfg.gen, seed=args.seed)
    if args.out:
        cfg.output_dir = args.out
    summary = run_experiment(cfg)
    print(f"{summary['name']}: {summary['status']} after {summary['iterations']} "
          f"iterations, opt_gap {summary['final']['opt_gap']:.3e}, "
          f"feas {summary['final']['feas']:.3e}")
    return summary["exit_code"]


def _compare(args):
    table = compare_traces(args.traces, args.metric, args.threshold)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            table.write_csv(fh)
    else:
        table.write_csv(sys.stdout)
    for path, hit in zip(table.paths, table.first_below):
        where = "never" if hit is None else f"t={hit}"
        print(f"{path}: {args.metric} <= {table.threshold:g} first at {where}",
              file=sys.stderr)
    return EXIT_OK


def _gen(args):
    try:
        spec = GenSpec(args.family, args.n, args.m, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    generate(spec).save(args.out)
    return EXIT_OK


def main(argv=None):
    """Entry point; returns the exit code."""
    args = _parser().parse_args(argv)
    handler = {"solve": _solve, "compare": _compare, "gen": _gen}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
