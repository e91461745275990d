"""Smoothed proximal augmented Lagrangian and multi-block ADMM solvers for
box-constrained, linearly constrained smooth nonconvex problems, with the
diagnostics needed to check their convergence behaviour."""

from .core import (CurvatureConstants, PenaltyConfig, aug_lagrangian, grad_K,
                   project_box, prox_aug_value, spectral_norm, symmetric_eig_bounds)
from .diagnostics import (AuditReport, Certificate, descent_audit,
                          epsilon_certificate, error_bound_audit, kkt_residual,
                          linear_rate_fit, potential_phi, recover_multipliers,
                          solve_proximal, solve_x_of_yz, stationarity_residual,
                          strict_complementarity_check)
from .estimators import ClassicADMM, InexactALM, LinearizedProximalADMM, ProximalALM
from .gen import GenSpec, gen_negdef_qp, gen_two_block_qp, gen_uniform_qp, generate
from .model import (BlockPartition, BoxSet, LinearConstraints, ObjectiveOracle,
                    Problem, QuadraticObjective, make_quadratic_problem,
                    validate_problem)
from .solvers import (IterState, RunResult, SolverParams, TraceRecord,
                      alm_iterate, classic_admm_iterate, multiblock_iterate,
                      proximal_alm_iterate, read_trace_csv, run, write_trace_csv)

__version__ = "0.1.0"

__all__ = [
    "AuditReport", "BlockPartition", "BoxSet", "Certificate", "ClassicADMM",
    "CurvatureConstants", "GenSpec", "InexactALM", "IterState",
    "LinearConstraints", "LinearizedProximalADMM", "ObjectiveOracle",
    "PenaltyConfig", "Problem", "ProximalALM", "QuadraticObjective", "RunResult",
    "SolverParams", "TraceRecord", "alm_iterate", "aug_lagrangian",
    "classic_admm_iterate", "descent_audit", "epsilon_certificate",
    "error_bound_audit", "gen_negdef_qp", "gen_two_block_qp", "gen_uniform_qp",
    "generate", "grad_K", "kkt_residual", "linear_rate_fit",
    "make_quadratic_problem", "multiblock_iterate", "potential_phi",
    "project_box", "prox_aug_value", "proximal_alm_iterate", "read_trace_csv",
    "recover_multipliers", "run", "solve_proximal", "solve_x_of_yz",
    "spectral_norm", "stationarity_residual", "strict_complementarity_check",
    "symmetric_eig_bounds", "validate_problem", "write_trace_csv",
]
