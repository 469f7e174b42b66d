"""Differentially private network games via truncated-Laplace payoff perturbation.

The package covers the full pipeline: exact truncated-Laplace noise, the
linear-quadratic functional perturbation mechanism, Nash equilibrium solvers
for the original and perturbed games, accuracy bounds, privacy budget planning,
and a numerical differential-privacy auditor, plus a CLI experiment harness.
"""

__version__ = "0.1.0"

from .trunc_laplace import NoiseParams, delta_profile, sample
from .network import Network, ring_lattice, load_edge_list
from .game import LQGame, MonotoneGameOracle
from .llqfp import PerturbationDraw, draw, perturb
from .equilibrium import solve_lq_ne, solve_perturbed_lq_ne
from .privacy import PrivacyBudget, plan, audit_mechanism

__all__ = [
    "__version__",
    "NoiseParams",
    "delta_profile",
    "sample",
    "Network",
    "ring_lattice",
    "load_edge_list",
    "LQGame",
    "MonotoneGameOracle",
    "PerturbationDraw",
    "draw",
    "perturb",
    "solve_lq_ne",
    "solve_perturbed_lq_ne",
    "PrivacyBudget",
    "plan",
    "audit_mechanism",
]
