"""Entropy-regularized MDPs with log-linear policies on quadrature action grids.

Exact evaluation, the policy-gradient flow and a suite of numerical checks.
"""

from .features import (
    ActionGrid,
    StateSpace,
    bernstein_basis,
    hat_basis,
    tabular_basis,
    trig_basis,
)
from .mdp import MdpModel, LinearMdpSpec, build_hat_bandit, build_linear_mdp, build_random_mdp, validate_model
from .policy import LogLinearPolicy, fim, kl_between, kl_to_reference, make_policy
from .evaluation import evaluate, proximal_policy, realizability_solve, soft_optimal
from .gradflow import (
    convergence_fit,
    gradient_realizable_form,
    integrate_flow,
    objective_gradient,
    pl_constant,
)

__version__ = "0.1.0"
