"""Exact policy evaluation, soft-optimal planning and the realizability fit."""

from dataclasses import dataclass

import numpy as np

from .errors import NotConverged
from .numerics import log_sum_exp, solve_linear, weighted_lstsq
from .policy import DensityPolicy, kl_to_reference

REALIZABILITY_FLOOR = 1e-6
THETA_STAR_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    V: np.ndarray
    Q: np.ndarray
    occupancy: np.ndarray
    kl_per_state: np.ndarray
    objective: float
    policy: object

    def to_dict(self):
        return {
            "V": self.V.tolist(),
            "Q": self.Q.tolist(),
            "occupancy": self.occupancy.tolist(),
            "kl_per_state": self.kl_per_state.tolist(),
            "objective": self.objective,
        }


def state_kernel(m, policy):
    """P_pi[s, s'] = sum_j pi(a_j|s) T[s, j, s']."""
    return np.einsum("sj,sjk->sk", policy.probs, m.transition)


def regularized_reward(m, policy):
    """r_pi(s) = sum_j pi_j (c + tau log f)."""
    return np.sum(policy.probs * (m.cost + m.tau * policy.log_density), axis=-1)


def evaluate(m, policy):
    """Value, action value and discounted occupancy of ``policy`` by direct solves.

    V solves (I - gamma P_pi) V = r_pi, Q = c + gamma T V, and the occupancy
    solves the adjoint system (I - gamma P_pi^T) d = (1 - gamma) rho.
    """
    n = m.n_states
    P = state_kernel(m, policy)
    A = np.eye(n) - m.gamma * P
    V = solve_linear(A, regularized_reward(m, policy))
    Q = m.cost + m.gamma * (m.transition @ V)
    d = solve_linear(A.T, (1.0 - m.gamma) * m.rho)
    return EvaluationResult(V, Q, d, kl_to_reference(policy), float(m.rho @ V), policy)


def objective_from_occupancy(m, ev):
    """(1 - gamma)^{-1} sum_s d(s) r_pi(s); equals rho . V."""
    return float(ev.occupancy @ regularized_reward(m, ev.policy) / (1.0 - m.gamma))


@dataclass(frozen=True, eq=False)
class SoftOptimum:
    V_star: np.ndarray
    Q_star: np.ndarray
    pi_star: np.ndarray
    log_density_star: np.ndarray
    theta_star: np.ndarray
    theta_residual: float
    occupancy_star: np.ndarray
    objective_star: float
    iterations: int
    final_residual: float
    weights: np.ndarray

    @property
    def policy(self):
        return DensityPolicy(self.log_density_star, self.weights)

    def to_dict(self):
        return {
            "V_star": self.V_star.tolist(),
            "Q_star": self.Q_star.tolist(),
            "pi_star": self.pi_star.tolist(),
            "theta_star": None if self.theta_star is None else self.theta_star.tolist(),
            "theta_residual": self.theta_residual,
            "objective_star": self.objective_star,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
        }


def soft_bellman(m, V):
    """One application of the soft Bellman operator; returns (V_new, Q)."""
    Q = m.cost + m.gamma * (m.transition @ V)
    V_new = -m.tau * np.atleast_1d(log_sum_exp(-Q / m.tau, m.actions.log_weights, axis=-1))
    return V_new, Q


def soft_optimal(m, tol=1e-12, max_iters=100_000):
    """Soft value iteration to the regularized optimum.

    Iterates until the sup-norm change is at most ``tol * (1 - gamma)``.  The
    optimal policy is read off as w * exp(-(Q* - V*) / tau).  A parameter
    theta* is attached when -Q*/tau lies in the feature span (up to per-state
    constants for bases without a constant direction).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    V = np.zeros(m.n_states)
    stop = tol * (1.0 - m.gamma)
    change = np.inf
    it = 0
    while it < max_iters:
        V_new, _ = soft_bellman(m, V)
        it += 1
        change = float(np.max(np.abs(V_new - V)))
        V = V_new
        if change <= stop:
            break
    else:
        raise NotConverged(change, it)
    V, Q = soft_bellman(m, V)
    logf = -(Q - V[:, None]) / m.tau
    # renormalize away the last round-off of the fixed point
    logf = logf - np.atleast_1d(log_sum_exp(logf, m.actions.log_weights, axis=-1))[:, None]
    star = DensityPolicy(logf, m.actions.weights)
    ev = evaluate(m, star)
    fit = _fit_log_policy_target(m, -Q / m.tau, ev.occupancy, star.probs)
    theta = fit.theta if fit.residual_rms <= THETA_STAR_TOL else None
    return SoftOptimum(V, Q, star.probs, logf, theta, fit.residual_rms, ev.occupancy,
                       float(m.rho @ V), it, change, m.actions.weights)


def proximal_policy(m, policy, ev=None):
    """Policy proportional to w * exp(-Q^pi / tau), one state at a time."""
    ev = ev if ev is not None else evaluate(m, policy)
    return DensityPolicy.from_logits(-ev.Q / m.tau, m.actions.weights)


@dataclass(frozen=True)
class RealizabilityFit:
    theta: np.ndarray
    residual_rms: float
    unique: bool
    rank: int
    offsets: np.ndarray

    def __iter__(self):
        return iter((self.theta, self.residual_rms, self.unique))


def _fit_log_policy_target(m, target, occupancy, probs):
    g = m.features
    n, J, p = g.shape
    X = g.reshape(n * J, p)
    with_offsets = not m.basis.is_simplex
    if with_offsets:
        # per-state constants do not change a softmax policy
        X = np.hstack([X, np.repeat(np.eye(n), J, axis=0)])
    weights = (occupancy[:, None] * probs).reshape(-1) + REALIZABILITY_FLOOR
    coef, res, rank = weighted_lstsq(X, target.reshape(-1), weights)
    offsets = coef[p:] if with_offsets else np.zeros(n)
    return RealizabilityFit(coef[:p], res, rank == X.shape[1], rank, offsets)


def realizability_solve(m, policy, ev=None):
    """Least-squares theta(pi) with <theta(pi), g> = -Q^pi / tau.

    Rows are weighted by d(s) pi(a_j|s) plus a floor of 1e-6 on every pair.
    For bases that are not a partition of unity, per-state intercepts join the
    fit.  Unpacks as ``(theta, residual_rms, unique)``; the full result also
    carries the numerical rank and the fitted intercepts.
    """
    ev = ev if ev is not None else evaluate(m, policy)
    return _fit_log_policy_target(m, -ev.Q / m.tau, ev.occupancy, policy.probs)
