"""Log-linear softmax policies on a quadrature action grid.

A policy is stored through its log-density against the reference weights,
``log f[s, j]``, so that ``pi[s, j] = w_j * exp(log f[s, j])``.  All arrays
are per state x node; nothing is sampled.
"""

import numpy as np

from .numerics import log_sum_exp

KL_FLOOR = 1e-12


class DensityPolicy:
    """Policy given directly by a log-density table of shape (n_states, J)."""

    def __init__(self, log_density, weights):
        self.log_density = np.asarray(log_density, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.probs = self.weights[None, :] * np.exp(self.log_density)

    @property
    def n_states(self):
        return self.log_density.shape[0]

    @classmethod
    def from_logits(cls, logits, weights):
        """Normalize ``w * exp(logits)`` per state."""
        logits = np.asarray(logits, dtype=float)
        logz = log_sum_exp(logits, np.log(weights), axis=-1)
        return cls(logits - np.atleast_1d(logz)[:, None], weights)


class LogLinearPolicy(DensityPolicy):
    """pi_theta(a_j | s) proportional to w_j exp(theta . g(s, a_j)).

    Parameters
    ----------
    theta : array_like, shape (p,)
    features : ndarray, shape (n_states, J, p)
    weights : ndarray, shape (J,)
        Reference quadrature weights.

    All caches (logits, log-normalizers, densities, feature means) are built
    eagerly in the constructor; a policy never changes after creation.
    """

    def __init__(self, theta, features, weights):
        self.theta = np.array(theta, dtype=float).reshape(-1)
        self.features = features
        if features.shape[-1] != self.theta.size:
            raise ValueError(f"theta has length {self.theta.size}, features have p={features.shape[-1]}")
        self.logits = features @ self.theta
        self.logZ = np.atleast_1d(log_sum_exp(self.logits, np.log(weights), axis=-1))
        super().__init__(self.logits - self.logZ[:, None], weights)
        self.gbar = np.einsum("sj,sjp->sp", self.probs, features)


def make_policy(model, theta):
    return LogLinearPolicy(theta, model.features, model.actions.weights)


def log_density(policy, s):
    """log(d pi / d mu) at every node for state ``s``."""
    return policy.log_density[s]


def score(policy, s, j=None):
    """Gradient of the log-density in theta: g(s, a_j) - E_pi[g(s, .)].

    Returns the (J, p) table for all nodes when ``j`` is None.
    """
    sc = policy.features[s] - policy.gbar[s][None, :]
    return sc if j is None else sc[j]


def fim(policy, s):
    """Fisher information sum_j pi_j score_j score_j^T at state ``s``."""
    sc = score(policy, s)
    G = (sc * policy.probs[s][:, None]).T @ sc
    return 0.5 * (G + G.T)


def uncentered_cov(policy, s):
    """Second moment sum_j pi_j g_j g_j^T at state ``s``."""
    g = policy.features[s]
    M = (g * policy.probs[s][:, None]).T @ g
    return 0.5 * (M + M.T)


def _clamp_kl(kl):
    kl = np.asarray(kl, dtype=float)
    return np.where((kl < 0) & (kl >= -KL_FLOOR), 0.0, kl)


def kl_to_reference(policy, s=None):
    """KL(pi(.|s) | mu); a vector over states when ``s`` is None."""
    kl = _clamp_kl(np.sum(policy.probs * policy.log_density, axis=-1))
    return kl if s is None else float(kl[s])


def kl_between(policy_a, policy_b, s=None):
    """KL(pi_a(.|s) | pi_b(.|s)) computed from the two log-densities."""
    diff = policy_a.log_density - policy_b.log_density
    kl = _clamp_kl(np.sum(policy_a.probs * diff, axis=-1))
    return kl if s is None else float(kl[s])


def l1_distance(policy_a, policy_b):
    """Per-state sum_j |pi_a - pi_b| (twice the total-variation distance)."""
    return np.sum(np.abs(policy_a.probs - policy_b.probs), axis=-1)


def sup_log_density(policy):
    return float(np.max(np.abs(policy.log_density)))


def theta_perp_norm(theta):
    """Norm of theta after removing its component along the all-ones vector."""
    theta = np.asarray(theta, dtype=float)
    return float(np.linalg.norm(theta - theta.mean()))


def feature_variance(probs, features, v):
    """Variance of v . g under the node distribution ``probs``.

    ``features`` is the (J, p) table at one state; ``probs`` need not come from
    a log-linear policy (mixtures are allowed).
    """
    x = np.asarray(features) @ np.asarray(v, dtype=float)
    m = probs @ x
    return float(probs @ (x - m) ** 2)
