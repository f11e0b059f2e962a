"""Finite entropy-regularized MDP container and constructors."""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CostOutOfRange, NegativeTransition, NotSimplex
from .features import ActionGrid, StateSpace, basis_from_descriptor, hat_basis

STOCHASTIC_TOL = 1e-12
RANDOM_FLOOR = 1e-12
MAX_COST_RESCALE = 1e6


@dataclass(frozen=True, eq=False)
class MdpModel:
    """States x quadrature actions, with T[s, j, s'] transitions and c[s, j] costs.

    ``notes`` carries construction metadata (cost rescale factor, the linear
    structure that generated the model, seeds).
    """

    states: StateSpace
    actions: ActionGrid
    transition: np.ndarray
    cost: np.ndarray
    gamma: float
    tau: float
    rho: np.ndarray
    basis: object
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("transition", "cost", "rho"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "tau", float(self.tau))
        n, J = self.states.n, self.actions.size
        if self.transition.shape != (n, J, n):
            raise ValueError(f"transition must have shape {(n, J, n)}, got {self.transition.shape}")
        if self.cost.shape != (n, J):
            raise ValueError(f"cost must have shape {(n, J)}, got {self.cost.shape}")
        if self.rho.shape != (n,):
            raise ValueError(f"rho must have shape {(n,)}")

    @property
    def n_states(self):
        return self.states.n

    @property
    def n_actions(self):
        return self.actions.size

    @property
    def p(self):
        return self.basis.dim

    @cached_property
    def features(self):
        """Feature table g[s, j, :] on the action grid."""
        return self.basis.table(self.actions)

    def to_dict(self):
        return {
            "states": self.states.embeddings.tolist(),
            "nodes": self.actions.nodes.tolist(),
            "weights": self.actions.weights.tolist(),
            "T": self.transition.tolist(),
            "c": self.cost.tolist(),
            "gamma": self.gamma,
            "tau": self.tau,
            "rho": self.rho.tolist(),
            "basis": self.basis.descriptor(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        states = StateSpace(np.asarray(d["states"], dtype=float))
        actions = ActionGrid(np.asarray(d["nodes"], dtype=float), np.asarray(d["weights"], dtype=float))
        basis = basis_from_descriptor(d["basis"], states, actions)
        return cls(states, actions, d["T"], d["c"], d["gamma"], d["tau"], d["rho"], basis)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class LinearMdpSpec:
    """Linear structure c = c0(s) + <w, g>, T = base(s) + sum_i g_i psi_i.

    For simplex bases ``base`` and ``cost_offset`` stay ``None`` and each
    ``psi[i]`` is a probability vector.  Bases without a constant direction
    (e.g. trigonometric) need a per-state ``base`` distribution and zero-mass
    signed ``psi`` rows; Q is then linear in g up to a per-state constant,
    which leaves the policy and its gradient unchanged.
    """

    w: np.ndarray
    psi: np.ndarray
    base: np.ndarray = None
    cost_offset: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(-1))
        object.__setattr__(self, "psi", np.atleast_2d(np.asarray(self.psi, dtype=float)))
        if self.base is not None:
            object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        if self.cost_offset is not None:
            object.__setattr__(self, "cost_offset", np.asarray(self.cost_offset, dtype=float))
        if self.psi.shape[0] != self.w.size:
            raise ValueError("need one psi row per feature")
        if self.base is None:
            if np.any(self.psi < 0) or np.any(np.abs(self.psi.sum(axis=1) - 1) > STOCHASTIC_TOL):
                raise ValueError("psi rows must be probability distributions")
        else:
            if np.any(np.abs(self.psi.sum(axis=1)) > STOCHASTIC_TOL):
                raise ValueError("with a base distribution, psi rows must have zero total mass")


def build_linear_mdp(spec, basis, states, actions, gamma, tau, rho=None):
    """Model with c = <w, g> and T[s, j] = sum_i g_i(s, a_j) psi_i.

    Costs are rescaled by their observed maximum when it exceeds one; the
    factor is stored in ``model.notes['cost_rescale']``.
    """
    if spec.base is None and not basis.is_simplex:
        raise NotSimplex(f"{basis.kind} features need a base distribution for a stochastic T")
    g = basis.table(actions)
    n = states.n
    if spec.psi.shape[1] != n:
        raise ValueError("psi rows must be distributions over the states")
    T = np.einsum("sji,ik->sjk", g, spec.psi)
    c = g @ spec.w
    if spec.base is not None:
        base = spec.base if spec.base.ndim == 2 else np.tile(spec.base, (n, 1))
        T = T + base[:, None, :]
        if np.any(T < -STOCHASTIC_TOL):
            raise NegativeTransition(f"transition has negative mass {T.min():.3e}")
        T = np.clip(T, 0.0, None)
    if spec.cost_offset is not None:
        c = c + np.asarray(spec.cost_offset, dtype=float).reshape(n, 1)
    cmax = float(np.max(np.abs(c)))
    factor = 1.0
    if cmax > 1.0:
        factor = cmax
        if factor > MAX_COST_RESCALE:
            raise CostOutOfRange(f"cost magnitude {cmax:.3e} beyond rescale cap")
        c = c / factor
        spec = LinearMdpSpec(spec.w / factor, spec.psi, spec.base,
                             None if spec.cost_offset is None else spec.cost_offset / factor)
    rho = np.full(n, 1.0 / n) if rho is None else np.asarray(rho, dtype=float)
    return MdpModel(states, actions, T, c, gamma, tau, rho, basis,
                    notes={"cost_rescale": factor, "linear_spec": spec})


def random_linear_spec(basis, n_states, rng, cost_scale=0.5, mix=0.5):
    """Random linear structure compatible with ``basis``.

    Simplex bases get Dirichlet-like psi rows.  Other bases get a per-state base
    distribution plus zero-mass perturbations small enough to keep T >= 0
    (uses ||g|| <= 1).
    """
    p = basis.dim
    w = rng.normal(size=p)
    w *= cost_scale / max(np.linalg.norm(w), 1e-300)
    if basis.is_simplex:
        psi = _random_distributions(rng, p, n_states)
        return LinearMdpSpec(w, psi)
    base = _random_distributions(rng, n_states, n_states)
    base = 0.5 * base + 0.5 / n_states
    raw = rng.normal(size=(p, n_states))
    raw -= raw.mean(axis=1, keepdims=True)
    col = np.max(np.linalg.norm(raw, axis=0))
    psi = raw * (mix * base.min() / col) if col > 0 else raw
    # |c| <= |offset| + ||w|| ||g|| <= 1 as long as cost_scale <= 0.5
    offset = rng.uniform(-cost_scale, cost_scale, size=n_states)
    return LinearMdpSpec(w, psi, base, offset)


def _random_distributions(rng, rows, cols):
    x = np.exp(rng.normal(size=(rows, cols)))
    x = np.maximum(x / x.sum(axis=1, keepdims=True), RANDOM_FLOOR)
    return x / x.sum(axis=1, keepdims=True)


def build_hat_bandit(grid=(0.0, 1 / 3, 2 / 3, 1.0), nodes=4096, gamma=0.5, tau=1.0):
    """Single-state, zero-cost bandit on [0, 1] with hat features and a self-loop."""
    if nodes < 64:
        raise ValueError("hat bandit needs at least 64 quadrature nodes")
    states = StateSpace.single()
    actions = ActionGrid.midpoint(nodes, 0.0, 1.0)
    basis = hat_basis(grid, states)
    T = np.ones((1, nodes, 1))
    c = np.zeros((1, nodes))
    return MdpModel(states, actions, T, c, gamma, tau, np.ones(1), basis, notes={"kind": "hat-bandit"})


def build_random_mdp(n_states, basis, actions, gamma, tau, seed, states=None):
    """Random dense model: softmax-normalized Gaussian transitions, uniform rho."""
    rng = np.random.default_rng(seed)
    states = states if states is not None else basis.states
    if states.n != n_states:
        raise ValueError("basis state space does not match n_states")
    J = actions.size
    T = np.exp(rng.normal(size=(n_states, J, n_states)))
    T /= T.sum(axis=-1, keepdims=True)
    T = np.maximum(T, RANDOM_FLOOR)
    T /= T.sum(axis=-1, keepdims=True)
    c = np.clip(rng.normal(scale=0.5, size=(n_states, J)), -1.0, 1.0)
    rho = np.full(n_states, 1.0 / n_states)
    return MdpModel(states, actions, T, c, gamma, tau, rho, basis, notes={"seed": seed, "kind": "random"})


@dataclass
class InvariantResult:
    passed: bool
    worst: float


@dataclass
class ValidationReport:
    results: dict

    @property
    def passed(self):
        return all(r.passed for r in self.results.values())

    def failures(self):
        return {k: v for k, v in self.results.items() if not v.passed}

    def __getitem__(self, key):
        return self.results[key]


def validate_model(m):
    """Check every MdpModel invariant and report the worst violation of each."""
    res = {}
    T = m.transition
    row_err = float(np.max(np.abs(T.sum(axis=-1) - 1.0)))
    neg = float(max(0.0, -T.min()))
    res["stochastic"] = InvariantResult(row_err <= STOCHASTIC_TOL and neg == 0.0, max(row_err, neg))
    cexcess = float(max(0.0, np.max(np.abs(m.cost)) - 1.0))
    res["cost_range"] = InvariantResult(cexcess == 0.0, cexcess)
    res["gamma"] = InvariantResult(0.0 <= m.gamma < 1.0, float(max(0.0, m.gamma - 1.0 + 1e-300, -m.gamma)))
    res["tau"] = InvariantResult(m.tau > 0.0, float(max(0.0, -m.tau)))
    rho_sum = float(abs(m.rho.sum() - 1.0))
    res["rho"] = InvariantResult(rho_sum <= STOCHASTIC_TOL and m.rho.min() > 0, max(rho_sum, float(max(0.0, -m.rho.min()))))
    w = m.actions.weights
    res["weights"] = InvariantResult(abs(w.sum() - 1) <= 1e-12 and w.min() > 0, float(abs(w.sum() - 1)))
    g = m.features
    norm_excess = float(max(0.0, np.max(np.linalg.norm(g, axis=-1)) - 1.0))
    res["feature_norm"] = InvariantResult(norm_excess <= 1e-12, norm_excess)
    if m.basis.is_simplex:
        err = float(max(np.max(np.abs(g.sum(axis=-1) - 1.0)), max(0.0, -g.min())))
        res["simplex"] = InvariantResult(err <= 1e-12, err)
    return ValidationReport(res)
