"""Feature bases g(s, a) for log-linear policies, plus state and action sets.

States are a finite list of embedded points and the action set is represented
by a quadrature grid whose positive weights sum to one (the reference measure).
Every basis is bound to its state set and can be tabulated on an action grid
as an array of shape ``(n_states, n_nodes, p)``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BadGrid, DegenerateDirection, RangeViolation, RedundantMode, ZeroMode

RANGE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class StateSpace:
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=float)
        if emb.ndim == 1:
            emb = emb[:, None]
        if emb.shape[0] == 0:
            raise ValueError("state space must be non-empty")
        if not np.all(np.isfinite(emb)):
            raise ValueError("state embeddings must be finite")
        object.__setattr__(self, "embeddings", emb)

    @property
    def n(self):
        return self.embeddings.shape[0]

    @property
    def dim(self):
        return self.embeddings.shape[1]

    @classmethod
    def single(cls):
        return cls(np.zeros((1, 1)))

    @classmethod
    def uniform(cls, n, low=0.0, high=1.0):
        """``n`` evenly spaced one-dimensional states on ``[low, high]``."""
        return cls(np.linspace(low, high, n)[:, None] if n > 1 else np.array([[low]]))


@dataclass(frozen=True, eq=False)
class ActionGrid:
    """Quadrature nodes (J, d2) with positive weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != w.size or w.size == 0:
            raise ValueError("nodes and weights must be non-empty with equal length")
        if np.any(w <= 0):
            raise ValueError("reference measure must have full support (all weights > 0)")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.weights.size

    @property
    def dim(self):
        return self.nodes.shape[1]

    @cached_property
    def log_weights(self):
        return np.log(self.weights)

    @classmethod
    def midpoint(cls, n, low=0.0, high=1.0):
        """Uniform midpoint rule with ``n`` nodes on the interval ``[low, high]``."""
        x = low + (np.arange(n) + 0.5) * (high - low) / n
        return cls(x[:, None], np.full(n, 1.0 / n))


class FeatureBasis:
    """Common interface: ``table(actions)`` and point evaluation ``basis(s, a)``.

    Subclasses set ``kind``, ``dim``, ``scale``, ``is_simplex`` and
    ``claims_full_affine_span`` and implement ``_raw(s_index, a)`` returning
    unscaled features for action points ``a`` of shape (m, d2).
    """

    kind = "abstract"
    is_simplex = False
    claims_full_affine_span = False

    def __init__(self, states, dim, scale=1.0):
        self.states = states if states is not None else StateSpace.single()
        self.dim = int(dim)
        self.scale = float(scale)

    def _raw(self, s, a):
        raise NotImplementedError

    def __call__(self, s, a):
        a = np.asarray(a, dtype=float).reshape(1, -1)
        return self.scale * self._raw(int(s), a)[0]

    def table(self, actions):
        """Features at every (state, node): array of shape (n_states, J, p)."""
        return np.stack([self.scale * self._raw(s, actions.nodes) for s in range(self.states.n)])

    def descriptor(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(p={self.dim}, n_states={self.states.n})"


def eval_features(basis, s, a):
    """Feature vector g(s, a) for state index ``s`` and action point ``a``."""
    return basis(s, a)


class TrigBasis(FeatureBasis):
    kind = "trig"
    claims_full_affine_span = True

    def __init__(self, frequencies, state_frequencies, states):
        k = len(frequencies)
        super().__init__(states, 2 * k, 1.0 / np.sqrt(k))
        self.frequencies = frequencies
        self.state_frequencies = state_frequencies

    def phase(self, s):
        return self.state_frequencies @ self.states.embeddings[s]

    def _raw(self, s, a):
        arg = a @ self.frequencies.T + self.phase(s)[None, :]
        out = np.empty((a.shape[0], self.dim))
        out[:, 0::2] = np.cos(arg)
        out[:, 1::2] = np.sin(arg)
        return out

    def descriptor(self):
        return {
            "kind": self.kind,
            "frequencies": self.frequencies.tolist(),
            "state_frequencies": self.state_frequencies.tolist(),
        }


def trig_basis(frequencies, state_frequencies=None, states=None):
    """Trigonometric features cos/sin(k.a + l_k.s), scaled so that ||g(s, a)|| = 1.

    ``frequencies`` is a list of non-zero integer action-frequency vectors with
    at most one representative of each {k, -k} pair.  Coordinates are ordered
    ``(cos_1, sin_1, cos_2, sin_2, ...)``.
    """
    K = np.atleast_2d(np.asarray(frequencies, dtype=float))
    if K.shape[0] == 0:
        raise ValueError("need at least one frequency")
    if not np.all(K == np.round(K)):
        raise ValueError("action frequencies must be integers")
    for i, k in enumerate(K):
        if not np.any(k):
            raise ZeroMode(f"frequency {i} is zero")
        for j in range(i):
            if np.array_equal(k, K[j]) or np.array_equal(k, -K[j]):
                raise RedundantMode(f"frequencies {j} and {i} give the same action mode")
    states = states if states is not None else StateSpace.single()
    if state_frequencies is None:
        L = np.zeros((K.shape[0], states.dim))
    else:
        L = np.asarray(state_frequencies, dtype=float)
        if L.ndim == 1:
            L = L[:, None]
        if L.shape != (K.shape[0], states.dim):
            raise ValueError(f"state_frequencies must have shape {(K.shape[0], states.dim)}")
    return TrigBasis(K, L, states)


def log_binomial(k):
    """log C(k, l) for l = 0..k via the log-Pascal recursion."""
    row = np.zeros(1)
    for n in range(1, k + 1):
        nxt = np.zeros(n + 1)
        nxt[1:-1] = np.logaddexp(row[:-1], row[1:])
        row = nxt
    return row


class BernsteinBasis(FeatureBasis):
    kind = "bernstein"
    is_simplex = True

    def __init__(self, degree, direction, offsets, m_h, M_h, states):
        super().__init__(states, degree + 1, 1.0)
        self.degree = degree
        self.direction = direction
        self.offsets = offsets
        self.m_h = m_h
        self.M_h = M_h
        self._logc = log_binomial(degree)

    def h(self, s, a):
        raw = self.offsets[s] + a @ self.direction
        h = (raw - self.m_h) / (self.M_h - self.m_h)
        if np.any(h < -RANGE_TOL) or np.any(h > 1 + RANGE_TOL):
            raise RangeViolation(f"normalized coordinate outside [0, 1]: [{h.min()}, {h.max()}]")
        return np.clip(h, 0.0, 1.0)

    def _raw(self, s, a):
        h = self.h(s, a)[:, None]
        ell = np.arange(self.degree + 1)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = self._logc[None, :] + ell * np.log(h) + (self.degree - ell) * np.log1p(-h)
        # 0 * log 0 terms: the endpoints pick out a single coordinate
        logs = np.where((ell == 0) & (h == 0.0), self._logc[0], logs)
        logs = np.where((ell == self.degree) & (h == 1.0), self._logc[-1], logs)
        return np.exp(logs)

    def descriptor(self):
        return {
            "kind": self.kind,
            "degree": self.degree,
            "direction": self.direction.tolist(),
            "offsets": self.offsets.tolist(),
            "m_h": self.m_h,
            "M_h": self.M_h,
        }


def bernstein_basis(k, u, q, states, actions):
    """Bernstein polynomial features of degree ``k`` in h = normalized (q(s) + u.a).

    ``q`` holds one offset per state.  The normalizing range [m_h, M_h] is taken
    over all states and all action nodes, so h spans [0, 1] on the grid.
    """
    if k < 1:
        raise ValueError("degree must be >= 1")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != actions.dim:
        raise ValueError("direction must match the action dimension")
    if not np.any(u):
        raise DegenerateDirection("direction u must be non-zero")
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != states.n:
        raise ValueError("need one offset per state")
    proj = actions.nodes @ u
    raw = q[:, None] + proj[None, :]
    m_h, M_h = float(raw.min()), float(raw.max())
    if not M_h > m_h:
        raise DegenerateDirection("q(s) + u.a is constant on the grid")
    return BernsteinBasis(int(k), u, q, m_h, M_h, states)


class HatBasis(FeatureBasis):
    kind = "hat"
    is_simplex = True

    def __init__(self, grid, states):
        super().__init__(states, grid.size, 1.0)
        self.grid = grid

    def _raw(self, s, a):
        x = a[:, 0]
        out = np.zeros((x.size, self.dim))
        for i, xi in enumerate(self.grid):
            if i > 0:
                lo = self.grid[i - 1]
                m = (x >= lo) & (x <= xi)
                out[m, i] = (x[m] - lo) / (xi - lo)
            if i < self.dim - 1:
                hi = self.grid[i + 1]
                m = (x >= xi) & (x <= hi)
                out[m, i] = (hi - x[m]) / (hi - xi)
        out[x == self.grid[0], 0] = 1.0
        out[x == self.grid[-1], -1] = 1.0
        return out

    def descriptor(self):
        return {"kind": self.kind, "grid": self.grid.tolist()}


def hat_basis(grid, states=None):
    """Piecewise-linear finite-element hats on a strictly increasing 1-D grid."""
    x = np.asarray(grid, dtype=float).reshape(-1)
    if x.size < 2 or np.any(np.diff(x) <= 0):
        raise BadGrid("hat grid must be strictly increasing with at least two points")
    return HatBasis(x, states if states is not None else StateSpace.single())


class TabularBasis(FeatureBasis):
    """One indicator per (state, node) pair; p = n_states * J."""

    kind = "tabular"
    is_simplex = True

    def __init__(self, states, actions):
        super().__init__(states, states.n * actions.size, 1.0)
        self.actions = actions

    def _raw(self, s, a):
        out = np.zeros((a.shape[0], self.dim))
        J = self.actions.size
        for r, point in enumerate(a):
            d = np.max(np.abs(self.actions.nodes - point[None, :]), axis=1)
            j = int(np.argmin(d))
            if d[j] > 1e-12:
                raise ValueError("tabular features are defined on grid nodes only")
            out[r, s * J + j] = 1.0
        return out

    def table(self, actions):
        if actions is not self.actions and not np.array_equal(actions.nodes, self.actions.nodes):
            return super().table(actions)
        n, J = self.states.n, actions.size
        return np.eye(n * J).reshape(n, J, n * J)

    def descriptor(self):
        return {"kind": self.kind}


def tabular_basis(states, actions):
    return TabularBasis(states, actions)


def basis_from_descriptor(desc, states, actions):
    """Rebuild a basis from ``FeatureBasis.descriptor()`` output."""
    kind = desc["kind"]
    if kind == "trig":
        return trig_basis(desc["frequencies"], desc["state_frequencies"], states)
    if kind == "bernstein":
        basis = BernsteinBasis(
            int(desc["degree"]),
            np.asarray(desc["direction"], dtype=float),
            np.asarray(desc["offsets"], dtype=float),
            float(desc["m_h"]),
            float(desc["M_h"]),
            states,
        )
        return basis
    if kind == "hat":
        return hat_basis(desc["grid"], states)
    if kind == "tabular":
        return tabular_basis(states, actions)
    raise ValueError(f"unknown basis kind {kind!r}")


def probe_argmax_measure(basis, s, u, actions, eps):
    """Reference mass of the eps-super-level set {a : u.g(s, a) > max - eps}."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("probe direction must be a unit vector")
    if not eps > 0:
        raise ValueError("margin must be positive")
    phi = basis.table(actions)[s] @ u
    return float(np.sum(actions.weights[phi > phi.max() - eps]))


def project_out_ones(v):
    """Component of ``v`` orthogonal to the all-ones vector."""
    v = np.asarray(v, dtype=float)
    return v - v.mean() * np.ones_like(v)


@dataclass
class BasisCheck:
    max_norm: float
    simplex_sum_error: float = field(default=0.0)
    simplex_min: float = field(default=0.0)


def sweep_invariants(basis, actions):
    """Largest pointwise norm and, for simplex bases, worst partition-of-unity error."""
    tab = basis.table(actions)
    out = BasisCheck(max_norm=float(np.max(np.linalg.norm(tab, axis=-1))))
    if basis.is_simplex:
        out.simplex_sum_error = float(np.max(np.abs(tab.sum(axis=-1) - 1.0)))
        out.simplex_min = float(tab.min())
    return out
