import numpy as np
import pytest

from entroflow.errors import CostOutOfRange, NegativeTransition, NotSimplex
from entroflow.evaluation import evaluate, realizability_solve
from entroflow.features import ActionGrid, StateSpace, bernstein_basis, hat_basis, tabular_basis, trig_basis
from entroflow.mdp import (
    LinearMdpSpec,
    MdpModel,
    build_hat_bandit,
    build_linear_mdp,
    build_random_mdp,
    random_linear_spec,
    validate_model,
)
from entroflow.policy import make_policy

STATES = StateSpace.uniform(5)
UNIT = ActionGrid.midpoint(256)


def bern():
    return bernstein_basis(3, [1.0], [0.0, 0.1, 0.2, 0.3, 0.4], STATES, UNIT)


def test_identical_components_give_constant_transition():
    nu = np.array([0.1, 0.2, 0.3, 0.15, 0.25])
    spec = LinearMdpSpec(np.full(4, 0.1), np.tile(nu, (4, 1)))
    m = build_linear_mdp(spec, bern(), STATES, UNIT, 0.9, 0.2)
    assert np.allclose(m.transition, nu[None, None, :], atol=1e-15)


def test_degenerate_simplex_p1():
    # a single node under a tabular basis gives the constant feature g = 1
    grid = ActionGrid([[0.5]], [1.0])
    b = tabular_basis(StateSpace.single(), grid)
    assert b.dim == 1 and b.is_simplex
    m = build_linear_mdp(LinearMdpSpec([0.3], [[1.0]]), b, StateSpace.single(), grid, 0.5, 1.0)
    assert np.allclose(m.transition, 1.0) and np.allclose(m.cost, 0.3)


def test_random_bernstein_linear_mdp_matches_contraction_oracle(rng):
    b = bern()
    spec = random_linear_spec(b, 5, rng)
    m = build_linear_mdp(spec, b, STATES, UNIT, 0.9, 0.2)
    g = b.table(UNIT)
    oracle = np.zeros_like(m.transition)
    for s in range(5):
        for j in range(UNIT.size):
            for i in range(b.dim):
                oracle[s, j] += g[s, j, i] * spec.psi[i]
    assert np.max(np.abs(m.transition - oracle)) <= 1e-14
    assert np.max(np.abs(m.transition.sum(-1) - 1)) <= 1e-12
    assert np.allclose(m.cost, g @ spec.w)
    assert validate_model(m).passed


def test_cost_rescaled_and_reported():
    spec = LinearMdpSpec(np.full(4, 3.0), np.full((4, 5), 0.2))
    m = build_linear_mdp(spec, bern(), STATES, UNIT, 0.9, 0.2)
    assert m.notes["cost_rescale"] == pytest.approx(3.0)
    assert np.max(np.abs(m.cost)) == pytest.approx(1.0)
    with pytest.raises(CostOutOfRange):
        build_linear_mdp(LinearMdpSpec(np.full(4, 1e7), np.full((4, 5), 0.2)), bern(), STATES, UNIT, 0.9, 0.2)


def test_non_simplex_needs_base():
    b = trig_basis([[1]], states=STATES)
    spec = LinearMdpSpec([0.1, 0.1], np.full((2, 5), 0.2))
    with pytest.raises(NotSimplex):
        build_linear_mdp(spec, b, STATES, UNIT, 0.9, 0.2)


def test_negative_transition_detected():
    b = trig_basis([[1]], states=STATES)
    psi = np.zeros((2, 5))
    psi[0, 0], psi[0, 1] = 1.0, -1.0
    spec = LinearMdpSpec([0.1, 0.1], psi, base=np.full(5, 0.2), cost_offset=np.zeros(5))
    with pytest.raises(NegativeTransition):
        build_linear_mdp(spec, b, STATES, UNIT, 0.9, 0.2)


def test_linear_spec_validation():
    with pytest.raises(ValueError):
        LinearMdpSpec([0.1], [[0.5, 0.6]])
    with pytest.raises(ValueError):
        LinearMdpSpec([0.1, 0.2], [[0.5, 0.5]])
    with pytest.raises(ValueError):
        LinearMdpSpec([0.1], [[0.5, 0.5]], base=np.array([0.5, 0.5]))


@pytest.mark.parametrize("make_basis", [
    lambda: bern(),
    lambda: trig_basis([[1], [2]], [[1.0], [2.0]], STATES),
])
def test_linear_mdp_q_is_realizable(make_basis):
    rng = np.random.default_rng(7)
    b = make_basis()
    grid = UNIT if b.is_simplex else ActionGrid.midpoint(256, 0, 2 * np.pi)
    m = build_linear_mdp(random_linear_spec(b, 5, rng), b, STATES, grid, 0.9, 0.2)
    assert validate_model(m).passed
    for _ in range(10):
        pol = make_policy(m, rng.normal(size=b.dim) * 2)
        fit = realizability_solve(m, pol)
        assert fit.residual_rms <= 1e-9 and fit.unique


def test_hat_bandit_shape():
    m = build_hat_bandit(nodes=128)
    assert m.n_states == 1 and m.n_actions == 128
    assert np.all(m.transition == 1.0) and np.all(m.cost == 0.0)
    assert validate_model(m).passed
    with pytest.raises(ValueError):
        build_hat_bandit(nodes=32)


def test_random_mdp_deterministic_and_stochastic():
    b = hat_basis([0, 0.5, 1.0], STATES)
    m1 = build_random_mdp(5, b, UNIT, 0.9, 0.2, seed=3)
    m2 = build_random_mdp(5, b, UNIT, 0.9, 0.2, seed=3)
    assert np.array_equal(m1.transition, m2.transition) and np.array_equal(m1.cost, m2.cost)
    worst = 0.0
    for seed in range(100):
        m = build_random_mdp(5, b, ActionGrid.midpoint(16), 0.9, 0.2, seed=seed)
        worst = max(worst, np.max(np.abs(m.transition.sum(-1) - 1)))
        assert m.transition.min() > 0 and np.max(np.abs(m.cost)) <= 1
    assert worst <= 1e-12


def test_random_mdp_single_state():
    b = hat_basis([0, 1.0])
    m = build_random_mdp(1, b, UNIT, 0.5, 1.0, seed=0)
    assert np.allclose(m.transition, 1.0)


def test_validate_flags_injected_violations():
    m = build_hat_bandit(nodes=64)
    bad_cost = MdpModel(m.states, m.actions, m.transition, np.full((1, 64), 1.5), 0.5, 1.0, m.rho, m.basis)
    rep = validate_model(bad_cost)
    assert not rep.passed and not rep["cost_range"].passed
    assert rep["cost_range"].worst == pytest.approx(0.5)

    b = bern()
    mm = build_random_mdp(5, b, UNIT, 0.9, 0.2, seed=1)
    T = mm.transition.copy()
    T[2, 10, 3] += 1e-6
    rep = validate_model(MdpModel(mm.states, mm.actions, T, mm.cost, 0.9, 0.2, mm.rho, b))
    assert not rep["stochastic"].passed
    assert rep["stochastic"].worst == pytest.approx(1e-6, rel=1e-6)


def test_json_round_trip():
    rng = np.random.default_rng(0)
    b = bern()
    m = build_linear_mdp(random_linear_spec(b, 5, rng), b, STATES, UNIT, 0.9, 0.2)
    m2 = MdpModel.from_json(m.to_json())
    assert np.array_equal(m.transition, m2.transition) and np.array_equal(m.cost, m2.cost)
    assert np.array_equal(m.features, m2.features)
    assert evaluate(m2, make_policy(m2, np.ones(4))).objective == pytest.approx(
        evaluate(m, make_policy(m, np.ones(4))).objective, abs=1e-14)


def test_shape_validation():
    m = build_hat_bandit(nodes=64)
    with pytest.raises(ValueError):
        MdpModel(m.states, m.actions, np.ones((1, 63, 1)), m.cost, 0.5, 1.0, m.rho, m.basis)
