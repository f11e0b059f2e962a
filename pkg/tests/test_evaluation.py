import numpy as np
import pytest

from entroflow.errors import IllConditioned
from entroflow.evaluation import (
    evaluate,
    objective_from_occupancy,
    proximal_policy,
    realizability_solve,
    soft_optimal,
    state_kernel,
)
from entroflow.features import ActionGrid, StateSpace, bernstein_basis, hat_basis, tabular_basis, trig_basis
from entroflow.mdp import MdpModel, build_hat_bandit, build_linear_mdp, build_random_mdp, random_linear_spec
from entroflow.policy import DensityPolicy, kl_between, make_policy

STATES = StateSpace.uniform(5)
UNIT = ActionGrid.midpoint(128)


def linear_bern(seed=3, gamma=0.9, tau=0.2):
    b = bernstein_basis(3, [1.0], [0.0, 0.1, 0.2, 0.3, 0.4], STATES, UNIT)
    return build_linear_mdp(random_linear_spec(b, 5, np.random.default_rng(seed)), b, STATES, UNIT, gamma, tau)


def series_oracle(m, pol, terms=500):
    """Truncated Neumann series for values and occupancy, one push-forward at a time."""
    P = state_kernel(m, pol)
    r = np.sum(pol.probs * (m.cost + m.tau * pol.log_density), axis=-1)
    V = np.zeros(m.n_states)
    d = np.zeros(m.n_states)
    push_v, push_d = r.copy(), m.rho.copy()
    for k in range(terms):
        V += m.gamma ** k * push_v
        d += (1 - m.gamma) * m.gamma ** k * push_d
        push_v = P @ push_v
        push_d = P.T @ push_d
    return V, d


def test_gamma_zero_is_one_step():
    m = linear_bern(gamma=0.0)
    pol = make_policy(m, np.array([1.0, -2.0, 0.5, 0.0]))
    ev = evaluate(m, pol)
    r = np.sum(pol.probs * (m.cost + m.tau * pol.log_density), axis=-1)
    assert np.allclose(ev.V, r, atol=1e-15)
    assert np.allclose(ev.Q, m.cost)
    assert np.allclose(ev.occupancy, m.rho)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_evaluation_matches_series(seed):
    m = linear_bern(seed)
    rng = np.random.default_rng(seed)
    pol = make_policy(m, rng.normal(size=4) * 2)
    ev = evaluate(m, pol)
    V, d = series_oracle(m, pol)
    assert np.max(np.abs(ev.V - V)) <= 1e-8
    assert np.max(np.abs(ev.occupancy - d)) <= 1e-8
    assert ev.occupancy.sum() == pytest.approx(1.0, abs=1e-12)
    assert ev.objective == pytest.approx(objective_from_occupancy(m, ev), abs=1e-12)


def test_q_and_v_bounds():
    m = linear_bern()
    rng = np.random.default_rng(9)
    for _ in range(10):
        pol = make_policy(m, rng.normal(size=4) * 4)
        ev = evaluate(m, pol)
        kl = np.max(ev.kl_per_state)
        assert np.max(np.abs(ev.Q)) <= (1 + m.gamma * m.tau * kl) / (1 - m.gamma) + 1e-12
        assert np.max(np.abs(ev.V)) <= (1 + m.tau * kl) / (1 - m.gamma) + 1e-12


def test_ill_conditioned_rejected():
    b = hat_basis([0, 1.0], StateSpace.uniform(2))
    grid = ActionGrid.midpoint(4)
    T = np.full((2, 4, 2), 0.5)
    m = MdpModel(StateSpace.uniform(2), grid, T, np.zeros((2, 4)), 1 - 1e-13, 1.0, np.full(2, 0.5), b)
    with pytest.raises(IllConditioned):
        evaluate(m, make_policy(m, np.zeros(2)))


def test_soft_optimal_zero_cost_bandit():
    m = build_hat_bandit(nodes=64)
    so = soft_optimal(m)
    assert np.allclose(so.V_star, 0.0, atol=1e-14)
    assert np.allclose(so.pi_star, m.actions.weights[None, :])
    assert so.theta_star is not None and np.allclose(so.theta_star, so.theta_star.mean())


def test_soft_optimal_gamma_zero_closed_form():
    m = linear_bern(gamma=0.0)
    so = soft_optimal(m)
    logits = -m.cost / m.tau
    expected = -m.tau * np.log(np.sum(m.actions.weights * np.exp(logits), axis=-1))
    assert np.allclose(so.V_star, expected, atol=1e-13)


def test_soft_optimum_fixed_point_and_realizable():
    m = linear_bern()
    so = soft_optimal(m)
    assert so.final_residual <= 1e-12 * (1 - m.gamma)
    assert so.theta_star is not None and so.theta_residual <= 1e-8
    pol = make_policy(m, so.theta_star)
    assert np.max(np.abs(pol.probs - so.pi_star)) <= 1e-8
    ev = evaluate(m, pol)
    assert ev.objective == pytest.approx(so.objective_star, abs=1e-10)
    # no log-linear policy does better
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert evaluate(m, make_policy(m, rng.normal(size=4) * 3)).objective >= so.objective_star - 1e-12


def test_soft_optimum_trig_with_intercepts():
    grid = ActionGrid.midpoint(256, 0, 2 * np.pi)
    b = trig_basis([[1], [2]], [[1.0], [2.0]], STATES)
    m = build_linear_mdp(random_linear_spec(b, 5, np.random.default_rng(5)), b, STATES, grid, 0.9, 0.2)
    so = soft_optimal(m)
    assert so.theta_star is not None
    assert np.max(np.abs(make_policy(m, so.theta_star).probs - so.pi_star)) <= 1e-8


def test_proximal_of_optimum_is_optimum():
    m = linear_bern()
    so = soft_optimal(m)
    prox = proximal_policy(m, so.policy)
    assert np.max(np.abs(prox.probs - so.pi_star)) <= 1e-10


def test_proximal_step_improves():
    m = linear_bern()
    pol = make_policy(m, np.array([2.0, -1.0, 0.0, 3.0]))
    prox = proximal_policy(m, pol)
    assert evaluate(m, prox).objective <= evaluate(m, pol).objective + 1e-12


def test_realizability_linear_tabular_and_hat():
    m = linear_bern()
    fit = realizability_solve(m, make_policy(m, np.array([1.0, 0.0, -1.0, 2.0])))
    assert fit.residual_rms <= 1e-9 and fit.unique
    theta, res, unique = fit
    assert res == fit.residual_rms

    grid = ActionGrid.midpoint(6)
    tb = tabular_basis(STATES, grid)
    mt = build_random_mdp(5, tb, grid, 0.9, 0.2, seed=2)
    fit = realizability_solve(mt, make_policy(mt, np.random.default_rng(1).normal(size=30)))
    assert fit.residual_rms <= 1e-10

    # a random dense MDP with a hat basis is not linear in these features
    hb = hat_basis([0, 0.5, 1.0], STATES)
    mh = build_random_mdp(5, hb, UNIT, 0.9, 0.2, seed=4)
    assert realizability_solve(mh, make_policy(mh, np.zeros(3))).residual_rms > 1e-3


def test_performance_difference_classic_form():
    """J(a) - J(b) = (1-gamma)^{-1} sum_s d_a(s) [sum_j pi_a (Q_b + tau log f_a) - V_b]."""
    m = linear_bern()
    rng = np.random.default_rng(11)
    for _ in range(10):
        a = make_policy(m, rng.normal(size=4) * 3)
        b = make_policy(m, rng.normal(size=4) * 3)
        ea, eb = evaluate(m, a), evaluate(m, b)
        inner = np.sum(a.probs * (eb.Q + m.tau * a.log_density), axis=-1) - eb.V
        assert ea.objective - eb.objective == pytest.approx(ea.occupancy @ inner / (1 - m.gamma), abs=1e-10)


def test_gap_equals_kl_to_optimum_and_proximal_bound():
    m = linear_bern()
    so = soft_optimal(m)
    rng = np.random.default_rng(12)
    c = m.tau / (1 - m.gamma)
    for _ in range(10):
        pol = make_policy(m, rng.normal(size=4) * 3)
        ev = evaluate(m, pol)
        gap = ev.objective - so.objective_star
        assert gap == pytest.approx(c * ev.occupancy @ kl_between(pol, so.policy), abs=1e-10)
        prox = proximal_policy(m, pol, ev)
        assert gap <= c * so.occupancy_star @ kl_between(pol, prox) + 1e-12


def test_occupancy_l1_lipschitz():
    m = linear_bern()
    rng = np.random.default_rng(13)
    for _ in range(20):
        a = make_policy(m, rng.normal(size=4) * 3)
        b = make_policy(m, rng.normal(size=4) * 3)
        da, db = evaluate(m, a).occupancy, evaluate(m, b).occupancy
        tv = np.max(np.sum(np.abs(a.probs - b.probs), axis=-1))
        assert np.sum(np.abs(da - db)) <= m.gamma / (1 - m.gamma) * tv + 1e-12


def test_density_policy_from_logits():
    w = np.full(4, 0.25)
    pol = DensityPolicy.from_logits(np.array([[0.0, 1.0, 2.0, 3.0]]), w)
    assert pol.probs.sum() == pytest.approx(1.0)
    assert np.sum(w * np.exp(pol.log_density)) == pytest.approx(1.0)


def test_optimal_parameter_closed_form():
    """On a simplex linear MDP theta*_i = -(w_i + gamma psi_i . V*) / tau."""
    rng = np.random.default_rng(3)
    b = bernstein_basis(3, [1.0], [0.0, 0.1, 0.2, 0.3, 0.4], STATES, UNIT)
    spec = random_linear_spec(b, 5, rng)
    m = build_linear_mdp(spec, b, STATES, UNIT, 0.9, 0.2)
    so = soft_optimal(m)
    theta = -(spec.w + m.gamma * spec.psi @ so.V_star) / m.tau
    probs = make_policy(m, theta).probs
    assert np.max(0.5 * np.sum(np.abs(probs - so.pi_star), axis=-1)) <= 1e-8
