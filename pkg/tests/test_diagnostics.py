import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entroflow.diagnostics import (
    CHECK_NAMES,
    Bench,
    check_interlacing,
    check_kl_logit,
    check_performance_difference,
    check_radial_probe,
    check_sandwich,
    interlacing_slack,
    prepare_directions,
    radial_probe,
    resolve_suite,
    run_suite,
)
from entroflow.policy import make_policy

HAT_DIR = [-1.0, 1.0, 1.0, -1.0]


def sorted_eigs(A):
    return np.sort(np.linalg.eigvalsh(A))[::-1]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31))
def test_interlacing_against_lapack(p, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(p, p))
    B = A + A.T
    x = rng.normal(size=p)
    slack, lam, eta = interlacing_slack(B, x)
    assert np.allclose(lam, sorted_eigs(B), atol=1e-10)
    assert np.allclose(eta, sorted_eigs(B + np.outer(x, x)), atol=1e-10)
    assert slack >= -1e-10


def test_interlacing_policy_part(bern, rng):
    m = bern.model
    samples = [(make_policy(m, rng.normal(size=4) * 3), int(rng.integers(m.n_states)), rng.normal(size=4))
               for _ in range(10)]
    rep = check_interlacing([], samples)
    assert rep.passed and rep.instances == 10


def test_performance_difference_report(trig, rng):
    pairs = [(rng.normal(size=4), rng.normal(size=4)) for _ in range(10)]
    rep = check_performance_difference(trig.model, pairs)
    assert rep.passed and rep.worst_violation >= -1e-8
    d = rep.details[0]
    assert abs(d["lhs"] - d["rhs"]) == d["abs_error"]


def test_sandwich_at_optimum(bern):
    rep = check_sandwich(bern.model, bern.opt, [bern.opt.theta_star])
    assert rep.passed
    assert abs(rep.details[0]["gap"]) <= 1e-9 and rep.details[0]["upper"] >= -1e-12


def test_kl_logit_skips_high_density():
    from entroflow.features import ActionGrid, StateSpace, tabular_basis
    from entroflow.mdp import build_random_mdp
    grid = ActionGrid([[0.0], [1.0]], [1 - 1e-10, 1e-10])
    m = build_random_mdp(1, tabular_basis(StateSpace.single(), grid), grid, 0.5, 1.0, seed=0)
    # all mass on the light node gives a density near 1e10
    rep = check_kl_logit(m, [(np.array([0.0, 40.0]), np.zeros(2)), (np.array([0.0, 1.0]), np.zeros(2))])
    assert rep.skipped == 1 and rep.instances == 1 and rep.passed


def test_trig_radial_probe_strictly_increasing(trig, rng):
    dirs = [rng.normal(size=4) for _ in range(5)]
    table = radial_probe(trig.model, 0, dirs, np.linspace(5, 50, 10))
    assert all(table.increasing) and not any(table.plateau)
    assert np.allclose(np.linalg.norm(table.directions, axis=1), 1.0)


def test_hat_radial_probe_plateau(hat):
    radii = hat.cfg["diagnostics"]["probe_radii"]
    rep = check_radial_probe(hat.model, [HAT_DIR], radii)
    assert rep.passed and rep.flags["plateau_directions"] == [0]
    assert rep.flags["ceiling"] == pytest.approx(math.log(4096))
    # terminal KL sits on the grid value of the plateau log(J / #plateau nodes)
    assert rep.details[0]["terminal_kl"] == pytest.approx(math.log(4096 / 1366), abs=1e-4)


def test_prepare_directions_projects_for_simplex(hat, trig):
    U = prepare_directions(hat.model.basis, [[1.0, 2.0, 3.0, 4.0]])
    assert abs(U.sum()) <= 1e-12 and np.linalg.norm(U) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        prepare_directions(hat.model.basis, [[1.0, 1.0, 1.0, 1.0]])
    U = prepare_directions(trig.model.basis, [[3.0, 0, 0, 4.0]])
    assert np.allclose(U, [[0.6, 0, 0, 0.8]])


def test_resolve_suite():
    assert resolve_suite("all") == list(CHECK_NAMES)
    assert resolve_suite(["pl", "sandwich"]) == ["pl", "sandwich"]
    with pytest.raises(KeyError):
        resolve_suite(["nope"])


SMALL = {name: 3 for name in CHECK_NAMES}


def test_full_suite_small_counts_all_fixtures(any_fixture):
    d = any_fixture.cfg["diagnostics"]
    bench = Bench(any_fixture.model, any_fixture.opt, seed=d["seed"], counts=SMALL,
                  probe_directions=[list(v) for v in d["probe_directions"]] or None,
                  probe_radii=list(d["probe_radii"]) or None)
    suite = run_suite(bench)
    failed = [k for k, r in suite.reports.items() if not r.passed]
    assert suite.passed, failed
    json.dumps(suite.to_dict())
    for rep in suite.reports.values():
        json.loads(rep.to_json())


def test_suite_deterministic(trig):
    a = run_suite(Bench(trig.model, trig.opt, seed=5, counts=SMALL), ["pl", "tv_lipschitz"])
    b = run_suite(Bench(trig.model, trig.opt, seed=5, counts=SMALL), ["tv_lipschitz", "pl"])
    for name in ("pl", "tv_lipschitz"):
        assert a.reports[name].worst_violation == b.reports[name].worst_violation


def test_tolerance_override_forces_failure(trig):
    bench = Bench(trig.model, trig.opt, seed=1, counts=SMALL)
    rep = run_suite(bench, ["performance_difference"], tolerance=0.0).reports["performance_difference"]
    assert not rep.passed and rep.tolerance == 0.0


def test_non_finite_values_serialize():
    from entroflow.diagnostics import CheckReport
    rep = CheckReport("x", 0, math.inf, False, 1e-10)
    assert json.loads(rep.to_json())["worst_violation"] == "inf"
