"""Executable checks of identities and inequalities with measured slack.

Every check returns a :class:`CheckReport`.  Slack is signed so that a
negative value is a violation; a report passes when its worst slack is at
least ``-tolerance``.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, NotRealizable
from .evaluation import evaluate, proximal_policy, soft_optimal
from .gradflow import (
    gradient_lipschitz_constant,
    gradient_realizable_form,
    objective_and_gradient,
    objective_gradient,
    pl_constant,
)
from .numerics import lambda_min, sym_eig
from .policy import (
    fim,
    feature_variance,
    kl_between,
    kl_to_reference,
    l1_distance,
    make_policy,
    score,
    sup_log_density,
    uncentered_cov,
)

DENSITY_CAP = 1e8


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


@dataclass
class CheckReport:
    check_name: str
    instances: int
    worst_violation: float
    passed: bool
    tolerance: float
    details: list = field(default_factory=list)
    skipped: int = 0
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable({
            "check_name": self.check_name,
            "instances": self.instances,
            "worst_violation": self.worst_violation,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "skipped": self.skipped,
            "flags": self.flags,
            "details": self.details,
        })

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _report(name, slacks, tol, details, skipped=0, flags=None):
    worst = float(min(slacks)) if slacks else math.inf
    return CheckReport(name, len(slacks), worst, bool(worst >= -tol), tol, details, skipped, flags or {})


def check_performance_difference(m, pairs, tol=1e-8):
    """V(theta) - V(theta') against the occupancy-weighted advantage form."""
    slacks, details = [], []
    for th, th2 in pairs:
        pa, pb = make_policy(m, th), make_policy(m, th2)
        ea, eb = evaluate(m, pa), evaluate(m, pb)
        lhs = ea.objective - eb.objective
        adv = np.sum((eb.Q + m.tau * pb.log_density) * (pa.probs - pb.probs), axis=-1)
        rhs = float(ea.occupancy @ (adv + m.tau * kl_between(pa, pb))) / (1.0 - m.gamma)
        err = abs(lhs - rhs)
        slacks.append(-err)
        details.append({"lhs": lhs, "rhs": rhs, "abs_error": err})
    return _report("performance_difference", slacks, tol, details)


def check_sandwich(m, soft_opt, thetas, tol=1e-7, bound_tol=1e-9):
    """Gap equals the KL-to-optimum integral; the proximal KL integral bounds it.

    Part (a) has tolerance ``tol`` and part (b) ``bound_tol``.  To keep a single
    pass rule, the equality error enters the worst slack rescaled by
    ``bound_tol / tol``; raw values are in ``details``.
    """
    star = soft_opt.policy
    c = m.tau / (1.0 - m.gamma)
    slacks, details = [], []
    for th in thetas:
        pol = make_policy(m, th)
        ev = evaluate(m, pol)
        gap = ev.objective - soft_opt.objective_star
        eq = c * float(kl_between(pol, star) @ ev.occupancy)
        prox = proximal_policy(m, pol, ev)
        upper = c * float(kl_between(pol, prox) @ soft_opt.occupancy_star)
        err = abs(gap - eq)
        slack_b = upper - gap
        slacks.append(min(-err * bound_tol / tol, slack_b))
        details.append({"gap": gap, "kl_form": eq, "equality_error": err, "upper": upper, "bound_slack": slack_b})
    return _report("sandwich", slacks, bound_tol, details)


def check_pl(m, soft_opt, thetas, R=None, tol=1e-10, variant=None):
    """gap <= C_R(theta) * ||grad||^2 with R a running sup over theta* and the instances."""
    R_run = float(np.max(np.abs(soft_opt.log_density_star)))
    slacks, details, skipped = [], [], 0
    for th in thetas:
        obj, grad, ev = objective_and_gradient(m, th)
        R_run = max(R_run, sup_log_density(ev.policy))
        gap = obj - soft_opt.objective_star
        try:
            pl = pl_constant(m, th, soft_opt, R if R is not None else R_run, variant=variant, ev=ev)
        except DegenerateGeometry:
            skipped += 1
            details.append({"gap": gap, "skipped": "degenerate geometry"})
            continue
        gn2 = float(grad @ grad)
        if gn2 == 0.0:
            rhs = 0.0
        else:
            log_rhs = pl.log_C_R + math.log(gn2)
            rhs = math.exp(log_rhs) if log_rhs < 709.0 else math.inf
        slacks.append(rhs - gap)
        details.append({"gap": gap, "grad_norm_sq": gn2, "log_C_R": pl.log_C_R, "variant": pl.variant})
    return _report("pl", slacks, tol, details, skipped)


def check_kl_logit(m, pairs, W=None, tol=1e-10):
    """KL(pi_theta | pi_theta') <= ||theta - theta'||^2 / (2W) at every state.

    W is measured as the inverse of the largest density of the pair unless
    given.  Simplex bases are also checked with the difference projected off
    the all-ones direction.
    """
    slacks, details, skipped = [], [], 0
    for th, th2 in pairs:
        pa, pb = make_policy(m, th), make_policy(m, th2)
        dens = float(max(np.max(pa.log_density), np.max(pb.log_density)))
        if dens > math.log(DENSITY_CAP):
            skipped += 1
            details.append({"skipped": "density above cap"})
            continue
        w = math.exp(-dens) if W is None else W
        if not w > 0 or dens > -math.log(w) + 1e-12:
            skipped += 1
            details.append({"skipped": "density exceeds 1/W"})
            continue
        kl = kl_between(pa, pb)
        diff = np.asarray(th, dtype=float) - np.asarray(th2, dtype=float)
        rhs = float(diff @ diff) / (2.0 * w)
        rec = {"W": w, "kl_max": float(kl.max()), "rhs": rhs}
        slack = rhs - float(kl.max())
        if m.basis.is_simplex:
            proj = diff - diff.mean()
            rhs_p = float(proj @ proj) / (2.0 * w)
            rec["rhs_projected"] = rhs_p
            slack = min(slack, rhs_p - float(kl.max()))
        slacks.append(slack)
        details.append(rec)
    return _report("kl_logit", slacks, tol, details, skipped)


def interlacing_slack(B, x):
    """Smallest margin in eta_1 >= lam_1 >= eta_2 >= ... >= eta_p >= lam_p."""
    B = np.asarray(B, dtype=float)
    x = np.asarray(x, dtype=float)
    lam = sym_eig(B).eigenvalues
    eta = sym_eig(B + np.outer(x, x)).eigenvalues
    upper = eta - lam
    lower = lam[:-1] - eta[1:]
    return float(min(upper.min(), lower.min() if lower.size else math.inf)), lam, eta


def check_interlacing(samples, policy_samples=(), tol=1e-10):
    """Rank-one update interlacing, plus ||G y_perp|| >= lambda_min(M) ||y_perp||.

    ``policy_samples`` holds ``(policy, s, y)`` triples on simplex bases.
    """
    slacks, details = [], []
    for B, x in samples:
        sl, lam, eta = interlacing_slack(B, x)
        slacks.append(sl)
        details.append({"slack": sl, "lambda": lam, "eta": eta})
    for pol, s, y in policy_samples:
        y = np.asarray(y, dtype=float)
        yp = y - y.mean()
        G, M = fim(pol, s), uncentered_cov(pol, s)
        lhs = float(np.linalg.norm(G @ yp))
        rhs = lambda_min(M) * float(np.linalg.norm(yp))
        slacks.append(lhs - rhs)
        details.append({"state": s, "lhs": lhs, "rhs": rhs})
    return _report("interlacing", slacks, tol, details)


@dataclass
class ProbeTable:
    radii: np.ndarray
    directions: np.ndarray
    kl: np.ndarray
    increasing: list
    decade_growth: list
    plateau: list
    ceiling: float

    def rows(self):
        for i in range(self.kl.shape[0]):
            for k, r in enumerate(self.radii):
                yield i, float(r), float(self.kl[i, k])


def prepare_directions(basis, directions):
    """Unit directions; projected off the ones vector first for simplex bases."""
    out = []
    for u in directions:
        u = np.asarray(u, dtype=float)
        if basis.is_simplex:
            u = u - u.mean()
        nrm = np.linalg.norm(u)
        if nrm == 0:
            raise ValueError("probe direction vanishes after projection")
        out.append(u / nrm)
    return np.array(out)


def radial_probe(m, s, directions, radii, decade_tol=1e-3):
    """KL(pi_{r u}(.|s) | mu) along rays, with growth and plateau summaries.

    A direction is flagged as a plateau when the KL grows by less than
    ``decade_tol`` between the largest radius at or below r_max/10 and r_max,
    and its terminal value sits at least log 2 below the grid ceiling
    -log(max weight), which every direction approaches on a finite grid.
    """
    radii = np.asarray(radii, dtype=float)
    U = prepare_directions(m.basis, directions)
    kl = np.empty((U.shape[0], radii.size))
    for i, u in enumerate(U):
        for k, r in enumerate(radii):
            kl[i, k] = kl_to_reference(make_policy(m, r * u), s)
    ceiling = float(-np.log(np.max(m.actions.weights)))
    r_max = radii.max() if radii.size else 0.0
    lower = np.nonzero(radii <= r_max / 10.0)[0]
    increasing, growth, plateau = [], [], []
    for i in range(U.shape[0]):
        increasing.append(bool(np.all(np.diff(kl[i]) > 0)))
        if lower.size and r_max > 0:
            k0 = lower[np.argmax(radii[lower])]
            gr = float(kl[i, np.argmax(radii)] - kl[i, k0])
            growth.append(gr)
            plateau.append(bool(gr < decade_tol and kl[i, np.argmax(radii)] < ceiling - math.log(2.0)))
        else:
            growth.append(None)
            plateau.append(False)
    return ProbeTable(radii, U, kl, increasing, growth, plateau, ceiling)


def check_radial_probe(m, directions, radii, s=0, tol=1e-10):
    """KL is non-decreasing along every ray; plateau flags are reported."""
    table = radial_probe(m, s, directions, radii)
    slacks, details = [], []
    for i in range(table.kl.shape[0]):
        d = np.diff(table.kl[i])
        slacks.append(float(d.min()) if d.size else 0.0)
        details.append({"direction": table.directions[i], "terminal_kl": float(table.kl[i, -1]),
                        "increasing": table.increasing[i], "decade_growth": table.decade_growth[i],
                        "plateau": table.plateau[i]})
    flags = {"plateau_directions": [i for i, p in enumerate(table.plateau) if p], "ceiling": table.ceiling}
    return _report("radial_probe", slacks, tol, details, flags=flags)


def check_score_bounds(m, thetas, pairs=(), tol=1e-12):
    """||score|| <= 2 everywhere and ||score(theta') - score(theta)|| <= 2 ||theta' - theta||."""
    slacks, details = [], []
    for th in thetas:
        pol = make_policy(m, th)
        worst = max(float(np.max(np.linalg.norm(score(pol, s), axis=-1))) for s in range(m.n_states))
        slacks.append(2.0 - worst)
        details.append({"max_score_norm": worst})
    for th, th2 in pairs:
        pa, pb = make_policy(m, th), make_policy(m, th2)
        # score differences do not depend on the node: g cancels
        lhs = float(np.max(np.linalg.norm(pa.gbar - pb.gbar, axis=-1)))
        rhs = 2.0 * float(np.linalg.norm(np.asarray(th) - np.asarray(th2)))
        slacks.append(rhs - lhs)
        details.append({"smoothness_lhs": lhs, "smoothness_rhs": rhs})
    return _report("score_bounds", slacks, tol, details)


def check_value_bounds(m, thetas, tol=1e-10):
    """|V| <= (1 + tau L)/(1 - gamma) and |Q| <= (1 + gamma tau L)/(1 - gamma), L = sup |log f|."""
    slacks, details = [], []
    for th in thetas:
        pol = make_policy(m, th)
        ev = evaluate(m, pol)
        L = sup_log_density(pol)
        vb = (1.0 + m.tau * L) / (1.0 - m.gamma)
        qb = (1.0 + m.gamma * m.tau * L) / (1.0 - m.gamma)
        v, q = float(np.max(np.abs(ev.V))), float(np.max(np.abs(ev.Q)))
        slacks.append(min(vb - v, qb - q))
        details.append({"V_max": v, "V_bound": vb, "Q_max": q, "Q_bound": qb})
    return _report("value_bounds", slacks, tol, details)


def check_tv_lipschitz(m, pairs, tol=1e-10):
    """Policy and occupancy L1 distances against 2||dtheta|| and 2 gamma ||dtheta|| / (1 - gamma)."""
    slacks, details = [], []
    for th, th2 in pairs:
        pa, pb = make_policy(m, th), make_policy(m, th2)
        dist = float(np.linalg.norm(np.asarray(th) - np.asarray(th2)))
        pol_l1 = float(np.max(l1_distance(pa, pb)))
        occ_l1 = float(np.sum(np.abs(evaluate(m, pa).occupancy - evaluate(m, pb).occupancy)))
        occ_bound = 2.0 * m.gamma * dist / (1.0 - m.gamma)
        slacks.append(min(2.0 * dist - pol_l1, occ_bound - occ_l1))
        details.append({"dtheta": dist, "policy_l1": pol_l1, "occupancy_l1": occ_l1})
    return _report("tv_lipschitz", slacks, tol, details)


def check_occupancy_floor(m, thetas, tol=1e-12):
    """d(s) >= (1 - gamma) rho(s), and d sums to one."""
    slacks, details = [], []
    for th in thetas:
        d = evaluate(m, make_policy(m, th)).occupancy
        sl = min(float(np.min(d - (1.0 - m.gamma) * m.rho)), -abs(float(d.sum()) - 1.0))
        slacks.append(sl)
        details.append({"min_margin": float(np.min(d - (1.0 - m.gamma) * m.rho))})
    return _report("occupancy_floor", slacks, tol, details)


def check_fim_structure(m, thetas, tol=1e-10):
    """FIM is PSD, equals the uncentered moment minus the mean outer product, and kills 1 on simplex bases."""
    slacks, details = [], []
    ones = np.ones(m.p)
    for th in thetas:
        pol = make_policy(m, th)
        for s in range(m.n_states):
            G, M = fim(pol, s), uncentered_cov(pol, s)
            lam = lambda_min(G)
            ident = float(np.max(np.abs(M - np.outer(pol.gbar[s], pol.gbar[s]) - G)))
            sl = min(lam, -ident)
            rec = {"state": s, "lambda_min": lam, "identity_error": ident}
            if m.basis.is_simplex:
                null = float(np.max(np.abs(G @ ones)))
                rec["ones_residual"] = null
                sl = min(sl, -null)
            slacks.append(sl)
            details.append(rec)
    return _report("fim_structure", slacks, tol, details)


def finite_difference_gradient(m, theta, step=1e-5):
    theta = np.asarray(theta, dtype=float)
    out = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        fp = evaluate(m, make_policy(m, theta + e)).objective
        fm = evaluate(m, make_policy(m, theta - e)).objective
        out[i] = (fp - fm) / (2.0 * step)
    return out


def relative_error(a, b, floor=1e-12):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def check_gradient_fd(m, thetas, tol=1e-5, step=1e-5):
    """Exact gradient against central differences; slack is tol minus relative error."""
    slacks, details = [], []
    for th in thetas:
        rel = relative_error(objective_gradient(m, th), finite_difference_gradient(m, th, step))
        slacks.append(tol - rel)
        details.append({"relative_error": rel})
    return _report("gradient_fd", slacks, tol=0.0, details=details)


def check_realizable_form(m, thetas, tol=1e-6):
    """Closed-form gradient through theta(pi) against the exact gradient."""
    slacks, details, skipped = [], [], 0
    for th in thetas:
        try:
            alt = gradient_realizable_form(m, th)
        except NotRealizable as exc:
            skipped += 1
            details.append({"skipped": "not realizable", "residual": exc.residual})
            continue
        rel = relative_error(alt, objective_gradient(m, th))
        slacks.append(tol - rel)
        details.append({"relative_error": rel})
    return _report("realizable_form", slacks, 0.0, details, skipped)


def check_variance_concavity(m, triples, tol=1e-12):
    """Var under a mixture of two policies dominates the mixed variances.

    ``triples`` holds ``(theta_1, theta_2, q, v)`` with mixing weight q and
    test direction v.
    """
    slacks, details = [], []
    for th1, th2, q, v in triples:
        p1, p2 = make_policy(m, th1), make_policy(m, th2)
        for s in range(m.n_states):
            g = m.features[s]
            mix = q * p1.probs[s] + (1.0 - q) * p2.probs[s]
            lhs = feature_variance(mix, g, v)
            rhs = q * feature_variance(p1.probs[s], g, v) + (1.0 - q) * feature_variance(p2.probs[s], g, v)
            slacks.append(lhs - rhs)
            details.append({"state": s, "mixture": lhs, "mixed": rhs})
    return _report("variance_concavity", slacks, tol, details)


def check_gradient_lipschitz(m, pairs, tol=1e-10):
    """||grad(theta) - grad(theta')|| <= C ||theta - theta'|| with C from sup |log f| of the pair."""
    slacks, details = [], []
    for th, th2 in pairs:
        _, ga, ea = objective_and_gradient(m, th)
        _, gb, eb = objective_and_gradient(m, th2)
        R = max(sup_log_density(ea.policy), sup_log_density(eb.policy))
        C = gradient_lipschitz_constant(m.gamma, m.tau, R)
        dist = float(np.linalg.norm(np.asarray(th) - np.asarray(th2)))
        lhs = float(np.linalg.norm(ga - gb))
        slacks.append(C * dist - lhs)
        details.append({"lhs": lhs, "C": C, "dtheta": dist})
    return _report("gradient_lipschitz", slacks, tol, details)


# ---------------------------------------------------------------- suites

DEFAULT_COUNTS = {
    "performance_difference": 50,
    "sandwich": 50,
    "pl": 30,
    "kl_logit": 50,
    "interlacing": 100,
    "radial_probe": 8,
    "score_bounds": 200,
    "value_bounds": 100,
    "tv_lipschitz": 100,
    "occupancy_floor": 50,
    "fim_structure": 20,
    "gradient_fd": 20,
    "realizable_form": 20,
    "variance_concavity": 20,
    "gradient_lipschitz": 50,
}
CHECK_NAMES = tuple(DEFAULT_COUNTS)


def random_theta(rng, p, max_norm=5.0):
    u = rng.normal(size=p)
    return u / np.linalg.norm(u) * rng.uniform(0.0, max_norm)


def random_pair(rng, p, max_norm=5.0):
    """Half the pairs are far apart, half are small perturbations."""
    th = random_theta(rng, p, max_norm)
    if rng.random() < 0.5:
        return th, random_theta(rng, p, max_norm)
    return th, th + rng.normal(size=p) * 10.0 ** rng.uniform(-4, -1)


@dataclass
class Bench:
    """A model with its soft optimum and suite settings."""

    model: object
    soft_opt: object = None
    seed: int = 0
    counts: dict = field(default_factory=dict)
    probe_directions: list = None
    probe_radii: list = None
    max_norm: float = 5.0

    def __post_init__(self):
        if self.soft_opt is None:
            self.soft_opt = soft_optimal(self.model)

    def count(self, name):
        return int(self.counts.get(name, DEFAULT_COUNTS[name]))

    def rng(self, name):
        # independent, reproducible stream per check
        return np.random.default_rng([self.seed, CHECK_NAMES.index(name)])


def _run_one(bench, name, tol):
    m, so, p = bench.model, bench.soft_opt, bench.model.p
    rng, n = bench.rng(name), bench.count(name)
    kw = {} if tol is None else {"tol": tol}
    thetas = lambda: [random_theta(rng, p, bench.max_norm) for _ in range(n)]
    pairs = lambda: [random_pair(rng, p, bench.max_norm) for _ in range(n)]
    if name == "performance_difference":
        return check_performance_difference(m, pairs(), **kw)
    if name == "sandwich":
        th = thetas()
        if so.theta_star is not None:
            th[0] = so.theta_star
        if tol is not None:
            kw["bound_tol"] = tol
        return check_sandwich(m, so, th, **kw)
    if name == "pl":
        return check_pl(m, so, thetas(), **kw)
    if name == "kl_logit":
        return check_kl_logit(m, pairs(), **kw)
    if name == "interlacing":
        samples = []
        for _ in range(n):
            q = int(rng.integers(1, 9))
            A = rng.normal(size=(q, q))
            samples.append((A + A.T, rng.normal(size=q)))
        pol_samples = []
        if m.basis.is_simplex:
            for _ in range(max(1, n // 10)):
                pol = make_policy(m, random_theta(rng, p, bench.max_norm))
                pol_samples.append((pol, int(rng.integers(m.n_states)), rng.normal(size=p)))
        return check_interlacing(samples, pol_samples, **kw)
    if name == "radial_probe":
        dirs = bench.probe_directions
        if dirs is None:
            dirs = [rng.normal(size=p) for _ in range(n)]
        radii = bench.probe_radii if bench.probe_radii is not None else np.linspace(5.0, 50.0, 10)
        return check_radial_probe(m, dirs, radii, **kw)
    if name == "score_bounds":
        return check_score_bounds(m, thetas(), pairs(), **kw)
    if name == "value_bounds":
        return check_value_bounds(m, thetas(), **kw)
    if name == "tv_lipschitz":
        return check_tv_lipschitz(m, pairs(), **kw)
    if name == "occupancy_floor":
        return check_occupancy_floor(m, thetas(), **kw)
    if name == "fim_structure":
        return check_fim_structure(m, thetas(), **kw)
    if name == "gradient_fd":
        return check_gradient_fd(m, thetas(), **kw)
    if name == "realizable_form":
        return check_realizable_form(m, thetas(), **kw)
    if name == "variance_concavity":
        trip = [(*random_pair(rng, p, bench.max_norm), float(rng.uniform()), rng.normal(size=p)) for _ in range(n)]
        return check_variance_concavity(m, trip, **kw)
    if name == "gradient_lipschitz":
        return check_gradient_lipschitz(m, pairs(), **kw)
    raise KeyError(name)


@dataclass
class SuiteReport:
    reports: dict

    @property
    def passed(self):
        return all(r.passed for r in self.reports.values())

    def summary(self):
        return {k: {"passed": r.passed, "instances": r.instances, "worst_violation": r.worst_violation,
                    "skipped": r.skipped} for k, r in self.reports.items()}

    def to_dict(self):
        return _jsonable({"passed": self.passed, "checks": self.summary()})


def resolve_suite(names):
    """Expand ``'all'`` and reject unknown check names."""
    if names is None or names == "all" or list(names) == ["all"]:
        return list(CHECK_NAMES)
    names = list(names)
    unknown = [n for n in names if n not in CHECK_NAMES]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}")
    return names


def run_suite(bench, names="all", tolerance=None):
    """Run the selected checks in a fixed order.  ``tolerance`` overrides every check's own."""
    return SuiteReport({name: _run_one(bench, name, tolerance) for name in resolve_suite(names)})
