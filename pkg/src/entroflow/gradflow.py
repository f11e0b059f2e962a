"""Policy-gradient flow: exact gradients, PL constant, integration and rate fits."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometry,
    DivergedDerivative,
    DivergedFlow,
    InsufficientData,
    NotRealizable,
    StepFailure,
)
from .evaluation import evaluate, realizability_solve, soft_optimal
from .numerics import lambda_min, rk_step
from .policy import fim, make_policy, sup_log_density, uncentered_cov

REALIZABLE_TOL = 1e-6
DEGENERATE_LAMBDA = 1e-14
MIN_STEP = 1e-12
CSV_COLUMNS = ("t", "objective", "gap", "grad_norm", "lambda_fim", "lambda_cov",
               "C_R", "sup_log_density", "ones_dot_theta")


def objective_and_gradient(m, theta):
    """Objective rho . V and its exact gradient at ``theta``.

    The gradient is (1 - gamma)^{-1} sum_s d(s) sum_j pi_j (Q + tau log f) score,
    with score = g - E_pi[g].  Returns ``(objective, grad, evaluation)``.
    """
    pol = make_policy(m, theta)
    ev = evaluate(m, pol)
    adv = ev.Q + m.tau * pol.log_density
    sc = m.features - pol.gbar[:, None, :]
    wts = ev.occupancy[:, None] * pol.probs * adv
    grad = np.einsum("sj,sjp->p", wts, sc) / (1.0 - m.gamma)
    return ev.objective, grad, ev


def objective_gradient(m, theta):
    return objective_and_gradient(m, theta)[1]


def occupancy_weighted(m, mats, d):
    return np.einsum("s,sij->ij", d, mats)


def gradient_realizable_form(m, theta, tol=REALIZABLE_TOL):
    """tau / (1 - gamma) * (sum_s d(s) G(s)) (theta - theta(pi_theta)).

    Raises NotRealizable when the least-squares fit of -Q/tau leaves an rms
    residual above ``tol``.
    """
    pol = make_policy(m, theta)
    ev = evaluate(m, pol)
    fit = realizability_solve(m, pol, ev)
    if fit.residual_rms > tol:
        raise NotRealizable(fit.residual_rms)
    G = occupancy_weighted(m, np.array([fim(pol, s) for s in range(m.n_states)]), ev.occupancy)
    return m.tau / (1.0 - m.gamma) * G @ (pol.theta - fit.theta)


@dataclass(frozen=True)
class PLConstant:
    C_R: float
    log_C_R: float
    lambda_theta: float
    variant: str
    R_hat: float
    integral: float


def default_variant(m):
    return "uncentered" if m.basis.is_simplex else "fim"


def lambda_integral(m, pol, weights, variant):
    """sum_s lambda_min(G(s) or M(s)) * weights(s)."""
    mat = fim if variant == "fim" else uncentered_cov
    return float(sum(lambda_min(mat(pol, s)) * weights[s] for s in range(m.n_states)))


def pl_constant(m, theta, soft_opt, R, variant=None, ev=None):
    """Non-uniform PL constant C_R(theta), evaluated in log space.

    C_R = exp(R_hat) / (2 (1 - gamma) tau) * (max_s d*(s)/rho(s))^2 * lambda_theta,
    R_hat = max(2 (1 + gamma tau R) / ((1 - gamma) tau), R), and lambda_theta is the
    inverse square of the lambda_min integral: FIM weighted by the optimal
    occupancy (``'fim'``) or the second moment weighted by the occupancy at
    theta (``'uncentered'``).  ``C_R`` is ``inf`` when it overflows a float.
    """
    variant = variant or default_variant(m)
    if variant not in ("fim", "uncentered"):
        raise ValueError(f"unknown variant {variant!r}")
    pol = make_policy(m, theta)
    need = max(sup_log_density(pol), float(np.max(np.abs(soft_opt.log_density_star))))
    if R < need * (1 - 1e-12):
        raise ValueError(f"R = {R} does not dominate sup |log density| = {need}")
    if variant == "fim":
        weights = soft_opt.occupancy_star
    else:
        weights = (ev if ev is not None else evaluate(m, pol)).occupancy
    integral = lambda_integral(m, pol, weights, variant)
    if integral <= DEGENERATE_LAMBDA:
        raise DegenerateGeometry(f"lambda_min integral {integral:.3e} is numerically zero")
    g, tau = m.gamma, m.tau
    R_hat = max(2.0 * (1.0 + g * tau * R) / ((1.0 - g) * tau), R)
    ratio = float(np.max(soft_opt.occupancy_star / m.rho))
    log_c = R_hat - math.log(2.0 * (1.0 - g) * tau) + 2.0 * math.log(ratio) - 2.0 * math.log(integral)
    C = math.exp(log_c) if log_c < 709.0 else math.inf
    return PLConstant(C, log_c, integral ** -2, variant, R_hat, integral)


def gradient_lipschitz_constant(gamma, tau, R):
    """Lipschitz modulus of the gradient on the set where sup |log f| <= R."""
    a = gamma * (5.0 + tau * R) / (1.0 - gamma) + 6.0
    b = (1.0 + gamma * tau * R) / (1.0 - gamma) + tau * R
    return a * b / (1.0 - gamma) + 2.0 * tau / (1.0 - gamma)


@dataclass
class FlowRecord:
    t: float
    theta: np.ndarray
    objective: float
    grad_norm: float
    gap: float
    lambda_fim: float
    lambda_cov: float
    C_R: float
    log_C_R: float
    sup_log_density: float
    ones_dot_theta: float
    R: float
    pl_skipped: bool = False

    def row(self):
        return [self.t, self.objective, self.gap, self.grad_norm, self.lambda_fim,
                self.lambda_cov, self.C_R, self.sup_log_density, self.ones_dot_theta,
                *self.theta]


@dataclass
class FlowTrajectory:
    records: list
    config: dict = field(default_factory=dict)
    termination: str = "time_budget"
    steps: int = 0
    rejected: int = 0

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def thetas(self):
        return np.array([r.theta for r in self.records])

    def __len__(self):
        return len(self.records)


def make_record(m, t, theta, soft_opt, R):
    """Diagnostics at one point of the flow, computed from scratch."""
    pol = make_policy(m, theta)
    ev = evaluate(m, pol)
    _, grad, _ = objective_and_gradient(m, theta)
    d_star = soft_opt.occupancy_star
    lam_fim = lambda_integral(m, pol, d_star, "fim")
    lam_cov = lambda_integral(m, pol, d_star, "uncentered")
    sup_log = sup_log_density(pol)
    R = max(R, sup_log)
    try:
        pl = pl_constant(m, theta, soft_opt, R, ev=ev)
        C, logC, skipped = pl.C_R, pl.log_C_R, False
    except DegenerateGeometry:
        C, logC, skipped = math.inf, math.inf, True
    return FlowRecord(
        t=float(t), theta=np.array(theta, dtype=float), objective=ev.objective,
        grad_norm=float(np.linalg.norm(grad)), gap=ev.objective - soft_opt.objective_star,
        lambda_fim=lam_fim, lambda_cov=lam_cov, C_R=C, log_C_R=logC,
        sup_log_density=sup_log, ones_dot_theta=float(np.sum(theta)), R=R, pl_skipped=skipped,
    )


def integrate_flow(m, theta0, t_end, log_every, scheme="rkf45", h=None, tol=1e-9,
                   gap_tol=0.0, soft_opt=None, h0=1e-2, config=None):
    """Integrate d theta/dt = -grad V(theta) from ``theta0`` up to ``t_end``.

    ``scheme='rk4'`` takes fixed steps ``h``; ``'rkf45'`` adapts the step to a
    max-norm local error ``tol`` starting from ``h0``.  Steps are shortened so
    that a record lands exactly on every multiple of ``log_every``; a final
    record is added at termination.  The run stops early once the gap drops to
    ``gap_tol`` at a record.

    Raises
    ------
    StepFailure
        Adaptive step fell below 1e-12; ``.trajectory`` holds the records so far.
    DivergedFlow
        theta or its derivative became non-finite.
    """
    if not t_end > 0 or not log_every > 0:
        raise ValueError("t_end and log_every must be positive")
    if scheme == "rk4":
        if h is None or not h > 0:
            raise ValueError("rk4 needs a positive step h")
    elif scheme == "rkf45":
        if not tol > 0:
            raise ValueError("rkf45 needs a positive tolerance")
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    soft_opt = soft_opt if soft_opt is not None else soft_optimal(m)
    theta = np.array(theta0, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DivergedFlow("initial theta is not finite")
    cfg = dict(config or {}, scheme=scheme, h=h, tol=tol, t_end=t_end, log_every=log_every, gap_tol=gap_tol)
    traj = FlowTrajectory([], cfg)
    R = max(float(np.max(np.abs(soft_opt.log_density_star))), sup_log_density(make_policy(m, theta)))

    def rhs(_t, th):
        return -objective_gradient(m, th)

    t = 0.0
    k_next = 1
    step = h if scheme == "rk4" else h0
    rec = make_record(m, t, theta, soft_opt, R)
    traj.records.append(rec)
    while True:
        if rec.gap <= gap_tol:
            traj.termination = "gap_tol"
            break
        if t >= t_end:
            break
        t_log = min(k_next * log_every, t_end)
        while t < t_log:
            hh = min(step, t_log - t)
            try:
                cand, err = rk_step(rhs, t, theta, hh, scheme)
            except DivergedDerivative as exc:
                traj.termination = "diverged"
                raise DivergedFlow(str(exc), traj) from exc
            if scheme == "rkf45":
                if not np.isfinite(err) or err > tol:
                    traj.rejected += 1
                    factor = 0.1 if not np.isfinite(err) else max(0.1, 0.9 * (tol / err) ** 0.2)
                    step = hh * factor
                    if step < MIN_STEP:
                        traj.termination = "step_failure"
                        traj.records.append(make_record(m, t, theta, soft_opt, R))
                        raise StepFailure(f"step size {step:.3e} underflowed at t={t}", traj)
                    continue
                grow = 4.0 if err == 0.0 else min(4.0, max(0.1, 0.9 * (tol / err) ** 0.2))
                # a step clipped to hit the log time should not shrink the next one
                step = max(step, hh * grow) if hh < step else hh * grow
            if not np.all(np.isfinite(cand)):
                traj.termination = "diverged"
                raise DivergedFlow(f"non-finite theta at t={t + hh}", traj)
            theta = cand
            t = t_log if t_log - (t + hh) <= 1e-12 * max(1.0, t_log) else t + hh
            traj.steps += 1
            R = max(R, sup_log_density(make_policy(m, theta)))
        if t_log == k_next * log_every:
            k_next += 1
        rec = make_record(m, t, theta, soft_opt, R)
        traj.records.append(rec)
    return traj


@dataclass(frozen=True)
class RateFit:
    rate: float
    r_squared: float
    intercept: float
    n_points: int

    def __iter__(self):
        return iter((self.rate, self.r_squared))


def fit_log_linear(t, gap, min_points=10, floor=1e-14):
    """Least-squares line through (t, log gap) over points with gap > floor."""
    t = np.asarray(t, dtype=float)
    gap = np.asarray(gap, dtype=float)
    ok = gap > floor
    if np.count_nonzero(ok) < min_points:
        raise InsufficientData(f"need {min_points} points with gap > {floor}, have {np.count_nonzero(ok)}")
    x, y = t[ok], np.log(gap[ok])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(float(-slope), r2, float(intercept), int(x.size))


def convergence_fit(traj, tail_fraction=0.5):
    """Exponential rate of the gap over the last ``tail_fraction`` of the records."""
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    n = len(traj.records)
    start = n - max(1, int(math.ceil(tail_fraction * n)))
    tail = traj.records[start:]
    return fit_log_linear([r.t for r in tail], [r.gap for r in tail])


def _fmt(x):
    return format(float(x), ".17g")


def trajectory_to_csv(traj, out=None):
    """Write one row per record; returns the CSV text when ``out`` is None."""
    p = len(traj.records[0].theta) if traj.records else 0
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(list(CSV_COLUMNS) + [f"theta_{i}" for i in range(p)])
    for r in traj.records:
        w.writerow([_fmt(v) for v in r.row()])
    return buf.getvalue() if out is None else None
