"""Small dense linear algebra and integration kernel.

Everything here works on plain numpy float64 arrays.  Problem sizes are tiny
(feature dimension p <= 32, a handful of states), so clarity wins over speed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivergedDerivative, EmptyProblem, IllConditioned, InvalidMatrix

MAX_CONDITION = 1e12
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SymmetricSpectrum:
    """Eigenvalues sorted descending; ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def lambda_min(self):
        return float(self.eigenvalues[-1])

    @property
    def lambda_max(self):
        return float(self.eigenvalues[0])

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def sym_eig(M, max_sweeps=64):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    The input is symmetrized as ``(M + M.T) / 2``.  Sweeps visit the upper
    triangle in row-major order, so results are reproducible bit for bit.

    Parameters
    ----------
    M : array_like, shape (p, p)
    max_sweeps : int
        Hard cap on full sweeps; convergence is quadratic so 10 is typical.

    Returns
    -------
    SymmetricSpectrum
    """
    a = np.array(M, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix("matrix has non-finite entries")
    p = a.shape[0]
    a = 0.5 * (a + a.T)
    v = np.eye(p)
    scale = np.linalg.norm(a)
    if p > 1 and scale > 0.0:
        tiny = np.finfo(float).tiny
        for _ in range(max_sweeps):
            off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
            if off <= 1e-16 * scale:
                break
            for i in range(p - 1):
                for j in range(i + 1, p):
                    aij = a[i, j]
                    if abs(aij) <= tiny:
                        continue
                    diff = a[j, j] - a[i, i]
                    if abs(diff) > 1e150 * abs(aij):
                        t = aij / diff
                    else:
                        theta = diff / (2.0 * aij)
                        t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    s = t * c
                    # A <- J^T A J with J the (i, j) plane rotation
                    ai = a[:, i].copy()
                    aj = a[:, j]
                    a[:, i] = c * ai - s * aj
                    a[:, j] = s * ai + c * aj
                    ai = a[i, :].copy()
                    aj = a[j, :]
                    a[i, :] = c * ai - s * aj
                    a[j, :] = s * ai + c * aj
                    a[i, j] = a[j, i] = 0.0
                    vi = v[:, i].copy()
                    vj = v[:, j]
                    v[:, i] = c * vi - s * vj
                    v[:, j] = s * vi + c * vj
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return SymmetricSpectrum(w[order], v[:, order])


def lambda_min(M):
    return sym_eig(M).lambda_min


def solve_linear(A, b):
    """Solve ``A x = b`` by LU, refusing systems with condition number above 1e12."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise InvalidMatrix("non-finite entries in linear system")
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditioned(cond)
    return np.linalg.solve(A, b)


def weighted_lstsq(features, targets, weights):
    """Weighted least squares with the minimum-norm convention.

    Minimizes ``sum_k w_k (features_k . theta - targets_k)^2``.  The numerical
    rank is counted against ``1e-10 * sigma_max`` of the weighted design and
    directions below that threshold are dropped (minimum-norm solution).

    Returns
    -------
    theta : ndarray, shape (p,)
    residual_rms : float
        ``sqrt(sum w r^2 / sum w)`` at the minimizer.
    rank : int
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if X.shape[0] != y.size or y.size != w.size:
        raise ValueError("features, targets and weights must have matching lengths")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if y.size == 0 or not np.any(w > 0):
        raise EmptyProblem("no row carries positive weight")
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    yw = y * sw
    U, sig, Vt = np.linalg.svd(Xw, full_matrices=False)
    if sig.size == 0 or sig[0] == 0.0:
        rank = 0
        theta = np.zeros(X.shape[1])
    else:
        keep = sig > RANK_RTOL * sig[0]
        rank = int(np.count_nonzero(keep))
        coef = (U[:, keep].T @ yw) / sig[keep]
        theta = Vt[keep].T @ coef
    r = X @ theta - y
    residual_rms = float(np.sqrt(np.sum(w * r * r) / np.sum(w)))
    return theta, residual_rms, rank


def log_sum_exp(values, log_weights=None, axis=-1):
    """Stable ``log sum_j exp(log_weights_j + values_j)`` along ``axis``."""
    v = np.asarray(values, dtype=float)
    if log_weights is not None:
        v = v + np.asarray(log_weights, dtype=float)
    if v.size == 0 or v.shape[axis] == 0:
        raise EmptyProblem("log_sum_exp of an empty list")
    m = np.max(v, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    out = np.squeeze(out, axis=axis)
    return float(out) if out.ndim == 0 else out


# Fehlberg 4(5) tableau
_RKF_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_RKF_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_RKF_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_RKF_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


def _checked(f, t, y):
    k = np.asarray(f(t, y), dtype=float)
    if not np.all(np.isfinite(k)):
        raise DivergedDerivative(f"non-finite derivative at t={t}")
    return k


def rk_step(f, t, theta, h, scheme="rk4"):
    """One explicit Runge-Kutta step of ``dtheta/dt = f(t, theta)``.

    ``scheme='rk4'`` is the classical four-stage method and returns
    ``(theta_next, None)``.  ``scheme='rkf45'`` propagates the fourth-order
    Fehlberg solution and returns the max-norm difference to the embedded
    fifth-order solution as the error estimate.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    y = np.asarray(theta, dtype=float)
    if scheme == "rk4":
        k1 = _checked(f, t, y)
        k2 = _checked(f, t + h / 2, y + h / 2 * k1)
        k3 = _checked(f, t + h / 2, y + h / 2 * k2)
        k4 = _checked(f, t + h, y + h * k3)
        return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), None
    if scheme == "rkf45":
        ks = []
        for c, row in zip(_RKF_C, _RKF_A):
            yi = y.copy()
            for aij, kj in zip(row, ks):
                yi = yi + h * aij * kj
            ks.append(_checked(f, t + c * h, yi))
        K = np.array(ks)
        y4 = y + h * (_RKF_B4 @ K)
        y5 = y + h * (_RKF_B5 @ K)
        err = float(np.max(np.abs(y5 - y4))) if y.size else 0.0
        return y4, err
    raise ValueError(f"unknown scheme {scheme!r}")
