"""Sample-quality metrics and target-specific estimators."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky_banded, solve_banded
from scipy.optimize import minimize

from . import rng as rngmod
from .targets import LabeledDataset, PHI4_A, PHI4_BETA, PHI4_DIM, logreg_log_likelihood

__all__ = [
    "random_directions",
    "sliced_w2",
    "sliced_ks",
    "entropic_w2",
    "EntropicResult",
    "gaussian_w2",
    "mode_weight",
    "phi4_mode_weights",
    "predictive_ll",
    "phi4_modes",
    "phi4_laplace_ratio",
    "ENTROPIC_SIZE_CAP",
]

log = logging.getLogger(__name__)

N_PROJ = 128
ENTROPIC_SIZE_CAP = 4096


def _as_samples(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("sample sets must be nonempty")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return A, B


def random_directions(d: int, n_proj: int, seed: int) -> np.ndarray:
    """``n_proj`` uniformly random unit vectors in R^d, shape (n_proj, d)."""
    g = rngmod.stream(seed, rngmod.PROJECTIONS)
    v = g.standard_normal((n_proj, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _w2_1d_sq(a_sorted, b_sorted):
    """Squared 1-D W2 between empirical measures, rows are projections."""
    n, m = a_sorted.shape[1], b_sorted.shape[1]
    if n == m:
        return np.mean((a_sorted - b_sorted) ** 2, axis=1)
    # piecewise-constant quantile functions on the merged breakpoints
    q = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    w = np.diff(np.concatenate([[0.0], q]))
    mid = q - w / 2
    ia = np.minimum((mid * n).astype(int), n - 1)
    ib = np.minimum((mid * m).astype(int), m - 1)
    return ((a_sorted[:, ia] - b_sorted[:, ib]) ** 2) @ w


def sliced_w2(A, B, n_proj: int = N_PROJ, seed: int = 0) -> float:
    """Root of the mean over random directions of the squared 1-D W2 of projections."""
    A, B = _as_samples(A, B)
    dirs = random_directions(A.shape[1], n_proj, seed)
    pa = np.sort(dirs @ A.T, axis=1)
    pb = np.sort(dirs @ B.T, axis=1)
    return float(math.sqrt(max(np.mean(_w2_1d_sq(pa, pb)), 0.0)))


def sliced_ks(A, B, n_proj: int = N_PROJ, seed: int = 0) -> float:
    """Mean over random directions of the Kolmogorov-Smirnov statistic of projections."""
    A, B = _as_samples(A, B)
    dirs = random_directions(A.shape[1], n_proj, seed)
    pa = np.sort(dirs @ A.T, axis=1)
    pb = np.sort(dirs @ B.T, axis=1)
    n, m = pa.shape[1], pb.shape[1]
    stats = np.empty(n_proj)
    for k in range(n_proj):
        pts = np.concatenate([pa[k], pb[k]])
        fa = np.searchsorted(pa[k], pts, side="right") / n
        fb = np.searchsorted(pb[k], pts, side="right") / m
        stats[k] = np.max(np.abs(fa - fb))
    return float(np.mean(stats))


@dataclass(frozen=True)
class EntropicResult:
    value: float
    objective: float
    transport_cost: float
    entropy: float
    residual: float
    iterations: int
    converged: bool


class _SemiDual:
    """Semi-dual of entropic OT in the column potential ``g``.

    ``f`` is the exact soft c-transform of ``g``, so the plan's row marginals are
    exact and the gradient is the column-marginal defect.
    """

    def __init__(self, C, log_a, log_b):
        self.C = C
        self.a = np.exp(log_a)
        self.b = np.exp(log_b)
        self.log_b = log_b
        self.P = np.empty_like(C)
        self.key = None

    def update(self, g, eps):
        key = (eps, g.tobytes())
        if key == self.key:
            return
        P = self.P
        np.subtract(g[None, :], self.C, out=P)
        P /= eps
        P += self.log_b[None, :]
        mx = P.max(axis=1)
        P -= mx[:, None]
        np.exp(P, out=P)
        s = P.sum(axis=1)
        self.f = -eps * (mx + np.log(s))
        P *= (self.a / s)[:, None]
        self.col = P.sum(axis=0)
        self.key = key

    def fun(self, g, eps):
        self.update(g, eps)
        return -(self.b @ g + self.a @ self.f), self.col - self.b

    def hessp(self, g, v, eps):
        self.update(g, eps)
        return (self.col * v - self.P.T @ ((self.P @ v) / self.a)) / eps


def entropic_w2(A, B, eps: float = 0.05, tol: float = 1e-6, max_iter: int = 10_000, return_info: bool = False):
    """Entropy-regularized 2-Wasserstein distance between uniform empirical measures.

    With ``P`` the optimal plan of the regularized problem for the squared
    Euclidean cost ``C``, the objective is ``<C, P> - eps H(P)`` where
    ``H(P) = -sum P log P`` is the discrete entropy of the plan, and the value
    is its square root.  The objective can be negative (for instance when both
    sets coincide and have more than one point); the value is then 0.

    The log-domain semi-dual is maximized by truncated Newton (conjugate
    gradient with exact Hessian-vector products), warm-started along a
    decreasing sequence of regularization levels.  Iteration stops when the
    marginal L1 defect is at most ``tol``; ``max_iter`` caps the Newton
    iterations at the final level.
    """
    A, B = _as_samples(A, B)
    if max(len(A), len(B)) > ENTROPIC_SIZE_CAP:
        raise ValueError(f"entropic_w2 is capped at {ENTROPIC_SIZE_CAP} points per set")
    if not eps > 0:
        raise ValueError("eps must be positive")
    n, m = len(A), len(B)
    C = np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2 * A @ B.T
    np.maximum(C, 0.0, out=C)
    log_a = np.full(n, -math.log(n))
    log_b = np.full(m, -math.log(m))
    sd = _SemiDual(C, log_a, log_b)
    g = np.zeros(m)
    levels = []
    e = float(C.max())
    while e > eps:
        levels.append(e)
        e /= 4
    levels.append(eps)
    iters = 0
    for e in levels:
        final = e == eps
        res = minimize(
            sd.fun, g, args=(e,), jac=True, hessp=sd.hessp, method="trust-ncg",
            options={"maxiter": max_iter if final else 50, "gtol": tol / math.sqrt(m) if final else 1e-5},
        )
        g = res.x
        if final:
            iters = int(res.nit)
    sd.update(g, eps)
    residual = float(np.sum(np.abs(sd.col - sd.b)))
    converged = residual <= tol
    if not converged:
        log.warning("entropic_w2: stopped after %d iterations with marginal residual %.3g", iters, residual)
    P = sd.P
    cost = float(np.sum(P * C))
    with np.errstate(divide="ignore", invalid="ignore"):
        entropy = -float(np.sum(np.where(P > 0, P * np.log(P), 0.0)))
    objective = cost - eps * entropy
    value = math.sqrt(max(objective, 0.0))
    if return_info:
        return EntropicResult(value, objective, cost, entropy, residual, iters, converged)
    return value


def gaussian_w2(m1, gamma1: float, m2, gamma2: float, d: int | None = None) -> float:
    """W2 between N(m1, gamma1^2 I_d) and N(m2, gamma2^2 I_d)."""
    if not (gamma1 > 0 and gamma2 > 0):
        raise ValueError("standard deviations must be positive")
    m1 = np.atleast_1d(np.asarray(m1, dtype=float))
    m2 = np.atleast_1d(np.asarray(m2, dtype=float))
    d = m1.size if d is None else d
    return float(math.sqrt(np.sum((m1 - m2) ** 2) + d * (gamma1 - gamma2) ** 2))


def mode_weight(samples) -> float:
    """Fraction of samples with every coordinate strictly negative."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ValueError("no samples")
    return float(np.mean(np.all(samples < 0, axis=1)))


def phi4_mode_weights(samples) -> tuple[float, float]:
    """``(w_minus, w_plus)``: fractions with the middle site negative / positive."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    mid = samples[:, samples.shape[1] // 2 - 1]
    return float(np.mean(mid < 0)), float(np.mean(mid > 0))


def predictive_ll(samples, test: LabeledDataset) -> float:
    """Mean over samples and test points of the Bernoulli log-likelihood."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] != test.p + 1:
        raise ValueError(f"samples have dimension {samples.shape[1]}, expected {test.p + 1}")
    return float(np.mean(logreg_log_likelihood(samples, test)))


# phi^4 Laplace approximation -----------------------------------------------------

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 200


def _phi4_energy(phi, h, a, beta):
    """``-log pi_h``, its gradient and the tridiagonal Hessian (diag, offdiag)."""
    d = phi.size
    ad = a * d
    pad = np.concatenate([[0.0], phi, [0.0]])
    U = 0.5 * ad * np.sum(np.diff(pad) ** 2) + np.sum((1 - phi**2) ** 2) / (4 * ad) + h * np.sum(phi)
    grad = ad * (2 * phi - pad[:-2] - pad[2:]) - phi * (1 - phi**2) / ad + h
    diag = 2 * ad + (3 * phi**2 - 1) / ad
    off = np.full(d - 1, -ad)
    return beta * U, beta * grad, beta * diag, beta * off


def _banded(diag, off):
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab


def _tridiag_logdet_spd(diag, off) -> float:
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    c = cholesky_banded(ab, lower=False)
    return float(2 * np.sum(np.log(c[1])))


def _newton(phi, h, a, beta):
    for _ in range(NEWTON_MAX_ITER):
        U, grad, diag, off = _phi4_energy(phi, h, a, beta)
        if np.linalg.norm(grad) <= NEWTON_TOL:
            return phi
        # shift until the Hessian is positive definite, then backtrack on the energy
        shift = 0.0
        while True:
            try:
                _tridiag_logdet_spd(diag + shift, off)
                break
            except np.linalg.LinAlgError:
                shift = max(2 * shift, beta * 1e-3)
        step = solve_banded((1, 1), _banded(diag + shift, off), -grad)
        s = 1.0
        while s > 1e-12:
            cand = phi + s * step
            if _phi4_energy(cand, h, a, beta)[0] <= U + 1e-4 * s * grad @ step:
                break
            s /= 2
        phi = cand
    raise ArithmeticError(f"Newton did not converge (gradient norm {np.linalg.norm(grad):.3g})")


def phi4_modes(h: float, d: int = PHI4_DIM, a: float = PHI4_A, beta: float = PHI4_BETA):
    """The two local maxima ``(phi_minus, phi_plus)`` of the phi^4 density."""
    i = np.arange(1, d + 1)
    edge = np.minimum(i, d + 1 - i) / (d + 1)
    profile = np.tanh(edge / (a * math.sqrt(2)))  # kink width ~ a, zero at both ends
    modes = []
    for sign in (-1.0, 1.0):
        phi = _newton(sign * profile, h, a, beta)
        if np.sign(phi[d // 2 - 1]) != sign:
            raise ArithmeticError(f"no local maximum with {'negative' if sign < 0 else 'positive'} centre at h={h}")
        _, _, diag, off = _phi4_energy(phi, h, a, beta)
        try:
            _tridiag_logdet_spd(diag, off)
        except np.linalg.LinAlgError:
            raise ArithmeticError(f"stationary point at h={h} is not a local maximum") from None
        modes.append(phi)
    return modes[0], modes[1]


def phi4_laplace_ratio(h: float, order: int = 0, d: int = PHI4_DIM, a: float = PHI4_A, beta: float = PHI4_BETA) -> float:
    """Laplace estimate of ``w_minus / w_plus`` at order 0 or 2."""
    if order not in (0, 2):
        raise ValueError(f"order must be 0 or 2, got {order}")
    minus, plus = phi4_modes(h, d, a, beta)
    U_m, _, diag_m, off_m = _phi4_energy(minus, h, a, beta)
    U_p, _, diag_p, off_p = _phi4_energy(plus, h, a, beta)
    log_ratio = U_p - U_m
    if order == 2:
        log_ratio += 0.5 * (_tridiag_logdet_spd(diag_p, off_p) - _tridiag_logdet_spd(diag_m, off_m))
    return float(math.exp(log_ratio))
