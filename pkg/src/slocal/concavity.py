"""Log-concavity windows of the marginal and posterior of the observation process.

For a target written as a compactly supported law on a ball of radius
``R sqrt(d)`` convolved with ``N(0, tau^2 I)``, the Hessians of

* the observation marginal ``log p_t(y)`` are bounded by ``zeta_p(t) I``, and
* the posterior ``log q_t(x | y)`` are bounded by ``zeta_q(t) I``.

The marginal is strongly log-concave for ``t < t_p`` and the posterior for
``t > t_q``; both hold on ``(t_q, t_p)``, which is non-empty iff
``d R^2 < 2 tau^2``.  For the two-mode mixture ``w N(-a 1, g^2 I) + (1-w) N(a 1, g^2 I)``
the bounds tighten by replacing ``R`` with ``R / (2 max(w, 1 - w))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schedule import ScheduleSpec

__all__ = [
    "A0Params",
    "ConcavityError",
    "zeta_p",
    "zeta_q",
    "t_p_t_q",
    "duality_holds",
    "suggested_t0",
    "gmm_hessians",
    "sech2_half",
]


class ConcavityError(ValueError):
    """Raised when a bound is undefined for the given constants."""


@dataclass(frozen=True)
class A0Params:
    """Decomposition constants of a target.

    Parameters
    ----------
    d : int
    R : float
        Radius factor of the compact part (support radius ``R sqrt(d)``).
    tau : float
        Std of the Gaussian smoothing; 0 for compactly supported targets.
    sigma : float
        Noise scale of the observation process.
    w : float, optional
        Mixture weight; when given, the two-mode refinement ``R / (2 max(w, 1 - w))``
        is used in place of ``R``.
    """

    d: int
    R: float
    tau: float
    sigma: float
    w: float | None = None

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise ConcavityError(f"d must be a positive integer, got {self.d}")
        if not self.R > 0:
            raise ConcavityError(f"R must be positive, got {self.R}")
        if not self.tau >= 0:
            raise ConcavityError(f"tau must be non-negative, got {self.tau}")
        if not self.sigma > 0:
            raise ConcavityError(f"sigma must be positive, got {self.sigma}")
        if self.w is not None and not 0 < self.w < 1:
            raise ConcavityError(f"w must lie in (0, 1), got {self.w}")

    @property
    def R_eff(self) -> float:
        if self.w is None:
            return self.R
        return self.R / (2 * max(self.w, 1 - self.w))

    @property
    def spread(self) -> float:
        """``d R_eff^2``."""
        return self.d * self.R_eff**2


def zeta_p(params: A0Params, spec: ScheduleSpec, t):
    """Upper bound on the Hessian eigenvalues of ``log p_t``."""
    alpha = spec.alpha(t)
    v = alpha**2 * params.tau**2 + params.sigma**2 * np.asarray(t, dtype=float)
    return (alpha**2 * params.spread / v**2 - 1 / v)[()]


def zeta_q(params: A0Params, spec: ScheduleSpec, t):
    """Upper bound on the Hessian eigenvalues of ``log q_t(. | y)``, uniform in y."""
    if params.tau == 0:
        raise ConcavityError("the posterior bound divides by tau; it is undefined for tau = 0")
    g = spec.g(t)
    tau2 = params.tau**2
    return (params.spread / tau2**2 - 1 / tau2 - g**2 / params.sigma**2)[()]


def t_p_t_q(params: A0Params, spec: ScheduleSpec) -> tuple[float, float]:
    """Return ``(t_q, t_p)``.

    ``p_t`` is strongly log-concave on ``(0, t_p)`` and ``q_t`` on ``(t_q, T_gen)``.
    When ``d R^2 <= tau^2`` both hold everywhere and ``(0, T_gen)`` is returned.
    With ``tau = 0`` the posterior bound never becomes negative, so ``t_q = T_gen``.
    """
    excess = params.spread - params.tau**2
    if excess <= 0:
        return 0.0, spec.t_gen
    root = math.sqrt(excess)
    t_p = float(spec.g_inv(params.sigma / root))
    if params.tau == 0:
        return spec.t_gen, t_p
    t_q = float(spec.g_inv(params.sigma * root / params.tau**2))
    return t_q, t_p


def duality_holds(params: A0Params) -> bool:
    """True iff the window ``(t_q, t_p)`` is guaranteed non-empty: ``d R^2 < 2 tau^2``."""
    return params.spread < 2 * params.tau**2


def suggested_t0(params: A0Params, spec: ScheduleSpec) -> float | None:
    """Midpoint of ``(t_q, t_p)``, or None when there is no guaranteed finite window."""
    if not duality_holds(params):
        return None
    t_q, t_p = t_p_t_q(params, spec)
    if not math.isfinite(t_p):
        return None
    return 0.5 * (t_q + t_p)


def sech2_half(z):
    """``2 / (1 + cosh z)`` without overflow for large ``|z|``."""
    e = np.exp(-np.abs(np.asarray(z, dtype=float)))
    return (4 * e / (1 + e) ** 2)[()]


def gmm_hessians(a: float, gamma: float, w: float, spec: ScheduleSpec, sigma: float, t: float, point, kind: str = "p"):
    """Exact Hessians for the mixture ``w N(-a 1, gamma^2 I) + (1 - w) N(a 1, gamma^2 I)``.

    Parameters
    ----------
    point : array_like, shape (d,) or (n, d)
        ``y`` for ``kind="p"`` (marginal ``log p_t(y)``) or ``x`` for
        ``kind="q"`` (posterior ``log q_t(x | y)``, which does not depend on y).
    kind : {"p", "q"}

    Returns
    -------
    ndarray, shape (d, d) or (n, d, d)
    """
    point = np.asarray(point, dtype=float)
    d = point.shape[-1]
    shift = math.log(1 / w - 1)
    s = point.sum(axis=-1)
    if kind == "p":
        alpha = float(spec.alpha(t))
        v = alpha**2 * gamma**2 + sigma**2 * t
        z = 2 * alpha * a * s / v + shift
        rank1 = alpha**2 * a**2 / v**2 * sech2_half(z)
        diag = -1 / v
    elif kind == "q":
        g = float(spec.g(t))
        z = 2 * a * s / gamma**2 + shift
        rank1 = a**2 / gamma**4 * sech2_half(z)
        diag = -1 / gamma**2 - g**2 / sigma**2
    else:
        raise ValueError(f"kind must be 'p' or 'q', got {kind!r}")
    rank1 = np.asarray(rank1)
    return rank1[..., None, None] * np.ones((d, d)) + diag * np.eye(d)
