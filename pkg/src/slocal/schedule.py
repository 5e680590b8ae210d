"""Denoising schedules, log-SNR maps and SNR-adapted time grids.

Two schedule families are supported:

* ``geom-inf:a1``  g(t) = t^(a1/2), defined on (0, inf)
* ``geom:a1,a2``   g(t) = t^(a1/2) (1 - t)^(-a2/2), defined on (0, 1)

with ``alpha(t) = sqrt(t) g(t)`` the signal coefficient of the observation
process ``Y_t = alpha(t) X + sigma W_t`` and ``log SNR(t) = 2 log g(t)``.
``standard`` is an alias for ``geom-inf:1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

__all__ = [
    "ScheduleError",
    "ScheduleSpec",
    "TimeGrid",
    "parse_schedule",
    "snr_grid",
    "uniform_grid",
    "sigma_from_a0",
]

_BISECT_LO = 1e-15
_BISECT_MAX_ITER = 200
_BISECT_TOL = 1e-12


class ScheduleError(ValueError):
    """Raised on out-of-domain times or inadmissible schedule parameters."""


@dataclass(frozen=True)
class ScheduleSpec:
    """A denoising schedule.

    Parameters
    ----------
    kind : {"geom-inf", "geom"}
    alpha1 : float
        Small-time exponent, must be >= 1.
    alpha2 : float, optional
        Blow-up exponent near t = 1, required (> 0) for ``geom``.
    """

    kind: str
    alpha1: float
    alpha2: float | None = None

    def __post_init__(self):
        if self.kind not in ("geom-inf", "geom"):
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")
        if not self.alpha1 >= 1:
            raise ScheduleError(f"alpha1 must be >= 1, got {self.alpha1}")
        if self.kind == "geom":
            if self.alpha2 is None or not self.alpha2 > 0:
                raise ScheduleError(f"geom schedule needs alpha2 > 0, got {self.alpha2}")
        elif self.alpha2 is not None:
            raise ScheduleError("geom-inf schedule takes no alpha2")

    @classmethod
    def standard(cls) -> "ScheduleSpec":
        return cls("geom-inf", 1.0)

    @property
    def t_gen(self) -> float:
        return math.inf if self.kind == "geom-inf" else 1.0

    @property
    def name(self) -> str:
        if self.kind == "geom-inf":
            return "standard" if self.alpha1 == 1 else f"geom-inf:{_fmt(self.alpha1)}"
        return f"geom:{_fmt(self.alpha1)},{_fmt(self.alpha2)}"

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~(t > 0)) or np.any(~(t < self.t_gen)):
            raise ScheduleError(f"t must lie in (0, {self.t_gen}), got {t}")
        return t

    def g(self, t):
        t = self._check(t)
        return np.exp(0.5 * self.log_snr(t))[()]

    def log_snr(self, t):
        t = self._check(t)
        out = self.alpha1 * np.log(t)
        if self.kind == "geom":
            out = out - self.alpha2 * np.log1p(-t)
        return out[()]

    def alpha(self, t):
        t = self._check(t)
        return (np.sqrt(t) * self.g(t))[()]

    def alpha_and_dot(self, t):
        """Return ``(alpha(t), d alpha / dt)`` from the closed forms."""
        t = self._check(t)
        a1 = self.alpha1
        if self.kind == "geom-inf":
            alpha = t ** ((a1 + 1) / 2)
            dot = 0.5 * (a1 + 1) * t ** ((a1 - 1) / 2)
        else:
            a2 = self.alpha2
            alpha = t ** ((a1 + 1) / 2) * (1 - t) ** (-a2 / 2)
            # d/dt log alpha = (a1+1)/(2t) + a2/(2(1-t)); factor t out to stay finite at t -> 0
            dot = (
                0.5 * (a1 + 1) * t ** ((a1 - 1) / 2) * (1 - t) ** (-a2 / 2)
                + 0.5 * a2 * alpha / (1 - t)
            )
        return alpha[()], dot[()]

    def t_of_log_snr(self, eta):
        """Invert ``log_snr``: the unique t with ``log_snr(t) == eta``."""
        eta_arr = np.asarray(eta, dtype=float)
        if self.kind == "geom-inf":
            return np.exp(eta_arr / self.alpha1)[()]
        if self.alpha1 == self.alpha2:
            return expit(eta_arr / self.alpha1)[()]
        return np.vectorize(self._bisect, otypes=[float])(eta_arr)[()]

    def _bisect(self, eta: float) -> float:
        # Work in logit coordinates: log t = log_expit(u), log(1-t) = log_expit(-u),
        # so the residual is smooth with slope bounded by max(alpha1, alpha2).
        def resid(u):
            return self.alpha1 * log_expit(u) - self.alpha2 * log_expit(-u) - eta

        lo = math.log(_BISECT_LO) - math.log1p(-_BISECT_LO)
        hi = -lo
        r_lo, r_hi = resid(lo), resid(hi)
        if r_lo > 0 or r_hi < 0:
            raise ScheduleError(f"log-SNR level {eta} outside the bisection bracket")
        for _ in range(_BISECT_MAX_ITER):
            mid = 0.5 * (lo + hi)
            r = resid(mid)
            if abs(r) <= _BISECT_TOL:
                return float(expit(mid))
            if r < 0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 4 * np.spacing(abs(mid) + 1.0):
                break
        mid = 0.5 * (lo + hi)
        if abs(resid(mid)) > _BISECT_TOL:
            raise ArithmeticError(f"log-SNR inversion did not converge for eta={eta}")
        return float(expit(mid))

    def g_inv(self, u):
        """Inverse of g on (0, inf)."""
        return self.t_of_log_snr(2.0 * np.log(u))


def _fmt(x: float) -> str:
    return f"{x:g}"


def parse_schedule(text: str) -> ScheduleSpec:
    """Parse ``standard``, ``geom-inf:<a1>`` or ``geom:<a1>,<a2>``."""
    text = text.strip().lower()
    if text == "standard":
        return ScheduleSpec.standard()
    kind, _, params = text.partition(":")
    try:
        if kind == "geom-inf":
            return ScheduleSpec("geom-inf", float(params))
        if kind == "geom":
            a1, a2 = params.split(",")
            return ScheduleSpec("geom", float(a1), float(a2))
    except ValueError as exc:
        raise ScheduleError(f"cannot parse schedule {text!r}: {exc}") from None
    raise ScheduleError(f"cannot parse schedule {text!r}")


@dataclass(frozen=True)
class TimeGrid:
    """Discretization t_0 < ... < t_K of [t_0, T] with Euler-Maruyama coefficients."""

    times: np.ndarray
    deltas: np.ndarray
    weights: np.ndarray

    @property
    def K(self) -> int:
        return len(self.times) - 1

    @classmethod
    def from_times(cls, spec: ScheduleSpec, times) -> "TimeGrid":
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
            raise ScheduleError("grid times must be strictly increasing with at least 2 entries")
        alphas = spec.alpha(times)
        return cls(times, np.diff(times), np.diff(alphas))


def _check_grid_args(spec, t0, eta, K):
    if K < 1:
        raise ScheduleError(f"K must be >= 1, got {K}")
    if not t0 > 0:
        raise ScheduleError(f"t0 must be positive, got {t0}")
    T = float(spec.t_of_log_snr(eta))
    if t0 >= T or t0 >= spec.t_gen:
        raise ScheduleError(f"t0={t0} must be below T_eta={T} (eta={eta})")
    return T


def snr_grid(spec: ScheduleSpec, t0: float, eta: float, K: int) -> TimeGrid:
    """Grid from t0 to T_eta with equal log-SNR increments."""
    T = _check_grid_args(spec, t0, eta, K)
    start = float(spec.log_snr(t0))
    levels = start + (eta - start) * np.arange(K + 1) / K
    times = np.asarray(spec.t_of_log_snr(levels), dtype=float).reshape(-1)
    times[0], times[-1] = t0, T
    return TimeGrid.from_times(spec, times)


def uniform_grid(spec: ScheduleSpec, t0: float, eta: float, K: int) -> TimeGrid:
    """Grid from t0 to T_eta with equal time increments."""
    T = _check_grid_args(spec, t0, eta, K)
    times = t0 + (T - t0) * np.arange(K + 1) / K
    times[-1] = T
    return TimeGrid.from_times(spec, times)


def sigma_from_a0(R: float, tau: float) -> float:
    """Noise scale sigma = R_pi / sqrt(d) under R_pi^2 = d (R^2 + tau^2)."""
    if R < 0 or tau < 0:
        raise ValueError(f"R and tau must be non-negative, got R={R}, tau={tau}")
    if R == 0 and tau == 0:
        raise ValueError("R and tau cannot both be zero")
    return math.hypot(R, tau)
