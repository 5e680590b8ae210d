"""Exponential-integrator discretization of the observation SDE with an exact score.

In score form the observation process solves

    dY = (alpha'(t) / alpha(t)) (Y + sigma^2 t grad log p_t(Y)) dt + sigma dB.

Freezing ``sigma^2 t_k grad log p_{t_k}(Y_{t_k})`` over ``[t_k, t_{k+1}]`` leaves a
linear SDE that is integrated exactly:

    Y' = C Y + (C - 1) sigma^2 t_k score + noise_std Z,   C = alpha(t_{k+1}) / alpha(t_k),
    noise_std^2 = sigma^2 alpha(t_{k+1})^2 int_{t_k}^{t_{k+1}} du / alpha(u)^2.

The integral has closed forms for every Geom-inf schedule and for Geom with
(alpha1, alpha2) in {(1, 1), (2, 1), (1, 2)}; other Geom schedules fall back
to numerical quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import rng as rngmod
from .gmm import IsotropicMixture, obs_score
from .schedule import ScheduleError, ScheduleSpec, TimeGrid, snr_grid, uniform_grid

__all__ = ["EiStepCoeffs", "ei_coeffs", "ei_noise_var_quad", "ei_step", "run_ideal", "make_grid"]

QUAD_RTOL = 1e-10
QUAD_ATOL = 1e-14


@dataclass(frozen=True)
class EiStepCoeffs:
    multiplier: float
    noise_std: float


def _inv_alpha2_integral_quad(spec: ScheduleSpec, t: float, t1: float) -> float:
    """int_t^{t1} du / alpha(u)^2 by quadrature in log-time."""
    a1 = spec.alpha1
    a2 = spec.alpha2 or 0.0

    # u = exp(s): du / alpha^2 = (1 - u)^a2 u^-(a1 + 1) u ds; scale by t^a1 to keep O(1)
    def f(s):
        return (-math.expm1(s) if spec.kind == "geom" else 1.0) ** a2 * math.exp(-a1 * (s - math.log(t)))

    val, _ = quad(f, math.log(t), math.log(t1), epsabs=QUAD_ATOL, epsrel=QUAD_RTOL, limit=200)
    return val * t ** (-a1)


def ei_noise_var_quad(spec: ScheduleSpec, t: float, t1: float, sigma: float) -> float:
    """Noise variance of one exponential-integrator step, always by quadrature."""
    return sigma**2 * float(spec.alpha(t1)) ** 2 * _inv_alpha2_integral_quad(spec, t, t1)


def _noise_var_closed(spec: ScheduleSpec, t: float, t1: float, sigma: float) -> float | None:
    a1, a2 = spec.alpha1, spec.alpha2
    dt = t1 - t
    log_ratio = -math.log1p(dt / t)  # log(t / t1)
    if spec.kind == "geom-inf":
        # t1 (t1^a1 - t^a1) / (a1 t^a1)
        return sigma**2 * t1 * math.expm1(-a1 * log_ratio) / a1
    if (a1, a2) == (1, 1):
        v = t1 * dt / (t * (1 - t1)) + t1**2 * log_ratio / (1 - t1)
    elif (a1, a2) == (2, 1):
        v = t1**2 * (dt / t) / (1 - t1) * ((t + t1) / (2 * t * t1) - 1)
    elif (a1, a2) == (1, 2):
        v = (dt * (t1**2 + t1 / t) + 2 * t1**2 * log_ratio) / (1 - t1) ** 2
    else:
        return None
    return sigma**2 * v


def ei_coeffs(spec: ScheduleSpec, t: float, t1: float, sigma: float) -> EiStepCoeffs:
    """Coefficients of the exponential-integrator step from ``t`` to ``t1``."""
    spec._check([t, t1])
    if not t1 > t:
        raise ScheduleError(f"need t < t1, got t={t}, t1={t1}")
    log_c = (spec.alpha1 + 1) / 2 * math.log1p((t1 - t) / t)
    if spec.kind == "geom":
        log_c += spec.alpha2 / 2 * (math.log1p(-t) - math.log1p(-t1))
    var = _noise_var_closed(spec, t, t1, sigma)
    if var is None:
        var = ei_noise_var_quad(spec, t, t1, sigma)
    return EiStepCoeffs(math.exp(log_c), math.sqrt(max(var, 0.0)))


def ei_step(spec, t, t1, y, score, sigma, z):
    """One step given the score at ``(t, y)`` (an array) and standard normal ``z``."""
    c = ei_coeffs(spec, t, t1, sigma)
    return c.multiplier * y + (c.multiplier - 1) * sigma**2 * t * score + c.noise_std * z


def make_grid(spec: ScheduleSpec, t0: float, eta: float, K: int, mode: str = "snr") -> TimeGrid:
    if mode == "snr":
        return snr_grid(spec, t0, eta, K)
    if mode == "uniform":
        return uniform_grid(spec, t0, eta, K)
    raise ValueError(f"unknown grid mode {mode!r}")


def run_ideal(
    mix: IsotropicMixture,
    spec: ScheduleSpec,
    sigma: float,
    t0: float,
    eta: float,
    K: int,
    n_runs: int,
    grid_mode: str = "snr",
    seed: int = 0,
    return_path: bool = False,
):
    """Integrate from ``Y_{t0} ~ N(0, sigma^2 t0 I)`` with the exact mixture score.

    Returns ``Y_T / alpha(T)`` with shape ``(n_runs, d)``; with ``return_path``
    also the array of ``Y_{t_k}`` of shape ``(K + 1, n_runs, d)`` and the grid.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    grid = make_grid(spec, t0, eta, K, grid_mode)
    streams = rngmod.RunStreams(seed, range(n_runs), rngmod.MAIN)
    y = sigma * math.sqrt(t0) * streams.normal((mix.dim,))
    path = [y] if return_path else None
    times = grid.times
    for k in range(grid.K):
        score = obs_score(mix, spec, sigma, times[k], y)
        y = ei_step(spec, times[k], times[k + 1], y, score, sigma, streams.normal((mix.dim,)))
        if return_path:
            path.append(y)
    out = y / float(spec.alpha(times[-1]))
    if return_path:
        return out, np.stack(path), grid
    return out
