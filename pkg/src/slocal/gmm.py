"""Closed forms for isotropic Gaussian mixtures under the observation process.

For a target ``pi = sum_i w_i N(m_i, gamma_i^2 I)`` and ``Y_t = alpha(t) X + sigma W_t``
the marginal of ``Y_t``, its score, the posterior of ``X`` given ``Y_t`` and the
denoiser ``E[X | Y_t]`` are all explicit.  Everything is computed from log-weights
with log-sum-exp since posterior responsibilities underflow once g(t) is large.

Array conventions: points ``y`` have shape ``(..., d)``; leading axes broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .schedule import ScheduleSpec

__all__ = [
    "IsotropicMixture",
    "PosteriorMixture",
    "obs_marginal",
    "obs_log_density",
    "obs_score",
    "posterior",
    "denoiser_oracle",
    "sample_exact",
    "loc_rate",
    "gaussian_obs_w2",
    "gaussian_denoiser_w2",
]


@dataclass(frozen=True)
class IsotropicMixture:
    """Mixture of ``N(m_i, gamma_i^2 I_d)`` components."""

    weights: np.ndarray
    means: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        g = np.broadcast_to(np.asarray(self.gammas, dtype=float), w.shape).copy()
        if m.shape[0] != w.shape[0]:
            raise ValueError(f"{w.shape[0]} weights but {m.shape[0]} means")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise ValueError(f"weights must be non-negative and sum to 1, got {w}")
        if np.any(~(g > 0)):
            raise ValueError("all gammas must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "gammas", g)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def _log_components(self, x):
        """log(w_i N(x; m_i, gamma_i^2 I)) with shape (..., N)."""
        x = np.asarray(x, dtype=float)
        var = self.gammas**2
        sq = np.sum((x[..., None, :] - self.means) ** 2, axis=-1)
        return (
            np.log(self.weights)
            - 0.5 * sq / var
            - 0.5 * self.dim * np.log(2 * math.pi * var)
        )

    def log_density(self, x):
        return logsumexp(self._log_components(x), axis=-1)

    def responsibilities(self, x):
        return softmax(self._log_components(x), axis=-1)

    def score(self, x):
        x = np.asarray(x, dtype=float)
        r = self.responsibilities(x)
        # sum_i r_i (m_i - x) / gamma_i^2
        return (r / self.gammas**2) @ self.means - x * np.sum(r / self.gammas**2, axis=-1, keepdims=True)

    def value_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        logc = self._log_components(x)
        lp = logsumexp(logc, axis=-1)
        r = np.exp(logc - lp[..., None])
        prec = r / self.gammas**2
        grad = prec @ self.means - x * np.sum(prec, axis=-1, keepdims=True)
        return lp, grad


@dataclass(frozen=True)
class PosteriorMixture:
    """Law of X given Y_t = y: weights (..., N), means (..., N, d), variances (N,)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def mean(self):
        return np.einsum("...i,...id->...d", self.weights, self.means)


def obs_marginal(mix: IsotropicMixture, spec: ScheduleSpec, sigma: float, t: float) -> IsotropicMixture:
    """Marginal law of Y_t: means alpha(t) m_i, variances t (g(t)^2 gamma_i^2 + sigma^2)."""
    g2 = spec.g(t) ** 2
    alpha = spec.alpha(t)
    return IsotropicMixture(
        mix.weights,
        alpha * mix.means,
        np.sqrt(t * (g2 * mix.gammas**2 + sigma**2)),
    )


def obs_log_density(mix, spec, sigma, t, y):
    return obs_marginal(mix, spec, sigma, t).log_density(y)


def obs_score(mix, spec, sigma, t, y):
    """Score of the marginal of Y_t at y."""
    return obs_marginal(mix, spec, sigma, t).score(y)


def posterior(mix: IsotropicMixture, spec: ScheduleSpec, sigma: float, t: float, y) -> PosteriorMixture:
    """Posterior of X given Y_t = y, a Gaussian mixture with shared per-component variances."""
    y = np.asarray(y, dtype=float)
    g2 = spec.g(t) ** 2
    alpha = spec.alpha(t)
    gam2 = mix.gammas**2
    # component weights ~ w_i N(m_i; y/alpha, (gamma_i^2 + sigma^2/g^2) I)
    s2 = gam2 + sigma**2 / g2
    sq = np.sum((y[..., None, :] / alpha - mix.means) ** 2, axis=-1)
    logw = np.log(mix.weights) - 0.5 * sq / s2 - 0.5 * mix.dim * np.log(s2)
    weights = softmax(logw, axis=-1)
    var = gam2 * sigma**2 / (sigma**2 + g2 * gam2)
    # y g / (sqrt(t) sigma^2) == y g^2 / (alpha sigma^2)
    means = var[:, None] * (
        mix.means / gam2[:, None] + (y[..., None, :] * g2 / (alpha * sigma**2))
    )
    return PosteriorMixture(weights, means, var)


def denoiser_oracle(mix, spec, sigma, t, y):
    """E[X | Y_t = y]."""
    return posterior(mix, spec, sigma, t, y).mean


def sample_exact(mix: IsotropicMixture, n: int, rng) -> np.ndarray:
    """i.i.d. draws; ``rng`` is a Generator or an integer seed."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    comp = rng.choice(len(mix.weights), size=n, p=mix.weights)
    z = rng.standard_normal((n, mix.dim))
    return mix.means[comp] + mix.gammas[comp, None] * z


def loc_rate(sigma: float, g: float, d: int) -> float:
    """Generic localization bound sigma sqrt(d) / g(t)."""
    return sigma * math.sqrt(d) / g


def gaussian_obs_w2(gamma: float, sigma: float, g: float, d: int) -> float:
    """W2 between N(m, gamma^2 I) and the law of Y_t / alpha(t)."""
    return gamma * abs(1.0 - math.sqrt(1.0 + sigma**2 / (gamma**2 * g**2))) * math.sqrt(d)


def gaussian_denoiser_w2(gamma: float, sigma: float, g: float, d: int) -> float:
    """W2 between N(m, gamma^2 I) and the law of the denoiser E[X | Y_t]."""
    return gamma * abs(1.0 - 1.0 / math.sqrt(1.0 + sigma**2 / (gamma**2 * g**2))) * math.sqrt(d)
