"""Annealed importance sampling and sequential Monte Carlo reference samplers.

Both move ``N`` particles along the geometric path

    rho_k  propto  rho_0^(1 - beta_k) pi^beta_k,   beta_k = k / K,

from the centered Gaussian ``rho_0 = N(0, s0^2 I)`` to the target, with MALA
transitions at every level.  AIS only reweights; SMC additionally resamples
(systematically) whenever the effective sample size drops below ``N / 2``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import rng as rngmod
from .mcmc import StepController, adapt_step, init_chain, mala_step
from .targets import TargetModel

__all__ = ["AnnealPath", "AisResult", "ais_run", "smc_run", "ess", "systematic_resample"]

log = logging.getLogger(__name__)

RESAMPLE_THRESHOLD = 0.5


@dataclass(frozen=True)
class AnnealPath:
    """Linear-in-beta geometric path out of a centered isotropic Gaussian.

    Parameters
    ----------
    K : int
        Number of annealing steps; ``beta_k = k / K``.
    var0 : float
        Variance of the starting Gaussian.
    dim : int
    """

    K: int
    var0: float
    dim: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not self.var0 > 0:
            raise ValueError(f"var0 must be positive, got {self.var0}")

    @classmethod
    def for_target(cls, target: TargetModel, K: int) -> "AnnealPath":
        """Start variance ``R^2 d``, the target's scale under its decomposition constants."""
        return cls(K, target.R**2 * target.dim, target.dim)

    @property
    def betas(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.K + 1)

    def log_rho0(self, x):
        """Normalized log density and gradient of the starting Gaussian."""
        x = np.asarray(x, dtype=float)
        sq = np.sum(x * x, axis=-1)
        return -0.5 * sq / self.var0 - 0.5 * self.dim * math.log(2 * math.pi * self.var0), -x / self.var0

    def sample_rho0(self, streams: rngmod.RunStreams) -> np.ndarray:
        return math.sqrt(self.var0) * streams.normal((self.dim,))

    def kernel(self, target: TargetModel, beta: float):
        def f(x):
            l0, g0 = self.log_rho0(x)
            lp, gp = target.value_and_grad(x)
            return (1 - beta) * l0 + beta * lp, (1 - beta) * g0 + beta * gp

        return f


@dataclass
class AisResult:
    """Particles with normalized log-weights (``logsumexp(log_weights) == 0``).

    ``log_z`` estimates the log normalizing constant of the target relative to
    the normalized starting Gaussian.
    """

    samples: np.ndarray
    log_weights: np.ndarray
    log_z: float
    ess: float
    n_resample: int = 0
    acceptance: float = float("nan")


def ess(log_weights) -> float:
    """Effective sample size ``1 / sum(w_i^2)`` of (possibly unnormalized) log-weights."""
    lw = np.asarray(log_weights, dtype=float)
    lw = lw - logsumexp(lw)
    return float(math.exp(-logsumexp(2 * lw)))


def systematic_resample(log_weights, u: float) -> np.ndarray:
    """Indices drawn by systematic resampling with a single uniform ``u`` in [0, 1)."""
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - logsumexp(lw))
    n = len(w)
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, (u + np.arange(n)) / n, side="right").clip(max=n - 1)


def _anneal(target, K, N, mcmc_steps, seed, resample, step_size, controller, path):
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if mcmc_steps < 0:
        raise ValueError(f"mcmc_steps must be >= 0, got {mcmc_steps}")
    path = path or AnnealPath.for_target(target, K)
    controller = controller or StepController()
    streams = rngmod.RunStreams(seed, range(N), rngmod.MAIN)
    # a separate stream drives resampling so particle streams stay aligned
    resample_rng = rngmod.stream(seed, 0, rngmod.RESAMPLE)
    betas = path.betas
    x = path.sample_rho0(streams)
    if step_size is None:
        step_size = path.var0 * target.dim ** (-1 / 3)
    chain = init_chain(path.kernel(target, 0.0), x, step_size)
    log_w = np.zeros(N)
    log_z = 0.0
    n_resample = 0
    for k in range(K):
        lp, _ = target.value_and_grad(chain.position)
        l0, _ = path.log_rho0(chain.position)
        log_w = log_w + (betas[k + 1] - betas[k]) * (lp - l0)
        if resample and ess(log_w) < RESAMPLE_THRESHOLD * N:
            log_z += float(logsumexp(log_w) - math.log(N))
            idx = systematic_resample(log_w, resample_rng.random())
            chain.position = chain.position[idx]
            chain.step_size = chain.step_size[idx]
            log_w = np.zeros(N)
            n_resample += 1
        kernel = path.kernel(target, betas[k + 1])
        chain.refresh(kernel)
        if mcmc_steps:
            xi = np.stack([g.standard_normal((mcmc_steps, target.dim)) for g in streams.generators], axis=1)
            with np.errstate(divide="ignore"):
                log_u = np.log(np.stack([g.random(mcmc_steps) for g in streams.generators], axis=1))
        for j in range(mcmc_steps):
            chain, accepted = mala_step(kernel, chain, xi[j], log_u[j])
            adapt_step(controller, chain, accepted)
    log_z += float(logsumexp(log_w) - math.log(N))
    norm = log_w - logsumexp(log_w)
    e = ess(norm)
    if e < 2:
        warnings.warn(f"importance weights degenerate (ESS = {e:.3g})", RuntimeWarning, stacklevel=3)
    rate = float(np.mean(chain.acceptance_rate)) if mcmc_steps else float("nan")
    return AisResult(chain.position, norm, log_z, e, n_resample, rate)


def ais_run(
    target: TargetModel,
    K: int,
    N: int,
    mcmc_steps: int = 32,
    seed: int = 0,
    step_size: float | None = None,
    controller: StepController | None = None,
    path: AnnealPath | None = None,
) -> AisResult:
    """Annealed importance sampling.

    At level ``k`` the log-weights gain ``(beta_{k+1} - beta_k)(log pi - log rho_0)``
    at the current positions, then each particle takes ``mcmc_steps`` MALA
    steps targeting ``rho_{k+1}``.

    Parameters
    ----------
    target : TargetModel
    K, N : int
        Annealing steps and particles.
    mcmc_steps : int
        MALA steps per level (defaults to the SLIPS chain length for equal budget).
    seed : int
    step_size : float, optional
        Initial MALA step; defaults to ``var0 d^(-1/3)``, then adapted per particle.
    path : AnnealPath, optional
        Overrides the default start ``N(0, R^2 d I)``.

    Returns
    -------
    AisResult
        Weighted particles; a warning is issued if the ESS falls below 2.
    """
    return _anneal(target, K, N, mcmc_steps, seed, False, step_size, controller, path)


def smc_run(
    target: TargetModel,
    K: int,
    N: int,
    mcmc_steps: int = 32,
    seed: int = 0,
    step_size: float | None = None,
    controller: StepController | None = None,
    path: AnnealPath | None = None,
) -> AisResult:
    """Sequential Monte Carlo: AIS with systematic resampling when ``ESS < N / 2``.

    The returned particles are unweighted: a final resampling step is applied
    when the last weights are not uniform, and ``log_weights`` is then uniform.
    """
    res = _anneal(target, K, N, mcmc_steps, seed, True, step_size, controller, path)
    if not np.allclose(res.log_weights, -math.log(N), rtol=0, atol=1e-12):
        u = rngmod.stream(seed, 1, rngmod.RESAMPLE).random()
        idx = systematic_resample(res.log_weights, u)
        res.samples = res.samples[idx]
        res.n_resample += 1
    res.log_weights = np.full(N, -math.log(N))
    res.ess = float(N)
    return res
