"""Stochastic localization sampler driven by iterative posterior sampling.

A run simulates the observation process ``Y_t = alpha(t) X + sigma W_t`` on an
equal-log-SNR grid ``t_0 < ... < t_K``.  The drift needs the denoiser
``E[X | Y_t]``, which is estimated by averaging a persistent MALA chain on the
posterior ``pi(x) N(x; Y_t / alpha(t), sigma^2 / g(t)^2 I)``.  The starting
observation is drawn by an outer unadjusted Langevin chain on the law of
``Y_{t_0}`` whose score is itself estimated with the same inner posterior chain.

Runs are vectorized: a batch of ``n`` independent runs advances together, each
run drawing from its own counter-based stream, so results do not depend on
how runs are grouped into batches.
"""

from __future__ import annotations

import logging
import math
import os
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .mcmc import ChainState, StepController, init_chain, run_chain, ula_step
from .schedule import ScheduleSpec, TimeGrid, snr_grid
from .targets import TargetModel

__all__ = [
    "SlipsConfig",
    "SlipsError",
    "SlipsBatchResult",
    "posterior_kernel",
    "init_observation",
    "estimate_denoiser",
    "sde_step",
    "run",
    "run_batch",
]

log = logging.getLogger(__name__)

CHUNK_SIZE = 256
MAX_FAILURE_FRAC = 0.10

Denoiser = Callable[[float, np.ndarray], np.ndarray]


class SlipsError(RuntimeError):
    """Raised when too many runs of a batch fail numerically."""


@dataclass(frozen=True)
class SlipsConfig:
    """Sampler hyper-parameters.

    Parameters
    ----------
    schedule : ScheduleSpec
    t0 : float
        Starting time; must lie below ``T = t_of_log_snr(eta)``.
    eta : float
        Final log-SNR level.
    K : int
        Number of SDE steps.
    L : int
        MALA steps per denoiser estimation.
    n_init : int
        Outer ULA steps of the initialization.
    burn_frac : float
        Fraction of each MALA segment discarded before averaging.
    init_mcmc_steps : int, optional
        MALA steps per initialization step; defaults to ``L``.
    sigma : float, optional
        Overrides the target's ``sqrt(R^2 + tau^2)``.
    init_step_size : float, optional
        Initial posterior MALA step; see :func:`default_init_step`.
    freeze_adaptation : bool
        Stop adapting the MALA step during the retained part of each segment.
    output : {"denoiser", "observation"}
        Return the final denoiser estimate or ``Y_T / alpha(T)``.
    """

    schedule: ScheduleSpec
    t0: float
    eta: float
    K: int
    L: int = 32
    n_init: int = 20
    burn_frac: float = 0.5
    n_runs: int = 1
    seed: int = 0
    init_mcmc_steps: int | None = None
    sigma: float | None = None
    init_step_size: float | None = None
    target_rate: float = 0.75
    adjust_factor: float = 1.01
    freeze_adaptation: bool = False
    output: str = "denoiser"

    def __post_init__(self):
        if self.K < 1 or self.L < 1:
            raise ValueError(f"K and L must be >= 1, got K={self.K}, L={self.L}")
        if self.n_init < 0:
            raise ValueError(f"n_init must be >= 0, got {self.n_init}")
        if self.init_mcmc_steps is not None and self.init_mcmc_steps < 1:
            raise ValueError("init_mcmc_steps must be >= 1")
        if not 0 <= self.burn_frac < 1:
            raise ValueError(f"burn_frac must lie in [0, 1), got {self.burn_frac}")
        if self.n_runs < 1:
            raise ValueError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.output not in ("denoiser", "observation"):
            raise ValueError(f"unknown output mode {self.output!r}")
        self.grid()  # validates t0 / eta against the schedule

    def grid(self) -> TimeGrid:
        return snr_grid(self.schedule, self.t0, self.eta, self.K)

    def resolve_sigma(self, target: TargetModel) -> float:
        return self.sigma if self.sigma is not None else target.sigma

    @property
    def controller(self) -> StepController:
        return StepController(self.target_rate, self.adjust_factor)


def posterior_kernel(target: TargetModel, spec: ScheduleSpec, sigma: float, t: float, y: np.ndarray):
    """Log-density kernel of ``pi(x) N(x; y / alpha(t), sigma^2 / g(t)^2 I)``."""
    prec = float(spec.g(t)) ** 2 / sigma**2
    center = y / float(spec.alpha(t))

    def kernel(x):
        lp, grad = target.value_and_grad(x)
        diff = x - center
        return lp - 0.5 * prec * np.sum(diff * diff, axis=-1), grad - prec * diff

    return kernel


def default_init_step(target: TargetModel, spec: ScheduleSpec, sigma: float, t0: float) -> float:
    """Starting MALA step for the posterior chains.

    The posterior variance is at most ``v = 1 / (1/tau^2 + g(t0)^2/sigma^2)``
    (``sigma^2 / g^2`` when tau = 0); the step is ``v d^(-1/3)``, the usual
    dimension scaling for Langevin proposals.
    """
    prec = float(spec.g(t0)) ** 2 / sigma**2
    if target.tau > 0:
        prec += 1.0 / target.tau**2
    return target.dim ** (-1 / 3) / prec


@dataclass
class _Batch:
    """Mutable state of a batch of runs."""

    y: np.ndarray
    chain: ChainState | None
    streams_init: rngmod.RunStreams
    streams_main: rngmod.RunStreams
    failed: np.ndarray
    trace: dict = field(default_factory=lambda: {"t": [], "acceptance": [], "step_size": []})


def _mcmc_mean(batch: _Batch, target, config, sigma, t, n_steps, streams) -> np.ndarray:
    kernel = posterior_kernel(target, config.schedule, sigma, t, batch.y)
    n, d = batch.y.shape
    xi = np.stack([g.standard_normal((n_steps, d)) for g in streams.generators], axis=1)
    u = np.stack([g.random(n_steps) for g in streams.generators], axis=1)
    batch.chain.refresh(kernel)
    before = batch.chain.accepts.copy()
    retained, batch.chain = run_chain(
        kernel, batch.chain, n_steps, config.burn_frac, xi, u,
        controller=config.controller, freeze_after_burn=config.freeze_adaptation,
    )
    rate = (batch.chain.accepts - before) / n_steps
    if np.any(rate == 0):
        log.debug("t=%.4g: %d chains rejected every proposal", t, int(np.sum(rate == 0)))
    batch.trace["t"].append(float(t))
    batch.trace["acceptance"].append(float(np.mean(rate)))
    batch.trace["step_size"].append(float(np.mean(batch.chain.step_size)))
    return retained.mean(axis=0)


def _mark_failures(batch: _Batch, *arrays) -> None:
    bad = np.zeros(len(batch.failed), dtype=bool)
    for a in arrays:
        bad |= ~np.all(np.isfinite(a), axis=-1)
    new = bad & ~batch.failed
    if np.any(new):
        batch.failed |= new
        batch.y[new] = 0.0
        if batch.chain is not None:
            batch.chain.position[new] = 0.0
        for a in arrays:
            a[new] = 0.0


def init_observation(config: SlipsConfig, target: TargetModel, run_ids, denoiser: Denoiser | None = None) -> _Batch:
    """Draw ``Y_{t0}`` with Langevin-within-Langevin for the given runs."""
    spec, t0 = config.schedule, config.t0
    sigma = config.resolve_sigma(target)
    alpha0 = float(spec.alpha(t0))
    streams_init = rngmod.RunStreams(config.seed, run_ids, rngmod.INIT)
    streams_main = rngmod.RunStreams(config.seed, run_ids, rngmod.MAIN)
    y = sigma * math.sqrt(t0) * streams_init.normal((target.dim,))
    n = y.shape[0]
    batch = _Batch(y, None, streams_init, streams_main, np.zeros(n, dtype=bool))
    if denoiser is None:
        step = config.init_step_size
        if step is None:
            step = default_init_step(target, spec, sigma, t0)
        kernel = posterior_kernel(target, spec, sigma, t0, y)
        batch.chain = init_chain(kernel, y / alpha0, step)
    lam = sigma**2 * t0 / 2
    n_steps = config.init_mcmc_steps or config.L
    for _ in range(config.n_init):
        if denoiser is None:
            u = _mcmc_mean(batch, target, config, sigma, t0, n_steps, streams_init)
        else:
            u = denoiser(t0, batch.y)
        score = (alpha0 * u - batch.y) / (sigma**2 * t0)
        _mark_failures(batch, score)
        batch.y = ula_step(score, batch.y, lam, streams_init.normal((target.dim,)))
    return batch


def estimate_denoiser(batch: _Batch, t: float, target: TargetModel, config: SlipsConfig) -> np.ndarray:
    """Persistent-chain MCMC estimate of ``E[X | Y_t = batch.y]``."""
    sigma = config.resolve_sigma(target)
    return _mcmc_mean(batch, target, config, sigma, t, config.L, batch.streams_main)


def sde_step(y, u, grid: TimeGrid, k: int, sigma: float, z) -> np.ndarray:
    """Euler-Maruyama step ``y + w_k u + sigma sqrt(delta_k) z``."""
    if not 0 <= k < grid.K:
        raise IndexError(f"step index {k} outside [0, {grid.K})")
    return y + grid.weights[k] * u + sigma * math.sqrt(grid.deltas[k]) * z


@dataclass
class SlipsBatchResult:
    samples: np.ndarray
    failed: np.ndarray
    diagnostics: dict


def _run_chunk(config: SlipsConfig, target: TargetModel, run_ids, denoiser) -> SlipsBatchResult:
    sigma = config.resolve_sigma(target)
    grid = config.grid()
    timings = {}
    tic = time.perf_counter()
    batch = init_observation(config, target, run_ids, denoiser)
    timings["init_seconds"] = time.perf_counter() - tic
    tic = time.perf_counter()

    def estimate(k):
        t = grid.times[k]
        if denoiser is not None:
            return denoiser(t, batch.y)
        return estimate_denoiser(batch, t, target, config)

    for k in range(grid.K):
        u = estimate(k)
        _mark_failures(batch, u, batch.y)
        z = batch.streams_main.normal((target.dim,))
        batch.y = sde_step(batch.y, u, grid, k, sigma, z)
    if config.output == "denoiser":
        out = estimate(grid.K)
    else:
        out = batch.y / float(config.schedule.alpha(grid.times[-1]))
    _mark_failures(batch, out, batch.y)
    out = out.copy()
    out[batch.failed] = np.nan
    timings["loop_seconds"] = time.perf_counter() - tic
    diag = {
        "estimation_times": batch.trace["t"],
        "acceptance": batch.trace["acceptance"],
        "step_size": batch.trace["step_size"],
        **timings,
    }
    if batch.chain is not None:
        diag["nonfinite_proposals"] = int(batch.chain.nonfinite.sum())
    return SlipsBatchResult(out, batch.failed.copy(), diag)


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("SLOCAL_THREADS", "1")))
    except ValueError:
        return 1


def run_batch(
    config: SlipsConfig,
    target: TargetModel,
    denoiser: Denoiser | None = None,
    run_ids=None,
) -> SlipsBatchResult:
    """Run ``config.n_runs`` independent samplers (or the given run ids).

    Parameters
    ----------
    denoiser : callable, optional
        ``(t, y) -> E[X | Y_t = y]`` used in place of MCMC estimation.
    run_ids : sequence of int, optional
        Which runs to execute; defaults to ``range(config.n_runs)``.

    Returns
    -------
    SlipsBatchResult
        ``samples`` has one row per run in run-id order; failed runs are NaN.

    Raises
    ------
    SlipsError
        If more than 10% of the runs fail.
    """
    if run_ids is None:
        run_ids = range(config.n_runs)
    run_ids = list(run_ids)
    chunks = [run_ids[i : i + CHUNK_SIZE] for i in range(0, len(run_ids), CHUNK_SIZE)]
    workers = min(_n_threads(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _run_chunk(config, target, c, denoiser), chunks))
    else:
        parts = [_run_chunk(config, target, c, denoiser) for c in chunks]
    samples = np.concatenate([p.samples for p in parts])
    failed = np.concatenate([p.failed for p in parts])
    diag = {
        "n_runs": len(run_ids),
        "n_failed": int(failed.sum()),
        "failed_runs": [int(r) for r, f in zip(run_ids, failed) if f],
        "estimation_times": parts[0].diagnostics["estimation_times"],
        "acceptance": np.mean([p.diagnostics["acceptance"] for p in parts], axis=0).tolist()
        if parts[0].diagnostics["acceptance"] else [],
        "step_size": np.mean([p.diagnostics["step_size"] for p in parts], axis=0).tolist()
        if parts[0].diagnostics["step_size"] else [],
        "nonfinite_proposals": sum(p.diagnostics.get("nonfinite_proposals", 0) for p in parts),
        "seconds": sum(p.diagnostics["init_seconds"] + p.diagnostics["loop_seconds"] for p in parts),
    }
    if failed.sum() > MAX_FAILURE_FRAC * len(run_ids):
        raise SlipsError(
            f"{int(failed.sum())} of {len(run_ids)} runs hit non-finite values; "
            "t0 is probably too small for this target"
        )
    return SlipsBatchResult(samples, failed, diag)


def run(config: SlipsConfig, target: TargetModel, run_id: int = 0, denoiser: Denoiser | None = None) -> np.ndarray:
    """A single sample from run ``run_id``."""
    res = run_batch(config, target, denoiser, run_ids=[run_id])
    if res.failed[0]:
        raise SlipsError(f"run {run_id} hit non-finite values")
    return res.samples[0]
