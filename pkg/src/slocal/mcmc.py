"""Langevin kernels (MALA, ULA) with per-step acceptance-targeted step-size adaptation.

All kernels operate on a batch of independent chains: positions have shape
``(n, d)`` and step sizes shape ``(n,)``.  A *log-density kernel* is any
callable ``f(x) -> (logp, grad)`` mapping ``(n, d)`` to ``((n,), (n, d))``.
Random inputs (Gaussian increments and uniforms) are passed in explicitly so
that callers control the streams and chains are reproducible bit for bit.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ChainState",
    "StepController",
    "init_chain",
    "mala_step",
    "ula_step",
    "adapt_step",
    "run_chain",
    "n_retained",
]

LogDensityKernel = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class ChainState:
    """State of a batch of chains.

    Attributes
    ----------
    position : ndarray, shape (n, d)
    step_size : ndarray, shape (n,)
    logp, grad : cached kernel values at ``position``
    accepts, proposals : per-chain counters
    nonfinite : per-chain count of proposals rejected for a non-finite density
    """

    position: np.ndarray
    step_size: np.ndarray
    logp: np.ndarray | None = None
    grad: np.ndarray | None = None
    accepts: np.ndarray = field(default=None)
    proposals: np.ndarray = field(default=None)
    nonfinite: np.ndarray = field(default=None)

    def __post_init__(self):
        self.position = np.atleast_2d(np.asarray(self.position, dtype=float))
        n = self.position.shape[0]
        self.step_size = np.broadcast_to(np.asarray(self.step_size, dtype=float), (n,)).copy()
        if np.any(~(self.step_size > 0)):
            raise ValueError("step sizes must be positive")
        for name in ("accepts", "proposals", "nonfinite"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=np.int64))

    @property
    def n_chains(self) -> int:
        return self.position.shape[0]

    @property
    def acceptance_rate(self) -> np.ndarray:
        return self.accepts / np.maximum(self.proposals, 1)

    def refresh(self, kernel: LogDensityKernel) -> "ChainState":
        """Recompute the cached density and gradient, e.g. after the kernel changed."""
        self.logp, self.grad = kernel(self.position)
        return self


def init_chain(kernel: LogDensityKernel, position, step_size) -> ChainState:
    return ChainState(position, step_size).refresh(kernel)


@dataclass(frozen=True)
class StepController:
    """Multiplicative step-size controller.

    On acceptance the step grows by ``adjust_factor ** (1 - target_rate)``; on
    rejection it shrinks by ``adjust_factor ** target_rate``.  The log step size
    then has zero drift exactly when the acceptance probability equals
    ``target_rate``.
    """

    target_rate: float = 0.75
    adjust_factor: float = 1.01

    def __post_init__(self):
        if not 0 < self.target_rate < 1:
            raise ValueError(f"target_rate must lie in (0, 1), got {self.target_rate}")
        if not self.adjust_factor > 1:
            raise ValueError(f"adjust_factor must exceed 1, got {self.adjust_factor}")

    @property
    def up(self) -> float:
        return self.adjust_factor ** (1.0 - self.target_rate)

    @property
    def down(self) -> float:
        return self.adjust_factor ** (-self.target_rate)


def adapt_step(controller: StepController, state: ChainState, accepted) -> ChainState:
    accepted = np.asarray(accepted, dtype=bool)
    state.step_size = state.step_size * np.where(accepted, controller.up, controller.down)
    return state


def _log_q(to, frm, grad_frm, lam):
    """Log Langevin proposal density of ``to`` given ``frm``, up to a constant."""
    diff = to - frm - lam[:, None] * grad_frm
    return -np.sum(diff * diff, axis=-1) / (4.0 * lam)


def mala_step(kernel: LogDensityKernel, state: ChainState, xi, log_u) -> tuple[ChainState, np.ndarray]:
    """One Metropolis-adjusted Langevin step for every chain in the batch.

    Parameters
    ----------
    kernel : callable
        ``x -> (logp, grad)``; ``state.logp``/``state.grad`` must be current.
    xi : ndarray, shape (n, d)
        Standard normal increments.
    log_u : ndarray, shape (n,)
        Logs of uniform variates for the accept test.

    Returns
    -------
    state, accepted
    """
    if state.logp is None:
        state.refresh(kernel)
    x, lam = state.position, state.step_size
    prop = x + lam[:, None] * state.grad + np.sqrt(2.0 * lam)[:, None] * xi
    with np.errstate(all="ignore"):
        lp_prop, g_prop = kernel(prop)
        log_ratio = (
            lp_prop
            - state.logp
            + _log_q(x, prop, g_prop, lam)
            - _log_q(prop, x, state.grad, lam)
        )
    finite = np.isfinite(log_ratio) & np.all(np.isfinite(g_prop), axis=-1)
    accepted = finite & (log_u < log_ratio)
    state.position = np.where(accepted[:, None], prop, x)
    state.logp = np.where(accepted, lp_prop, state.logp)
    state.grad = np.where(accepted[:, None], g_prop, state.grad)
    state.accepts += accepted
    state.proposals += 1
    state.nonfinite += ~finite
    return state, accepted


def ula_step(grad, position, step_size, xi) -> np.ndarray:
    """Unadjusted Langevin step ``x + lam * grad + sqrt(2 lam) xi``.

    ``grad`` is the drift already evaluated at ``position``; ``step_size`` is a
    scalar or per-chain array.
    """
    position = np.asarray(position, dtype=float)
    lam = np.asarray(step_size, dtype=float)
    if lam.ndim:
        lam = lam[:, None]
    return position + lam * grad + np.sqrt(2.0 * lam) * xi


def n_retained(n_steps: int, burn_frac: float) -> int:
    """Number of trailing positions kept after discarding a burn-in fraction."""
    return math.ceil((1.0 - burn_frac) * n_steps - 1e-12)


def run_chain(
    kernel: LogDensityKernel,
    state: ChainState,
    n_steps: int,
    burn_frac: float,
    xi,
    u,
    controller: StepController | None = None,
    freeze_after_burn: bool = False,
) -> tuple[np.ndarray, ChainState]:
    """Run ``n_steps`` MALA steps and keep the tail of the trajectory.

    Parameters
    ----------
    xi : ndarray, shape (n_steps, n, d)
    u : ndarray, shape (n_steps, n)
        Uniform variates on [0, 1).
    controller : StepController, optional
        Adapt the step size after every step when given.
    freeze_after_burn : bool
        Stop adapting once the retained segment starts.

    Returns
    -------
    retained : ndarray, shape (M, n, d) with ``M = n_retained(n_steps, burn_frac)``
    state : the final (persistent) chain state
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not 0 <= burn_frac < 1:
        raise ValueError(f"burn_frac must lie in [0, 1), got {burn_frac}")
    m = n_retained(n_steps, burn_frac)
    first_kept = n_steps - m
    retained = np.empty((m,) + state.position.shape)
    with np.errstate(divide="ignore"):
        log_u = np.log(u)
    for j in range(n_steps):
        state, accepted = mala_step(kernel, state, xi[j], log_u[j])
        if controller is not None and not (freeze_after_burn and j >= first_kept):
            adapt_step(controller, state, accepted)
        if j >= first_kept:
            retained[j - first_kept] = state.position
    return retained, state
