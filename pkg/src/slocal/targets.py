"""Benchmark target distributions.

A :class:`TargetModel` bundles an unnormalized log-density with its gradient
(both batched over leading axes), the constants ``(R, tau)`` that set the
noise scale ``sigma = sqrt(R^2 + tau^2)``, and optional ground-truth hooks.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

from .gmm import IsotropicMixture, sample_exact as _mixture_sample
from .schedule import sigma_from_a0

__all__ = [
    "TargetModel",
    "LabeledDataset",
    "DatasetError",
    "benchmark_gmm",
    "eight_gaussians",
    "rings",
    "funnel",
    "bayesian_logreg",
    "phi4",
    "load_dataset",
    "split_dataset",
    "make_target",
]

RING_RADIUS_FLOOR = 1e-6
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TargetModel:
    """Unnormalized target density with gradient and scale constants.

    Parameters
    ----------
    name : str
    dim : int
    value_and_grad : callable
        ``x -> (log_density, grad)`` for ``x`` of shape ``(..., dim)``.
    R, tau : float
        Mixture-of-compact-and-Gaussian scale constants.
    sampler : callable, optional
        ``(n, rng) -> (n, dim)`` exact draws.
    mode_weight : float, optional
        Known probability of the all-negative orthant.
    mixture : IsotropicMixture, optional
        Closed-form representation when the target is an isotropic mixture.
    extras : dict
        Anything else a consumer may need (held-out data, model parameters).
    """

    name: str
    dim: int
    value_and_grad: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    R: float
    tau: float
    sampler: Callable | None = None
    mode_weight: float | None = None
    mixture: IsotropicMixture | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")

    def log_density(self, x):
        return self.value_and_grad(x)[0]

    def grad_log_density(self, x):
        return self.value_and_grad(x)[1]

    @property
    def a0(self) -> tuple[float, float]:
        return self.R, self.tau

    @property
    def sigma(self) -> float:
        return sigma_from_a0(self.R, self.tau)

    def sample_exact(self, n: int, rng) -> np.ndarray:
        if self.sampler is None:
            raise NotImplementedError(f"target {self.name!r} has no exact sampler")
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return self.sampler(n, rng)


def _mixture_target(name, mix, R, tau, mode_weight=None, **extras) -> TargetModel:
    return TargetModel(
        name=name,
        dim=mix.dim,
        value_and_grad=mix.value_and_grad,
        R=R,
        tau=tau,
        sampler=lambda n, rng: _mixture_sample(mix, n, rng),
        mode_weight=mode_weight,
        mixture=mix,
        extras=extras,
    )


def two_mode_mixture(d: int, a: float, w: float, gamma: float) -> IsotropicMixture:
    """``w N(-a 1, gamma^2 I) + (1 - w) N(+a 1, gamma^2 I)``."""
    ones = np.ones(d)
    return IsotropicMixture([w, 1 - w], np.stack([-a * ones, a * ones]), gamma)


def benchmark_gmm(d: int) -> TargetModel:
    """Unbalanced bimodal mixture 2/3 N(-2/3 1, 0.05 I) + 1/3 N(4/3 1, 0.05 I)."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    ones = np.ones(d)
    mix = IsotropicMixture(
        [2 / 3, 1 / 3], np.stack([-2 / 3 * ones, 4 / 3 * ones]), math.sqrt(0.05)
    )
    return _mixture_target(f"gmm:{d}", mix, 4 / 3, math.sqrt(0.05), mode_weight=2 / 3)


def eight_gaussians() -> TargetModel:
    """Eight equally weighted N(m_i, 0.7 I) with means on a circle of radius 10."""
    ang = 2 * np.pi * np.arange(8) / 8
    means = 10 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    mix = IsotropicMixture(np.full(8, 1 / 8), means, math.sqrt(0.7))
    return _mixture_target("8gauss", mix, 10 / math.sqrt(2), math.sqrt(0.7))


_RING_CENTERS = np.arange(1, 5, dtype=float)
_RING_STD = 0.15


def rings() -> TargetModel:
    """Four concentric rings of radius 1..4; radius mixture with polar Jacobian."""
    log_norm = -math.log(4) - 0.5 * math.log(2 * math.pi * _RING_STD**2)

    def value_and_grad(x):
        x = np.asarray(x, dtype=float)
        r = np.maximum(np.linalg.norm(x, axis=-1), RING_RADIUS_FLOOR)
        z = (r[..., None] - _RING_CENTERS) / _RING_STD
        logc = log_norm - 0.5 * z**2
        lp_r = logsumexp(logc, axis=-1)
        resp = np.exp(logc - lp_r[..., None])
        dlp_dr = -np.sum(resp * z, axis=-1) / _RING_STD - 1.0 / r
        return lp_r - np.log(r), (dlp_dr / r)[..., None] * x

    def sampler(n, rng):
        out = np.empty((n, 2))
        filled = 0
        while filled < n:
            k = n - filled
            r = _RING_CENTERS[rng.integers(0, 4, size=k)] + _RING_STD * rng.standard_normal(k)
            theta = rng.uniform(0, 2 * np.pi, size=k)
            keep = r > 0
            m = int(keep.sum())
            out[filled : filled + m] = np.stack(
                [r[keep] * np.cos(theta[keep]), r[keep] * np.sin(theta[keep])], axis=1
            )
            filled += m
        return out

    return TargetModel("rings", 2, value_and_grad, 4 / math.sqrt(2), _RING_STD, sampler=sampler)


def funnel(d: int = 10) -> TargetModel:
    """Neal's funnel: x1 ~ N(0, 9) and x_i | x1 ~ N(0, exp(x1)) for i >= 2."""
    const = -0.5 * math.log(2 * math.pi * 9) - 0.5 * (d - 1) * math.log(2 * math.pi)

    def value_and_grad(x):
        x = np.asarray(x, dtype=float)
        x1, rest = x[..., 0], x[..., 1:]
        inv_var = np.exp(-x1)
        sq = np.sum(rest**2, axis=-1)
        lp = const - x1**2 / 18 - 0.5 * (d - 1) * x1 - 0.5 * sq * inv_var
        grad = np.empty_like(x)
        grad[..., 0] = -x1 / 9 - 0.5 * (d - 1) + 0.5 * sq * inv_var
        grad[..., 1:] = -rest * inv_var[..., None]
        return lp, grad

    def sampler(n, rng):
        x1 = 3 * rng.standard_normal(n)
        rest = np.exp(0.5 * x1)[:, None] * rng.standard_normal((n, d - 1))
        return np.column_stack([x1, rest])

    return TargetModel("funnel", d, value_and_grad, 2.12, 0.0, sampler=sampler)


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with binary labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DatasetError(f"features {X.shape} and labels {y.shape} do not align")
        if not np.all(np.isin(y, (0, 1))):
            raise DatasetError("labels must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features contain missing or non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int8))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


class DatasetError(ValueError):
    """Raised when a dataset file cannot be ingested."""


_LABEL_MAPS = {
    "sonar": {"R": 0, "M": 1},
    "ionosphere": {"b": 0, "g": 1},
    "binary": {"0": 0, "1": 1},
}


def _is_float(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_dataset(path, fmt: str | None = None, standardize: bool = True) -> LabeledDataset:
    """Read comma-separated rows of numeric features followed by one label token.

    Parameters
    ----------
    path : path-like
    fmt : {"sonar", "ionosphere", "binary"}, optional
        Label vocabulary; any of them is accepted when omitted.
    standardize : bool
        Z-score each feature column (standard deviation floored at 1e-8).
    """
    if fmt is None:
        label_map = {k: v for m in _LABEL_MAPS.values() for k, v in m.items()}
    elif fmt in _LABEL_MAPS:
        label_map = _LABEL_MAPS[fmt]
    else:
        raise DatasetError(f"unknown dataset format {fmt!r}")
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        rows = [[tok.strip() for tok in row] for row in csv.reader(fh) if any(t.strip() for t in row)]
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    if not all(_is_float(tok) for tok in rows[0][:-1]):
        rows = rows[1:]  # header
        if not rows:
            raise DatasetError(f"{path}: header but no data rows")
    ncol = len(rows[0])
    if ncol < 2:
        raise DatasetError(f"{path}: need at least one feature and a label per row")
    feats, labels = [], []
    for i, row in enumerate(rows, start=1):
        if len(row) != ncol:
            raise DatasetError(f"{path}: row {i} has {len(row)} columns, expected {ncol}")
        try:
            feats.append([float(tok) for tok in row[:-1]])
        except ValueError:
            j = next(j for j, tok in enumerate(row[:-1]) if not _is_float(tok))
            raise DatasetError(f"{path}: row {i}, column {j + 1}: cannot parse {row[j]!r}") from None
        if row[-1] not in label_map:
            raise DatasetError(f"{path}: row {i}, column {ncol}: unknown label {row[-1]!r}")
        labels.append(label_map[row[-1]])
    X = np.asarray(feats)
    if not np.all(np.isfinite(X)):
        i, j = np.argwhere(~np.isfinite(X))[0]
        raise DatasetError(f"{path}: row {i + 1}, column {j + 1}: non-finite value")
    if standardize:
        X = (X - X.mean(axis=0)) / np.maximum(X.std(axis=0), STD_FLOOR)
    return LabeledDataset(X, np.asarray(labels))


def split_dataset(data: LabeledDataset, test_frac: float = 0.2, seed: int = 0):
    """Deterministic shuffled train/test split."""
    if not 0 < test_frac < 1:
        raise ValueError(f"test_frac must lie in (0, 1), got {test_frac}")
    perm = np.random.default_rng(seed).permutation(data.n)
    n_test = max(1, int(round(test_frac * data.n)))
    test, train = perm[:n_test], perm[n_test:]
    return (
        LabeledDataset(data.features[train], data.labels[train]),
        LabeledDataset(data.features[test], data.labels[test]),
    )


PRIOR_BIAS_STD = 2.5


def logreg_log_likelihood(theta, data: LabeledDataset):
    """Per-datum Bernoulli log-likelihoods, shape ``(..., n)``."""
    theta = np.asarray(theta, dtype=float)
    z = theta[..., :-1] @ data.features.T + theta[..., -1:]
    return data.labels * z - np.logaddexp(0.0, z)


def bayesian_logreg(data: LabeledDataset, test: LabeledDataset | None = None, name: str = "logreg") -> TargetModel:
    """Posterior over ``(w, b)`` for logistic regression with N(0, I) and N(0, 2.5^2) priors."""
    if data.n == 0:
        raise ValueError("dataset is empty")
    p = data.p
    X, y = data.features, data.labels.astype(float)
    prior_const = -0.5 * p * math.log(2 * math.pi) - 0.5 * math.log(2 * math.pi * PRIOR_BIAS_STD**2)
    prior_prec = np.ones(p + 1)
    prior_prec[-1] = 1 / PRIOR_BIAS_STD**2

    def value_and_grad(theta):
        theta = np.asarray(theta, dtype=float)
        z = theta[..., :p] @ X.T + theta[..., p:]
        lp = (
            np.sum(y * z - np.logaddexp(0.0, z), axis=-1)
            + prior_const
            - 0.5 * np.sum(prior_prec * theta**2, axis=-1)
        )
        resid = y - expit(z)
        grad = np.empty_like(theta)
        grad[..., :p] = resid @ X
        grad[..., p] = np.sum(resid, axis=-1)
        return lp, grad - prior_prec * theta

    return TargetModel(
        name, p + 1, value_and_grad, PRIOR_BIAS_STD / math.sqrt(p + 1), 0.0,
        extras={"train": data, "test": test},
    )


PHI4_A = 0.1
PHI4_BETA = 20.0
PHI4_DIM = 100


def phi4(h: float, d: int = PHI4_DIM, a: float = PHI4_A, beta: float = PHI4_BETA) -> TargetModel:
    """One-dimensional lattice phi^4 field with Dirichlet boundary and external field h."""
    ad = a * d

    def value_and_grad(phi):
        phi = np.asarray(phi, dtype=float)
        pad = np.zeros(phi.shape[:-1] + (d + 2,))
        pad[..., 1:-1] = phi
        diff = np.diff(pad, axis=-1)
        U = (
            0.5 * ad * np.sum(diff**2, axis=-1)
            + np.sum((1 - phi**2) ** 2, axis=-1) / (4 * ad)
            + h * np.sum(phi, axis=-1)
        )
        lap = 2 * phi - pad[..., :-2] - pad[..., 2:]
        dU = ad * lap - phi * (1 - phi**2) / ad + h
        return -beta * U, -beta * dU

    return TargetModel(
        f"phi4:{h:g}", d, value_and_grad, 4.5, 1e-2,
        extras={"h": h, "a": a, "beta": beta},
    )


def make_target(name: str) -> TargetModel:
    """Build a target from ``gmm:<d>``, ``8gauss``, ``rings``, ``funnel``,
    ``logreg:<path>[:<format>]`` or ``phi4:<h>``."""
    kind, _, arg = name.partition(":")
    try:
        if kind == "gmm":
            return benchmark_gmm(int(arg))
        if kind == "phi4":
            return phi4(float(arg))
    except ValueError as exc:
        raise ValueError(f"bad target {name!r}: {exc}") from None
    if name == "8gauss":
        return eight_gaussians()
    if name == "rings":
        return rings()
    if name == "funnel":
        return funnel()
    if kind == "logreg":
        path, fmt = arg, None
        stem, _, maybe_fmt = arg.rpartition(":")
        if maybe_fmt in _LABEL_MAPS:
            path, fmt = stem, maybe_fmt
        train, test = split_dataset(load_dataset(path, fmt))
        return bayesian_logreg(train, test, name=name)
    raise ValueError(f"unknown target {name!r}")
