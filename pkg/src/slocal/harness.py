"""Experiment configuration, orchestration and artifact persistence.

A run directory holds

* ``samples.csv``      one row per run (``nan`` for failed runs), first line ``# config_hash=...``
* ``metrics.json``     list of ``{metric, value, n, seed, config_hash}`` records
* ``diagnostics.json`` sampler traces, timings, the resolved config and a ``complete`` flag
* ``plotdata.csv``     long-format ``series,x_name,x,y`` rows for external plotting

Metrics are recomputed from ``samples.csv`` alone by :func:`compute_metrics`.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as M
from . import rng as rngmod
from .baselines import ais_run, smc_run, systematic_resample
from .ei import run_ideal
from .presets import PresetError, get_preset
from .schedule import ScheduleError, parse_schedule
from .slips import SlipsConfig, run_batch
from .targets import TargetModel, make_target

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "config_hash",
    "run_experiment",
    "compute_metrics",
    "read_samples",
    "grid_search",
    "RunArtifacts",
    "METRICS",
]

log = logging.getLogger(__name__)

ALGOS = ("slips", "ideal", "ais", "smc")
METRICS = (
    "sliced-w2",
    "sliced-ks",
    "entropic-w2",
    "mode-weight",
    "mode-weight-error",
    "predictive-ll",
    "phi4-ratio",
)
# larger is better for these; every other metric is minimized
_MAXIMIZE = {"predictive-ll"}
N_REF_DEFAULT = 4096
ENTROPIC_CAP = 2048


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    For ``ais``/``smc``, ``K`` is the number of annealing levels, ``L`` the MALA
    steps per level and ``n_runs`` the number of particles.
    """

    target: str = "gmm:8"
    algo: str = "slips"
    schedule: str = "standard"
    t0: float = 0.4
    eta: float = 5.0
    K: int = 128
    L: int = 32
    n_init: int = 20
    n_runs: int = 256
    seed: int = 0
    metrics: tuple[str, ...] = ()
    out: str | None = None
    grid_mode: str = "snr"
    n_ref: int = N_REF_DEFAULT
    n_proj: int = M.N_PROJ
    burn_frac: float = 0.5
    freeze_adaptation: bool = False

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["metrics"] = list(self.metrics)
        return d

    def replace(self, **kw) -> "ExperimentConfig":
        return validate(dataclasses.replace(self, **kw))


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_ALIASES = {"k": "K", "l": "L", "runs": "n_runs", "mcmc_steps": "L", "mcmc-steps": "L", "n-init": "n_init"}
_INT_KEYS = {"K", "L", "n_init", "n_runs", "seed", "n_ref", "n_proj"}
_FLOAT_KEYS = {"t0", "eta", "burn_frac"}


def _coerce(key: str, value):
    try:
        if key in _INT_KEYS:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key == "metrics":
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(value)
        if key == "freeze_adaptation":
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            if not isinstance(value, bool):
                raise ValueError
            return value
        if key == "out":
            return None if value is None else str(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot interpret {value!r}") from None


def _normalize(mapping: dict, origin: str) -> dict:
    out = {}
    for raw_key, value in mapping.items():
        key = _ALIASES.get(raw_key, raw_key).replace("-", "_")
        key = _ALIASES.get(key, key)
        if key not in _FIELDS:
            raise ConfigError(raw_key, f"unknown key in {origin}")
        out[key] = _coerce(key, value)
    return out


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check the config against sampler preconditions without running anything."""
    if cfg.algo not in ALGOS:
        raise ConfigError("algo", f"must be one of {ALGOS}, got {cfg.algo!r}")
    for key in ("n_runs", "K", "L", "n_ref", "n_proj"):
        if getattr(cfg, key) < 1:
            raise ConfigError(key, f"must be >= 1, got {getattr(cfg, key)}")
    if cfg.n_init < 0:
        raise ConfigError("n_init", "must be >= 0")
    if not 0 <= cfg.burn_frac < 1:
        raise ConfigError("burn_frac", f"must lie in [0, 1), got {cfg.burn_frac}")
    if cfg.grid_mode not in ("snr", "uniform"):
        raise ConfigError("grid_mode", f"must be 'snr' or 'uniform', got {cfg.grid_mode!r}")
    unknown = [m for m in cfg.metrics if m not in METRICS]
    if unknown:
        raise ConfigError("metrics", f"unknown metric(s) {unknown}; known: {list(METRICS)}")
    try:
        spec = parse_schedule(cfg.schedule)
    except ScheduleError as exc:
        raise ConfigError("schedule", str(exc)) from None
    if cfg.algo in ("slips", "ideal"):
        try:
            SlipsConfig(spec, cfg.t0, cfg.eta, cfg.K, cfg.L, cfg.n_init, cfg.burn_frac, cfg.n_runs, cfg.seed)
        except ScheduleError as exc:
            raise ConfigError("t0", str(exc)) from None
    return cfg


def parse_config(flags: dict | None = None, file=None, preset: str | None = None) -> ExperimentConfig:
    """Merge settings with precedence flags > file > preset > defaults.

    Parameters
    ----------
    flags : dict, optional
        Explicitly given settings; ``None`` values are treated as absent.
    file : path or dict, optional
        JSON object of settings.  A ``preset`` key inside the file is honoured
        when no preset argument is given.
    preset : str, optional
        ``table4:<target>:<scheme>``.

    Raises
    ------
    ConfigError
        On unknown keys, malformed values or violated preconditions.
    """
    file_vals: dict = {}
    if file is not None:
        if isinstance(file, dict):
            raw = dict(file)
        else:
            try:
                raw = json.loads(Path(file).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError("config", f"cannot read {file}: {exc}") from None
            if not isinstance(raw, dict):
                raise ConfigError("config", "top level must be a JSON object")
        file_preset = raw.pop("preset", None)
        preset = preset or file_preset
        file_vals = _normalize(raw, "config file")
    preset_vals: dict = {}
    if preset:
        try:
            preset_vals = _normalize(get_preset(preset).as_config(), "preset")
        except PresetError as exc:
            raise ConfigError("preset", str(exc.args[0])) from None
        if preset_vals.get("target") is None:
            preset_vals.pop("target", None)
    flag_vals = _normalize({k: v for k, v in (flags or {}).items() if v is not None}, "flags")
    merged = {**preset_vals, **file_vals, **flag_vals}
    return validate(ExperimentConfig(**merged))


def config_hash(cfg: ExperimentConfig) -> str:
    """Short digest of every setting that influences the samples or metrics."""
    d = cfg.to_dict()
    d.pop("out")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- sampling


@dataclass
class SampleOutput:
    samples: np.ndarray
    log_weights: np.ndarray | None
    diagnostics: dict


def _sample(cfg: ExperimentConfig, target: TargetModel) -> SampleOutput:
    spec = parse_schedule(cfg.schedule)
    tic = time.perf_counter()
    if cfg.algo == "slips":
        sc = SlipsConfig(spec, cfg.t0, cfg.eta, cfg.K, cfg.L, cfg.n_init, cfg.burn_frac, cfg.n_runs, cfg.seed,
                         freeze_adaptation=cfg.freeze_adaptation)
        res = run_batch(sc, target)
        return SampleOutput(res.samples, None, res.diagnostics)
    if cfg.algo == "ideal":
        if target.mixture is None:
            raise ConfigError("algo", f"'ideal' needs a closed-form mixture target, not {target.name!r}")
        x = run_ideal(target.mixture, spec, target.sigma, cfg.t0, cfg.eta, cfg.K, cfg.n_runs, cfg.grid_mode, cfg.seed)
        return SampleOutput(x, None, {"seconds": time.perf_counter() - tic, "grid_mode": cfg.grid_mode})
    fn = ais_run if cfg.algo == "ais" else smc_run
    res = fn(target, cfg.K, cfg.n_runs, cfg.L, cfg.seed)
    diag = {
        "seconds": time.perf_counter() - tic,
        "log_z": res.log_z,
        "ess": res.ess,
        "n_resample": res.n_resample,
        "acceptance": res.acceptance,
    }
    return SampleOutput(res.samples, res.log_weights if cfg.algo == "ais" else None, diag)


# ---------------------------------------------------------------- metrics


def _unweighted(x, log_weights, seed):
    if log_weights is None:
        return x
    u = rngmod.stream(seed, 2, rngmod.RESAMPLE).random()
    return x[systematic_resample(log_weights, u)]


def _reference(target: TargetModel, n: int, seed: int) -> np.ndarray:
    return target.sample_exact(n, rngmod.stream(seed, 0, rngmod.GROUND_TRUTH))


def compute_metrics(
    samples, target: TargetModel, names, seed: int = 0, n_ref: int = N_REF_DEFAULT,
    n_proj: int = M.N_PROJ, log_weights=None, chash: str = "",
) -> list[dict]:
    """Evaluate the named metrics on the finite rows of ``samples``."""
    samples = np.asarray(samples, dtype=float)
    keep = np.all(np.isfinite(samples), axis=1)
    x = samples[keep]
    lw = None if log_weights is None else np.asarray(log_weights)[keep]
    if x.shape[0] == 0:
        raise ArithmeticError("no finite samples to evaluate")
    flat = _unweighted(x, lw, seed)
    records = []
    ref = None

    def get_ref():
        nonlocal ref
        if ref is None:
            ref = _reference(target, n_ref, seed)
        return ref

    for name in names:
        if name == "sliced-w2":
            value = M.sliced_w2(flat, get_ref(), n_proj, seed)
        elif name == "sliced-ks":
            value = M.sliced_ks(flat, get_ref(), n_proj, seed)
        elif name == "entropic-w2":
            a, b = flat[:ENTROPIC_CAP], get_ref()[:ENTROPIC_CAP]
            value = M.entropic_w2(a, b, eps=0.05)
        elif name in ("mode-weight", "mode-weight-error"):
            if lw is None:
                value = M.mode_weight(x)
            else:
                w = np.exp(lw - np.logaddexp.reduce(lw))
                value = float(np.sum(w * np.all(x < 0, axis=1)))
            if name == "mode-weight-error":
                if target.mode_weight is None:
                    raise ConfigError("metrics", f"target {target.name!r} has no known mode weight")
                value = abs(value - target.mode_weight)
        elif name == "predictive-ll":
            test = target.extras.get("test")
            if test is None:
                raise ConfigError("metrics", f"target {target.name!r} has no held-out data")
            value = M.predictive_ll(flat, test)
        elif name == "phi4-ratio":
            w_minus, w_plus = M.phi4_mode_weights(flat)
            value = w_minus / w_plus if w_plus > 0 else math.inf
        else:
            raise ConfigError("metrics", f"unknown metric {name!r}")
        records.append({"metric": name, "value": float(value), "n": int(x.shape[0]), "seed": seed, "config_hash": chash})
    return records


# ---------------------------------------------------------------- persistence


def _samples_csv(samples: np.ndarray, chash: str, log_weights=None) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    d = samples.shape[1]
    header = [f"x{i}" for i in range(d)] + (["log_weight"] if log_weights is not None else [])
    w.writerow(header)
    for i, row in enumerate(samples):
        vals = [repr(float(v)) for v in row]
        if log_weights is not None:
            vals.append(repr(float(log_weights[i])))
        w.writerow(vals)
    return buf.getvalue()


def read_samples(path) -> tuple[np.ndarray, np.ndarray | None, str]:
    """Read ``samples.csv`` back as ``(samples, log_weights or None, config_hash)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# config_hash="):
        raise ValueError(f"{path}: missing config hash header")
    chash = lines[0].split("=", 1)[1]
    rows = list(csv.reader(lines[1:]))
    header, body = rows[0], rows[1:]
    arr = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    if header[-1] == "log_weight":
        return arr[:, :-1], arr[:, -1], chash
    return arr, None, chash


def _plotdata(cfg: ExperimentConfig, dim: int, diag: dict, records: list[dict], chash: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash", "series", "x_name", "x", "y"])
    # per-time traces exist only for the localization sampler
    times = diag.get("estimation_times", [])
    if times:
        for t, a in zip(times, diag.get("acceptance", [])):
            w.writerow([chash, "acceptance", "t", repr(t), repr(a)])
        for t, s in zip(times, diag.get("step_size", [])):
            w.writerow([chash, "step_size", "t", repr(t), repr(s)])
    budget = cfg.K * cfg.L
    for r in records:
        w.writerow([chash, f"{r['metric']}:dimension", "d", dim, repr(r["value"])])
        w.writerow([chash, f"{r['metric']}:budget", "K*L", budget, repr(r["value"])])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


@dataclass
class RunArtifacts:
    config: ExperimentConfig
    config_hash: str
    samples: np.ndarray
    metrics: list[dict]
    diagnostics: dict
    out_dir: Path | None = None
    files: dict = field(default_factory=dict)

    def metric(self, name: str) -> float:
        for r in self.metrics:
            if r["metric"] == name:
                return r["value"]
        raise KeyError(name)


def run_experiment(cfg: ExperimentConfig, target: TargetModel | None = None) -> RunArtifacts:
    """Sample, evaluate and (when ``cfg.out`` is set) write the run directory.

    If sampling or evaluation raises, ``diagnostics.json`` is still written
    with ``complete: false`` and the error before the exception propagates.
    """
    validate(cfg)
    chash = config_hash(cfg)
    out = Path(cfg.out) if cfg.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    base_diag = {"config": cfg.to_dict(), "config_hash": chash}
    try:
        target = target or make_target(cfg.target)
        result = _sample(cfg, target)
        records = compute_metrics(
            result.samples, target, cfg.metrics, cfg.seed, cfg.n_ref, cfg.n_proj, result.log_weights, chash
        )
    except Exception as exc:
        if out is not None:
            _write_json(out / "diagnostics.json", {**base_diag, "complete": False, "error": f"{type(exc).__name__}: {exc}"})
        raise
    diag = {**base_diag, "complete": True, "sampler": result.diagnostics}
    files = {}
    if out is not None:
        files = {
            "samples": out / "samples.csv",
            "metrics": out / "metrics.json",
            "diagnostics": out / "diagnostics.json",
            "plotdata": out / "plotdata.csv",
        }
        files["samples"].write_text(_samples_csv(result.samples, chash, result.log_weights))
        _write_json(files["metrics"], records)
        files["plotdata"].write_text(_plotdata(cfg, target.dim, result.diagnostics, records, chash))
        _write_json(files["diagnostics"], diag)
    return RunArtifacts(cfg, chash, result.samples, records, diag, out, files)


# ---------------------------------------------------------------- grid search


def grid_search(cfg: ExperimentConfig, t0s, etas, metric: str, n_runs: int | None = None) -> list[dict]:
    """Run every ``(t0, eta)`` pair and rank by ``metric``.

    Lower is better except for ``predictive-ll``.  Ties are broken by ``t0``
    then ``eta`` ascending; points that fail (invalid window or too many
    numerical failures) rank last with ``value = nan`` and their error.
    Each point writes to ``<out>/t0=<t0>_eta=<eta>`` when ``cfg.out`` is set.
    """
    if metric not in METRICS:
        raise ConfigError("metric", f"unknown ranking metric {metric!r}")
    base = dataclasses.replace(cfg, metrics=tuple(dict.fromkeys((*cfg.metrics, metric))))
    if n_runs is not None:
        base = dataclasses.replace(base, n_runs=n_runs)
    target = make_target(base.target)
    rows = []
    for t0 in t0s:
        for eta in etas:
            out = None if cfg.out is None else str(Path(cfg.out) / f"t0={t0:g}_eta={eta:g}")
            row = {"t0": float(t0), "eta": float(eta), "value": math.nan, "error": None}
            try:
                point = validate(dataclasses.replace(base, t0=float(t0), eta=float(eta), out=out))
                art = run_experiment(point, target)
                row["value"] = art.metric(metric)
                row["config_hash"] = art.config_hash
            except (ConfigError, ArithmeticError, RuntimeError) as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rank_rows(rows, metric)


def rank_rows(rows: list[dict], metric: str) -> list[dict]:
    sign = -1.0 if metric in _MAXIMIZE else 1.0

    def key(r):
        v = r["value"]
        bad = not math.isfinite(v)
        return (bad, 0.0 if bad else sign * v, r["t0"], r["eta"])

    ranked = sorted(rows, key=key)
    for i, r in enumerate(ranked, 1):
        r["rank"] = i
    return ranked
