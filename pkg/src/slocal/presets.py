"""Named hyper-parameter presets and search grids.

``table4:<target>:<scheme>`` gives the selected ``(eta, t0)`` for a benchmark
target and schedule; ``table3:<family>[:<scheme>]`` gives the search grid.
Schemes are ``standard``, ``geom11`` and ``geom21``.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Preset", "GridPreset", "SCHEMES", "get_preset", "get_grid", "list_presets", "scheme_of", "PresetError"]


class PresetError(KeyError):
    pass


SCHEMES = {"standard": "standard", "geom11": "geom:1,1", "geom21": "geom:2,1"}

DEFAULT_K = 1024
DEFAULT_L = 32

# target key -> (make_target spec, L, {scheme: (eta, t0)})
_SELECTED = {
    "8gauss": ("8gauss", 32, {"standard": (5.7, 0.60), "geom11": (5.7, 0.35), "geom21": (5.0, 0.35)}),
    "rings": ("rings", 32, {"standard": (4.6, 1.20), "geom11": (4.6, 0.10), "geom21": (4.6, 0.30)}),
    "funnel": ("funnel", 32, {"standard": (5.0, 1.00), "geom11": (4.6, 0.30), "geom21": (4.6, 0.40)}),
    "gmm8": ("gmm:8", 32, {"standard": (5.0, 0.40), "geom11": (5.0, 0.25), "geom21": (5.0, 0.45)}),
    "gmm16": ("gmm:16", 32, {"standard": (5.0, 0.20), "geom11": (5.0, 0.15), "geom21": (5.0, 0.35)}),
    "gmm32": ("gmm:32", 48, {"standard": (5.0, 0.10), "geom11": (5.0, 0.10), "geom21": (5.0, 0.25)}),
    "gmm64": ("gmm:64", 64, {"standard": (5.0, 0.05), "geom11": (5.0, 0.05), "geom21": (5.0, 0.20)}),
    "ionosphere": (None, 32, {"standard": (5.0, 0.03), "geom11": (5.0, 0.03), "geom21": (5.0, 0.15)}),
    "sonar": (None, 32, {"standard": (5.0, 0.03), "geom11": (5.0, 0.03), "geom21": (5.0, 0.15)}),
    "phi4": ("phi4:0", 64, {"standard": (5.7, 0.80), "geom11": (5.7, 0.30), "geom21": (5.7, 0.40)}),
    "phi4-0.025": ("phi4:0.025", 64, {"standard": (5.7, 1.80), "geom11": (5.7, 0.35), "geom21": (6.1, 0.45)}),
    "phi4-0.05": ("phi4:0.05", 64, {"standard": (6.1, 1.00), "geom11": (5.7, 0.30), "geom21": (5.7, 0.40)}),
    "phi4-0.075": ("phi4:0.075", 64, {"standard": (5.7, 1.80), "geom11": (5.7, 0.35), "geom21": (5.7, 0.40)}),
    "phi4-0.1": ("phi4:0.1", 64, {"standard": (5.7, 1.40), "geom11": (5.7, 0.45), "geom21": (5.7, 0.40)}),
}

# family -> {scheme: (etas, t0s)}
_GRIDS = {
    "gmm": {
        "standard": ((5.0,), (0.03, 0.05, 0.1, 0.2, 0.4)),
        "geom11": ((5.0,), (0.03, 0.05, 0.1, 0.15, 0.25)),
        "geom21": ((5.0,), (0.15, 0.20, 0.25, 0.35, 0.45)),
    },
    "phi4": {
        "standard": ((5.7, 6.1), (0.8, 1.0, 1.2, 1.4, 1.8)),
        "geom11": ((5.7, 6.1), (0.30, 0.35, 0.40, 0.45)),
        "geom21": ((5.7, 6.1), (0.40, 0.45, 0.50, 0.55)),
    },
    "others": {
        "standard": ((5.0, 5.7), (0.1, 0.2, 0.4, 1.0, 1.2)),
        "geom11": ((4.6, 5.0), (0.1, 0.15, 0.20)),
        "geom21": ((4.6, 5.0), (0.30, 0.35, 0.45)),
    },
}
_GRIDS["logreg"] = _GRIDS["gmm"]


@dataclass(frozen=True)
class Preset:
    """Selected sampler settings for one target and schedule."""

    name: str
    target: str | None
    schedule: str
    eta: float
    t0: float
    K: int = DEFAULT_K
    L: int = DEFAULT_L

    def as_config(self) -> dict:
        out = {"schedule": self.schedule, "eta": self.eta, "t0": self.t0, "K": self.K, "L": self.L}
        if self.target is not None:
            out["target"] = self.target
        return out


@dataclass(frozen=True)
class GridPreset:
    name: str
    schedule: str
    etas: tuple[float, ...]
    t0s: tuple[float, ...]


def _split(name: str, prefix: str) -> list[str]:
    head, _, rest = name.partition(":")
    if head != prefix or not rest:
        raise PresetError(f"unknown preset {name!r}")
    return rest.split(":")


def get_preset(name: str) -> Preset:
    """Look up ``table4:<target>:<scheme>``."""
    parts = _split(name, "table4")
    if len(parts) != 2 or parts[0] not in _SELECTED or parts[1] not in SCHEMES:
        raise PresetError(
            f"unknown preset {name!r}; targets: {sorted(_SELECTED)}, schemes: {sorted(SCHEMES)}"
        )
    key, scheme = parts
    target, L, table = _SELECTED[key]
    eta, t0 = table[scheme]
    return Preset(name, target, SCHEMES[scheme], eta, t0, DEFAULT_K, L)


def get_grid(name: str, scheme: str | None = None) -> GridPreset:
    """Look up ``table3:<family>[:<scheme>]``; the scheme may also be passed separately."""
    parts = _split(name, "table3")
    family = parts[0]
    if len(parts) > 1:
        scheme = parts[1]
    scheme = scheme or "standard"
    if family not in _GRIDS or scheme not in SCHEMES or len(parts) > 2:
        raise PresetError(
            f"unknown grid {name!r}; families: {sorted(_GRIDS)}, schemes: {sorted(SCHEMES)}"
        )
    etas, t0s = _GRIDS[family][scheme]
    return GridPreset(f"table3:{family}:{scheme}", SCHEMES[scheme], etas, t0s)


def scheme_of(schedule: str) -> str | None:
    """Preset scheme key for a schedule string, if any."""
    for key, spec in SCHEMES.items():
        if schedule == spec or schedule == key:
            return key
    return None


def list_presets() -> list[str]:
    return [f"table4:{t}:{s}" for t in _SELECTED for s in SCHEMES] + [
        f"table3:{f}:{s}" for f in _GRIDS for s in SCHEMES
    ]
