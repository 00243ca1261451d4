"""FlatWorld (continuous 2-D navigation) and GridLab (small deterministic MDPs)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .logic import QSConfig

__all__ = [
    "Region",
    "FlatWorldConfig",
    "FlatWorld",
    "fw_step",
    "fw_label",
    "fw_robustness",
    "GridLab",
    "gridlab_build",
]


@dataclass(frozen=True)
class Region:
    center: tuple[float, float]
    radius: float
    reward: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("region radius must be positive")

    def distance(self, x) -> float:
        return math.hypot(x[0] - self.center[0], x[1] - self.center[1])


def _default_regions() -> dict[str, Region]:
    return {
        "r": Region((0.5, -1.0), 0.4),
        "g": Region((0.5, 1.0), 0.4),
        "b": Region((0.0, 0.0), 0.4),
        "y": Region((-1.0, 1.0), 0.4),
    }


@dataclass(frozen=True)
class FlatWorldConfig:
    regions: Mapping[str, Region] = field(default_factory=_default_regions)
    bonus_regions: tuple[Region, ...] = ()
    action_bound: float = 1.0
    step_scale: float = 0.1
    start: tuple[float, float] = (-1.0, -1.0)
    bounds: tuple[tuple[float, float], tuple[float, float]] = ((-1.5, 1.5), (-1.5, 1.5))

    def __post_init__(self):
        (x0, x1), (y0, y1) = self.bounds
        if not (x0 < x1 and y0 < y1):
            raise ValueError("empty world bounds")
        if not (x0 <= self.start[0] <= x1 and y0 <= self.start[1] <= y1):
            raise ValueError("start lies outside the world bounds")
        if self.action_bound <= 0 or self.step_scale <= 0:
            raise ValueError("action_bound and step_scale must be positive")

    @property
    def aps(self) -> tuple[str, ...]:
        return tuple(self.regions)

    @property
    def diameter(self) -> float:
        (x0, x1), (y0, y1) = self.bounds
        return math.hypot(x1 - x0, y1 - y0)

    @property
    def rho_max(self) -> float:
        return max(r.radius for r in self.regions.values())

    @property
    def rho_min(self) -> float:
        return -self.diameter

    def qs_config(self) -> QSConfig:
        return QSConfig(self.rho_max, self.rho_min, {p: 0.0 for p in self.regions})

    def with_random_bonus(self, seed: int, n: int = 8, radius: float = 0.2, reward: float = 1.0):
        """Copy of this config with ``n`` bonus regions placed uniformly at random."""
        rng = np.random.default_rng(seed)
        (x0, x1), (y0, y1) = self.bounds
        xs = rng.uniform(x0 + radius, x1 - radius, size=n)
        ys = rng.uniform(y0 + radius, y1 - radius, size=n)
        bonus = tuple(Region((float(x), float(y)), radius, reward) for x, y in zip(xs, ys))
        return replace(self, bonus_regions=bonus)

    def to_dict(self) -> dict:
        reg = lambda r: {"center": list(r.center), "radius": r.radius, "reward": r.reward}  # noqa: E731
        return {
            "regions": {k: reg(v) for k, v in self.regions.items()},
            "bonus_regions": [reg(r) for r in self.bonus_regions],
            "action_bound": self.action_bound,
            "step_scale": self.step_scale,
            "start": list(self.start),
            "bounds": [list(b) for b in self.bounds],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FlatWorldConfig":
        allowed = {"regions", "bonus_regions", "action_bound", "step_scale", "start", "bounds",
                   "bonus_seed", "n_bonus"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown FlatWorld config keys: {sorted(unknown)}")

        def reg(r):
            extra = set(r) - {"center", "radius", "reward"}
            if extra:
                raise ValueError(f"unknown region keys: {sorted(extra)}")
            return Region(tuple(map(float, r["center"])), float(r["radius"]), float(r.get("reward", 0.0)))

        kw = {}
        if "regions" in d:
            kw["regions"] = {k: reg(v) for k, v in d["regions"].items()}
        if "bonus_regions" in d:
            kw["bonus_regions"] = tuple(reg(r) for r in d["bonus_regions"])
        for key in ("action_bound", "step_scale"):
            if key in d:
                kw[key] = float(d[key])
        if "start" in d:
            kw["start"] = tuple(map(float, d["start"]))
        if "bounds" in d:
            kw["bounds"] = tuple(tuple(map(float, b)) for b in d["bounds"])
        cfg = cls(**kw)
        if "bonus_seed" in d:
            cfg = cfg.with_random_bonus(int(d["bonus_seed"]), n=int(d.get("n_bonus", 8)))
        return cfg

    @classmethod
    def from_json(cls, path) -> "FlatWorldConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fw_step(x, a, cfg: FlatWorldConfig) -> tuple[np.ndarray, float]:
    """Move by ``a * step_scale``, clip to the world, collect bonus reward at ``x'``."""
    a = np.clip(np.asarray(a, dtype=float), -cfg.action_bound, cfg.action_bound)
    x_new = np.asarray(x, dtype=float) + a * cfg.step_scale
    (x0, x1), (y0, y1) = cfg.bounds
    x_new = np.array([min(max(x_new[0], x0), x1), min(max(x_new[1], y0), y1)])
    r = sum(reg.reward for reg in cfg.bonus_regions if reg.distance(x_new) <= reg.radius)
    return x_new, float(r)


def fw_label(x, cfg: FlatWorldConfig) -> frozenset[str]:
    # closed regions: the boundary counts as inside
    return frozenset(p for p, reg in cfg.regions.items() if reg.distance(x) <= reg.radius)


def fw_robustness(x, cfg: FlatWorldConfig) -> dict[str, float]:
    """Signed distance into each region (radius minus distance), clipped to the QS range."""
    lo, hi = cfg.rho_min, cfg.rho_max
    return {p: min(max(reg.radius - reg.distance(x), lo), hi) for p, reg in cfg.regions.items()}


class FlatWorld:
    """Environment wrapper used by rollouts."""

    discrete = False

    def __init__(self, cfg: FlatWorldConfig | None = None):
        self.cfg = cfg or FlatWorldConfig()

    @property
    def aps(self):
        return self.cfg.aps

    @property
    def action_dim(self) -> int:
        return 2

    @property
    def action_bound(self) -> float:
        return self.cfg.action_bound

    def reset(self, rng=None) -> np.ndarray:
        return np.array(self.cfg.start, dtype=float)

    def step(self, s, a):
        return fw_step(s, a, self.cfg)

    def label(self, s) -> frozenset[str]:
        return fw_label(s, self.cfg)

    def robustness(self, s) -> dict[str, float]:
        return fw_robustness(s, self.cfg)

    def qs_config(self) -> QSConfig:
        return self.cfg.qs_config()

    def normalize(self, s) -> np.ndarray:
        """Affine map of the world box onto ``[-1, 1]^2``."""
        s = np.asarray(s, dtype=float)
        lo = np.array([b[0] for b in self.cfg.bounds])
        hi = np.array([b[1] for b in self.cfg.bounds])
        return 2.0 * (s - lo) / (hi - lo) - 1.0


# --------------------------------------------------------------------------
# GridLab


@dataclass(frozen=True, eq=False)
class GridLab:
    aps: tuple[str, ...]
    transitions: np.ndarray  # (S, A) next state
    labels: tuple[frozenset[str], ...]
    rewards: np.ndarray  # (S, A)
    start: int = 0

    discrete = True

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    def reset(self, rng=None) -> int:
        return self.start

    def step(self, s, a):
        s, a = int(s), int(a)
        return int(self.transitions[s, a]), float(self.rewards[s, a])

    def label(self, s) -> frozenset[str]:
        return self.labels[int(s)]

    def robustness(self, s) -> dict[str, float]:
        lab = self.labels[int(s)]
        return {p: (1.0 if p in lab else -1.0) for p in self.aps}

    def normalize(self, s) -> np.ndarray:
        v = np.zeros(self.num_states)
        v[int(s)] = 1.0
        return v

    def to_dict(self) -> dict:
        return {
            "aps": list(self.aps),
            "transitions": self.transitions.tolist(),
            "labels": [sorted(l) for l in self.labels],
            "rewards": self.rewards.tolist(),
            "start": self.start,
        }


def gridlab_build(desc: Mapping) -> GridLab:
    """Validate a GridLab description.

    ``desc`` holds ``aps``, ``transitions`` (state -> list of next states, one
    per action), ``labels`` (state -> list of propositions), ``rewards`` (same
    shape as ``transitions``) and ``start``.
    """
    unknown = set(desc) - {"aps", "transitions", "labels", "rewards", "start"}
    if unknown:
        raise ValueError(f"unknown GridLab keys: {sorted(unknown)}")
    aps = tuple(desc.get("aps", ()))
    rows = desc["transitions"]
    n = len(rows)
    if n == 0:
        raise ValueError("GridLab needs at least one state")
    n_actions = len(rows[0])
    if n_actions == 0 or any(len(r) != n_actions for r in rows):
        raise ValueError("transition table is not total: every state needs one entry per action")
    trans = np.array(rows, dtype=np.int64)
    if trans.min() < 0 or trans.max() >= n:
        raise ValueError("transition target out of range")
    labels = desc.get("labels", [[] for _ in range(n)])
    if len(labels) != n:
        raise ValueError("one label set per state is required")
    labels = tuple(frozenset(l) for l in labels)
    for lab in labels:
        if not lab <= set(aps):
            raise ValueError(f"labels {sorted(lab - set(aps))} are not declared propositions")
    rewards = np.array(desc.get("rewards", np.zeros((n, n_actions))), dtype=float)
    if rewards.shape != trans.shape:
        raise ValueError("reward table must match the transition table")
    start = int(desc.get("start", 0))
    if not 0 <= start < n:
        raise ValueError("start state out of range")
    return GridLab(aps, trans, labels, rewards, start)
