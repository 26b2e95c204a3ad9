"""Timespan view sampling.

Four strategies pick the centers of ``v`` windows, each of length
``span / s``:

* ``sequential``: split the span into ``s`` disjoint windows and take ``v`` of them
* ``high``: consecutive centers ``span / (4s)`` apart (75% window overlap)
* ``low``: consecutive centers ``3 span / (4s)`` apart (25% window overlap)
* ``random``: independent uniform centers
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import substream
from .temporal_graph import (
    GraphView,
    TemporalGraph,
    check_trainable,
    induce_view,
    sequential_grid,
    induce_window,
)

STRATEGIES = ("sequential", "high", "low", "random")


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "sequential"
    s: int = 4
    v: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.s < 1:
            raise ConfigError(f"s must be >= 1, got {self.s}")
        if self.v < 2:
            raise ConfigError(f"v must be >= 2, got {self.v}")
        if self.strategy == "sequential" and self.v > self.s:
            raise ConfigError(f"sequential sampling needs v <= s (got v={self.v}, s={self.s})")
        if self.strategy in ("high", "low"):
            # feasibility depends only on the ratio, so test it on a unit span
            lo, hi = first_center_interval(self.strategy, 0.0, 1.0, self.s, self.v)
            if hi < lo:
                raise ConfigError(
                    f"{self.strategy}-overlap sampling infeasible for s={self.s}, v={self.v}: "
                    f"first center bound max(T) - {_stride_units(self.strategy, self.v)}*span/(4s) "
                    f"= {hi:.6g}*span lies below min(T) + span/(2s) = {lo:.6g}*span"
                )


@dataclass
class ViewSet:
    centers: tuple
    views: list

    @property
    def windows(self) -> list:
        return [v.window for v in self.views]


def _stride_units(strategy: str, v: int) -> int:
    return 2 + v if strategy == "high" else 2 + 3 * v


def center_interval(t_min: float, t_max: float, s: int) -> tuple:
    half = (t_max - t_min) / (2 * s)
    return t_min + half, t_max - half


def first_center_interval(strategy: str, t_min: float, t_max: float, s: int, v: int) -> tuple:
    """Admissible interval for the first center of an overlap strategy."""
    span = t_max - t_min
    return t_min + span / (2 * s), t_max - _stride_units(strategy, v) * span / (4 * s)


def overlap_gap(strategy: str, span: float, s: int) -> float:
    return span / (4 * s) if strategy == "high" else 3 * span / (4 * s)


def sample_sequential(g: TemporalGraph, cfg: SamplerConfig, rng: np.random.Generator) -> ViewSet:
    cfg.validate()
    if cfg.strategy != "sequential":
        cfg = SamplerConfig("sequential", cfg.s, cfg.v, cfg.seed)
        cfg.validate()
    grid = sequential_grid(g, cfg.s)
    picks = np.sort(rng.choice(cfg.s, size=cfg.v, replace=False))
    views = []
    for k in picks:
        lo, hi, c = grid[k]
        views.append(induce_window(g, lo, hi, c, include_hi=(k == cfg.s - 1)))
    return ViewSet(tuple(v.center for v in views), views)


def _sample_overlap(g, cfg, rng, strategy) -> ViewSet:
    cfg = SamplerConfig(strategy, cfg.s, cfg.v, cfg.seed)
    cfg.validate()
    lo, hi = first_center_interval(strategy, g.t_min, g.t_max, cfg.s, cfg.v)
    if hi < lo:
        raise ConfigError(f"first-center interval [{lo}, {hi}] is empty")
    first = rng.uniform(lo, hi)
    gap = overlap_gap(strategy, g.span, cfg.s)
    centers = [first + i * gap for i in range(cfg.v)]
    views = [induce_view(g, c, cfg.s) for c in centers]
    return ViewSet(tuple(centers), views)


def sample_high_overlap(g, cfg, rng) -> ViewSet:
    return _sample_overlap(g, cfg, rng, "high")


def sample_low_overlap(g, cfg, rng) -> ViewSet:
    return _sample_overlap(g, cfg, rng, "low")


def sample_random(g: TemporalGraph, cfg: SamplerConfig, rng: np.random.Generator) -> ViewSet:
    cfg = SamplerConfig("random", cfg.s, cfg.v, cfg.seed)
    cfg.validate()
    lo, hi = center_interval(g.t_min, g.t_max, cfg.s)
    centers = np.sort(rng.uniform(lo, hi, size=cfg.v))
    views = [induce_view(g, float(c), cfg.s) for c in centers]
    return ViewSet(tuple(float(c) for c in centers), views)


_SAMPLERS = {
    "sequential": sample_sequential,
    "high": sample_high_overlap,
    "low": sample_low_overlap,
    "random": sample_random,
}


def sample_views(g: TemporalGraph, cfg: SamplerConfig, epoch: int = 0, attempt: int = 0) -> ViewSet:
    """Draw the ViewSet for ``epoch`` from its own substream of ``cfg.seed``."""
    cfg.validate()
    check_trainable(g)
    rng = substream(cfg.seed, "sampler", epoch, attempt)
    return _SAMPLERS[cfg.strategy](g, cfg, rng)


def all_sequential_views(g: TemporalGraph, s: int) -> list:
    """Every window of the ``s``-way sequential partition, in time order."""
    check_trainable(g)
    return [
        induce_window(g, lo, hi, c, include_hi=(k == s - 1))
        for k, (lo, hi, c) in enumerate(sequential_grid(g, s))
    ]
