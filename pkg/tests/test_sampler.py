import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cldg.errors import ConfigError
from cldg.sampler import (
    SamplerConfig,
    center_interval,
    sample_high_overlap,
    sample_low_overlap,
    sample_random,
    sample_sequential,
    sample_views,
)
from cldg.temporal_graph import TemporalGraph

from conftest import random_temporal_graph


class FixedDraws:
    """Stand-in generator returning scripted values."""

    def __init__(self, choice=None, uniform=None):
        self._choice, self._uniform = choice, uniform

    def choice(self, n, size, replace):
        return np.array(self._choice)

    def uniform(self, lo, hi, size=None):
        assert lo <= self._uniform <= hi
        return self._uniform


def overlap(a, b):
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


def test_sequential_all_candidates(span100_graph):
    vs = sample_sequential(span100_graph, SamplerConfig("sequential", 4, 4), np.random.default_rng(0))
    assert vs.centers == (12.5, 37.5, 62.5, 87.5)


def test_sequential_scripted_draw(span100_graph):
    vs = sample_sequential(span100_graph, SamplerConfig("sequential", 4, 2), FixedDraws(choice=[2, 0]))
    assert vs.centers == (12.5, 62.5)
    assert vs.centers[1] - vs.centers[0] == 2 * (100 / 4)


def test_sequential_v_exceeds_s():
    with pytest.raises(ConfigError):
        SamplerConfig("sequential", 2, 3).validate()


def test_high_overlap_example(span100_graph):
    vs = sample_high_overlap(span100_graph, SamplerConfig("high", 4, 2), FixedDraws(uniform=12.5))
    assert vs.centers == (12.5, 18.75)
    assert vs.windows == [(0.0, 25.0), (6.25, 31.25)]
    assert overlap(*vs.windows) == 18.75 == 0.75 * 25


def test_high_overlap_infeasible_reports_bound():
    g = TemporalGraph(2, [0, 1], [1, 0], [0.0, 1.0])
    with pytest.raises(ConfigError, match=r"max\(T\) - 12\*span/\(4s\)"):
        sample_views(g, SamplerConfig("high", 1, 10))


def test_low_overlap_example(span100_graph):
    vs = sample_low_overlap(span100_graph, SamplerConfig("low", 4, 2), FixedDraws(uniform=12.5))
    assert vs.centers == (12.5, 31.25)
    assert vs.windows == [(0.0, 25.0), (18.75, 43.75)]
    assert overlap(*vs.windows) == 6.25 == 0.25 * 25


def test_low_overlap_infeasible():
    g = TemporalGraph(2, [0, 1], [1, 0], [0.0, 1.0])
    with pytest.raises(ConfigError):
        sample_views(g, SamplerConfig("low", 2, 3))


def test_random_range_and_gap(span100_graph):
    for seed in range(50):
        vs = sample_random(span100_graph, SamplerConfig("random", 4, 2), np.random.default_rng(seed))
        assert all(12.5 <= c <= 87.5 for c in vs.centers)
        assert vs.centers[1] - vs.centers[0] <= 75


@pytest.mark.parametrize("strategy", ["sequential", "high", "low", "random"])
def test_determinism(span100_graph, strategy):
    cfg = SamplerConfig(strategy, 8, 2, seed=11)
    a = sample_views(span100_graph, cfg, epoch=3)
    b = sample_views(span100_graph, cfg, epoch=3)
    assert a.centers == b.centers
    assert all(np.array_equal(x.active_nodes, y.active_nodes) for x, y in zip(a.views, b.views))


def test_epochs_draw_fresh_views(span100_graph):
    cfg = SamplerConfig("random", 4, 2, seed=0)
    centers = {sample_views(span100_graph, cfg, epoch=e).centers for e in range(10)}
    assert len(centers) == 10


def test_sequential_v_equals_s_partitions_edges():
    g = random_temporal_graph(20, 300, seed=5)
    vs = sample_views(g, SamplerConfig("sequential", 5, 5))
    assert sum(v.num_edges for v in vs.views) == g.num_edges


@settings(max_examples=200, deadline=None)
@given(
    strategy=st.sampled_from(["sequential", "high", "low", "random"]),
    s=st.integers(1, 24),
    v=st.integers(2, 8),
    seed=st.integers(0, 2**31),
    t0=st.floats(-50, 50),
    length=st.floats(1, 500),
)
def test_centers_in_interval(strategy, s, v, seed, t0, length):
    cfg = SamplerConfig(strategy, s, v, seed)
    try:
        cfg.validate()
    except ConfigError:
        return
    g = TemporalGraph(2, [0, 1], [1, 0], [t0, t0 + length])
    vs = sample_views(g, cfg)
    lo, hi = center_interval(g.t_min, g.t_max, s)
    slack = 1e-12 * max(1.0, abs(g.t_min), abs(g.t_max))
    assert len(vs.centers) == v
    assert list(vs.centers) == sorted(vs.centers)
    assert all(lo - slack <= c <= hi + slack for c in vs.centers)
