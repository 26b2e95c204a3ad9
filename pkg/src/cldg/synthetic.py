"""Synthetic dynamic stochastic block model graphs for tests and demos."""

from __future__ import annotations

import numpy as np

from .rng import substream
from .temporal_graph import TemporalGraph


def dynamic_sbm(num_nodes: int = 500, num_edges: int = 5000, num_communities: int = 2,
                ratio: float = 4.0, feature_dim: int = 32, feature_signal: float = 0.0,
                t_span: tuple = (0.0, 100.0), seed: int = 0) -> TemporalGraph:
    """Planted-partition multigraph with uniformly random timestamps.

    Each edge joins a uniformly random pair of distinct nodes drawn from
    within one community with probability proportional to ``ratio`` times the
    number of intra-community pairs, otherwise across communities, so a given
    intra pair is ``ratio`` times likelier than an inter pair. Communities are
    stable over time and stored as ``labels``.

    Node features are standard normal; ``feature_signal`` adds that multiple
    of a random unit direction per community (0 gives uninformative features).
    """
    rng = substream(seed, "sbm")
    labels = rng.permutation(np.arange(num_nodes) % num_communities)
    members = [np.flatnonzero(labels == c) for c in range(num_communities)]
    sizes = np.array([len(m) for m in members], dtype=float)
    intra_pairs = (sizes * (sizes - 1) / 2).sum()
    inter_pairs = num_nodes * (num_nodes - 1) / 2 - intra_pairs
    p_intra = ratio * intra_pairs / (ratio * intra_pairs + inter_pairs)
    intra_weights = sizes * (sizes - 1)
    intra_weights /= intra_weights.sum()

    src = np.empty(num_edges, dtype=np.int64)
    dst = np.empty(num_edges, dtype=np.int64)
    for e in range(num_edges):
        if rng.random() < p_intra:
            c = rng.choice(num_communities, p=intra_weights)
            a, b = rng.choice(members[c], size=2, replace=False)
        else:
            while True:
                a, b = rng.choice(num_nodes, size=2, replace=False)
                if labels[a] != labels[b]:
                    break
        src[e], dst[e] = a, b
    ts = np.sort(rng.uniform(t_span[0], t_span[1], size=num_edges))
    # pin the span exactly so window arithmetic in tests is clean
    ts[0], ts[-1] = t_span

    X = rng.standard_normal((num_nodes, feature_dim))
    if feature_signal:
        dirs = rng.standard_normal((num_communities, feature_dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        X += feature_signal * dirs[labels]
    return TemporalGraph(num_nodes, src, dst, ts, features=X, labels=labels)
