"""Anomaly injection and the temporal-consistency anomaly score.

A node's score is the mean plus the population standard deviation of the
cosine distances between its local embeddings in every ordered pair of
sequential inference windows in which it is active. Nodes whose
representation drifts between windows score high.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionError, PreconditionError
from .evaluation import encode_views
from .model import ModelParams
from .rng import substream
from .sampler import all_sequential_views
from .temporal_graph import TemporalGraph, sequential_grid


@dataclass(frozen=True)
class InjectionConfig:
    num_structural_cliques: int = 10
    clique_size: int = 15
    num_attribute_anomalies: int = 50
    k_candidates: int = 50
    seed: int = 0

    def validate(self):
        if self.clique_size < 2:
            raise PreconditionError("clique_size must be >= 2")
        if self.k_candidates < 1:
            raise PreconditionError("k_candidates must be >= 1")
        if self.num_structural_cliques < 0 or self.num_attribute_anomalies < 0:
            raise PreconditionError("anomaly counts must be non-negative")


def cliques_for_budget(total: int, clique_size: int = 15) -> int:
    """Number of whole cliques spent on a structural-anomaly budget of ``total`` nodes."""
    if clique_size < 2:
        raise PreconditionError("clique_size must be >= 2")
    return total // clique_size


def _truth_of(g: TemporalGraph, truth) -> np.ndarray:
    return np.zeros(g.num_nodes, dtype=np.int64) if truth is None else np.asarray(truth, dtype=np.int64).copy()


def inject_structural(g: TemporalGraph, cfg: InjectionConfig, rng: np.random.Generator, truth=None):
    """Turn disjoint random node groups into cliques, each stamped with one
    uniformly drawn timestamp. Returns ``(graph, truth)``."""
    cfg.validate()
    truth = _truth_of(g, truth)
    need = cfg.num_structural_cliques * cfg.clique_size
    pool = np.flatnonzero(truth == 0)
    if need > len(pool):
        raise PreconditionError(
            f"{cfg.num_structural_cliques} cliques of {cfg.clique_size} need {need} nodes, "
            f"only {len(pool)} available"
        )
    if need == 0:
        return g, truth
    members = rng.choice(pool, size=need, replace=False).reshape(cfg.num_structural_cliques, cfg.clique_size)
    t_lo, t_hi = g.t_min, g.t_max
    src, dst, ts = [g.src], [g.dst], [g.ts]
    iu, ju = np.triu_indices(cfg.clique_size, k=1)
    for clique in members:
        clique = np.sort(clique)
        stamp = rng.uniform(t_lo, t_hi)
        src.append(clique[iu])
        dst.append(clique[ju])
        ts.append(np.full(len(iu), stamp))
        truth[clique] = 1
    g2 = g.replace(src=np.concatenate(src), dst=np.concatenate(dst), ts=np.concatenate(ts))
    return g2, truth


def farthest_candidate(X: np.ndarray, target: int, candidates: np.ndarray) -> int:
    """Candidate with the largest Euclidean distance to ``target``; lowest id on ties."""
    candidates = np.sort(np.asarray(candidates))
    d = np.linalg.norm(X[candidates] - X[target], axis=1)
    return int(candidates[int(np.argmax(d))])


def inject_attribute(g: TemporalGraph, cfg: InjectionConfig, rng: np.random.Generator, s: int,
                     truth=None):
    """Swap a target's features for those of the farthest of ``k`` random
    candidates, in one randomly chosen window of the ``s``-way sequential
    partition only. Returns ``(graph with per-span overrides, truth)``."""
    cfg.validate()
    if g.features is None:
        raise PreconditionError("attribute anomalies need node features")
    if s < 1:
        raise PreconditionError("s must be >= 1")
    truth = _truth_of(g, truth)
    pool = np.flatnonzero(truth == 0)
    if cfg.num_attribute_anomalies > len(pool):
        raise PreconditionError(f"only {len(pool)} nodes left for attribute anomalies")
    if cfg.num_attribute_anomalies == 0:
        return g, truth
    X = g.features
    grid = sequential_grid(g, s)
    targets = rng.choice(pool, size=cfg.num_attribute_anomalies, replace=False)
    nodes, bounds, rows = [], [], []
    everyone = np.arange(g.num_nodes)
    for target in targets:
        others = everyone[everyone != target]
        k = min(cfg.k_candidates, len(others))
        cand = rng.choice(others, size=k, replace=False)
        source = farthest_candidate(X, int(target), cand)
        span = int(rng.integers(s))
        lo, hi, _ = grid[span]
        nodes.append(int(target))
        bounds.append((lo, hi))
        rows.append(X[source].copy())
        truth[target] = 1
    ov_nodes = np.array(nodes, dtype=np.int64)
    ov_bounds = np.array(bounds, dtype=np.float64)
    ov_rows = np.array(rows, dtype=np.float64)
    if g.override_nodes is not None:
        ov_nodes = np.concatenate([g.override_nodes, ov_nodes])
        ov_bounds = np.concatenate([g.override_bounds, ov_bounds])
        ov_rows = np.concatenate([g.override_rows, ov_rows])
    g2 = g.replace(override_nodes=ov_nodes, override_bounds=ov_bounds, override_rows=ov_rows)
    return g2, truth


def inject_anomalies(g: TemporalGraph, cfg: InjectionConfig, s: int = 4):
    """Structural cliques, then attribute anomalies on the remaining nodes.

    The returned graph carries the 0/1 truth vector as its labels.
    """
    g1, truth = inject_structural(g, cfg, substream(cfg.seed, "inject-structural"))
    g2, truth = inject_attribute(g1, cfg, substream(cfg.seed, "inject-attribute"), s, truth)
    return g2.replace(labels=truth), truth


def mean_span_features(g: TemporalGraph, s: int) -> np.ndarray:
    """Average over the ``s`` sequential windows of each node's features, for
    consumers that cannot take per-window inputs."""
    X = g.features.copy()
    if g.override_nodes is None:
        return X
    for node, row in zip(g.override_nodes, g.override_rows):
        X[node] += (row - g.features[node]) / s
    return X


# --
# Scoring


@dataclass
class AnomalyScoreTable:
    scores: np.ndarray
    views_used: np.ndarray
    inactive: np.ndarray  # fewer than two active views; score pinned to 0


def score_from_distances(D: np.ndarray, pair: np.ndarray):
    """Mean plus population std of ``D[i, q, k]`` over the pairs selected by
    ``pair[i, q, k]``; rows with no selected pair score 0."""
    count = pair.sum(axis=(1, 2))
    ok = count > 0
    n = D.shape[0]
    mean = np.zeros(n)
    std = np.zeros(n)
    mean[ok] = (D * pair).sum(axis=(1, 2))[ok] / count[ok]
    dev = (D - mean[:, None, None]) ** 2 * pair
    std[ok] = np.sqrt(dev.sum(axis=(1, 2))[ok] / count[ok])
    return mean + std


def consistency_scores(Z: np.ndarray, mask: np.ndarray):
    """Scores from stacked per-view embeddings.

    ``Z`` is ``V x n x d`` and ``mask[q, i]`` says whether node i is active in
    view q. Distances run over ordered pairs of distinct views in which the
    node is active. Returns ``(scores, views_used)``.
    """
    V = Z.shape[0]
    norms = np.linalg.norm(Z, axis=2)
    safe = np.where(norms > 0, norms, 1.0)
    U = Z / safe[:, :, None]
    cos = np.einsum("qnd,knd->nqk", U, U)
    D = np.clip(1.0 - cos, 0.0, 2.0)
    m = mask.T.astype(bool)
    pair = m[:, :, None] & m[:, None, :]
    pair &= ~np.eye(V, dtype=bool)[None]
    return score_from_distances(D, pair), m.sum(axis=1)


def anomaly_scores(g: TemporalGraph, params: ModelParams, v_views: int = 4,
                   X: np.ndarray | None = None) -> AnomalyScoreTable:
    """Encode every window of the ``v_views``-way sequential partition with the
    local encoder and score each node by its cross-window inconsistency."""
    if v_views < 2:
        raise PreconditionError("v_views must be >= 2")
    if X is None:
        from .trainer import node_features
        X = node_features(g, params.d_in)
    if X.shape[1] != params.d_in:
        raise DimensionError(f"features have {X.shape[1]} columns, model expects {params.d_in}")
    encoded = encode_views(g, params, X, all_sequential_views(g, v_views))
    Z = np.zeros((v_views, g.num_nodes, params.d_out))
    mask = np.zeros((v_views, g.num_nodes), dtype=bool)
    for q, (nodes, z) in enumerate(encoded):
        Z[q, nodes] = z
        mask[q, nodes] = True
    scores, used = consistency_scores(Z, mask)
    return AnomalyScoreTable(scores, used, used < 2)


def auc(scores, truth) -> float:
    """Rank-based ROC AUC: P(anomalous > normal) + P(tie) / 2."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise DimensionError("scores and truth differ in length")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise PreconditionError("AUC needs both anomalous and normal nodes")
    ranks = rankdata(scores)
    return float((ranks[truth].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
