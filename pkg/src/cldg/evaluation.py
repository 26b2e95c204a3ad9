"""Frozen-embedding evaluation: cross-view embeddings, 1:1:8 splits and a
softmax-regression probe trained with Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, PreconditionError
from .model import ModelParams, encode
from .diffusion import sym_normalize
from .rng import substream
from .sampler import all_sequential_views
from .temporal_graph import TemporalGraph, view_features


def encode_views(g: TemporalGraph, params: ModelParams, X: np.ndarray, views: list) -> list:
    """Local-scope z for every active node of each view: list of (nodes, z)."""
    out = []
    for view in views:
        prop = sym_normalize(view.local_adj, add_self_loops=True)
        z, _ = encode(params, prop, view_features(g, view, X), "local")
        out.append((view.active_nodes, z))
    return out


def final_embeddings(g: TemporalGraph, params: ModelParams, X: np.ndarray, s: int = 4):
    """Mean of each node's local z over the ``s`` sequential windows, renormalized.

    Returns ``(emb, flagged)``; flagged nodes (never active, or whose mean
    vanishes) keep a zero row.
    """
    total = np.zeros((g.num_nodes, params.d_out))
    count = np.zeros(g.num_nodes, dtype=np.int64)
    for nodes, z in encode_views(g, params, X, all_sequential_views(g, s)):
        total[nodes] += z
        count[nodes] += 1
    norm = np.linalg.norm(total, axis=1)
    flagged = (count == 0) | (norm < 1e-12)
    emb = np.zeros_like(total)
    ok = ~flagged
    emb[ok] = total[ok] / norm[ok, None]
    return emb, flagged


# --
# Splits


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple = (1, 1, 8)
    seed: int = 0
    stratified: bool = True


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder integer allocation of ``total`` proportional to ``weights``."""
    raw = total * weights / weights.sum()
    base = np.floor(raw).astype(np.int64)
    rest = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return base


def split_nodes(labels: np.ndarray, spec: SplitSpec = SplitSpec()):
    """Partition labelled nodes (label >= 0) into train/val/test index arrays.

    Split sizes are rounded from the global ratios; with ``stratified`` each
    class is apportioned across splits in proportion to its size, and every
    class gets at least one training node.
    """
    labels = np.asarray(labels)
    idx = np.flatnonzero(labels >= 0)
    n = len(idx)
    r = np.asarray(spec.ratios, dtype=float)
    n_train = int(round(n * r[0] / r.sum()))
    n_val = int(round(n * r[1] / r.sum()))
    rng = substream(spec.seed, "split")
    if not spec.stratified:
        perm = rng.permutation(idx)
        return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]

    classes, counts = np.unique(labels[idx], return_counts=True)
    if n_train < len(classes):
        raise PreconditionError(f"train split of {n_train} nodes cannot cover {len(classes)} classes")
    tr_q = _apportion(n_train, counts.astype(float))
    # every class needs a training example; take it from the best-stocked classes
    while (tr_q == 0).any():
        tr_q[np.argmax(tr_q)] -= 1
        tr_q[np.flatnonzero(tr_q == 0)[0]] += 1
    va_q = _apportion(n_val, (counts - tr_q).astype(float))
    train, val, test = [], [], []
    for c, tq, vq in zip(classes, tr_q, va_q):
        members = rng.permutation(idx[labels[idx] == c])
        train.append(members[:tq])
        val.append(members[tq:tq + vq])
        test.append(members[tq + vq:])
    return tuple(np.sort(np.concatenate(part)) for part in (train, val, test))


# --
# Metrics


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionError("pred and truth differ in length")
    return float(np.mean(pred == truth))


def weighted_f1(pred, truth) -> float:
    """Support-weighted mean of per-class F1 over the classes present in ``truth``."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionError("pred and truth differ in length")
    if truth.size == 0:
        raise PreconditionError("empty truth vector")
    total = 0.0
    for c in np.unique(truth):
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if tp else 0.0
        total += (tp + fn) * f1
    return float(total / truth.size)


# --
# Linear probe


@dataclass
class LinearClassifier:
    W: np.ndarray
    b: np.ndarray
    classes: np.ndarray

    def predict(self, emb: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(emb @ self.W + self.b, axis=1)]


def fit_probe(emb_train, y_train, emb_val, y_val, epochs: int = 300, lr: float = 1e-2,
              weight_decay: float = 1e-4, seed: int = 0) -> LinearClassifier:
    """Full-batch softmax regression with Adam.

    Keeps the epoch with the best validation accuracy; ties go to the lower
    validation cross-entropy.
    """
    from .trainer import AdamState, adam_step

    classes = np.unique(y_train)
    if len(y_val) and not np.isin(y_val, classes).all():
        missing = np.setdiff1d(np.unique(y_val), classes)
        raise PreconditionError(f"classes {missing.tolist()} absent from the training split")
    cls_index = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((len(y_train), len(classes)))
    Y[np.arange(len(y_train)), [cls_index[c] for c in y_train]] = 1.0
    rng = substream(seed, "probe")
    bound = np.sqrt(6.0 / (emb_train.shape[1] + len(classes)))
    params = {"W": rng.uniform(-bound, bound, (emb_train.shape[1], len(classes))),
              "b": np.zeros(len(classes))}
    state = AdamState()
    best, best_key = None, None
    n = len(y_train)
    val_idx = np.array([cls_index[c] for c in y_val], dtype=np.int64)
    for _ in range(epochs):
        logits = emb_train @ params["W"] + params["b"]
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        dlogits = (P - Y) / n
        grads = {"W": emb_train.T @ dlogits, "b": dlogits.sum(axis=0)}
        adam_step(params, grads, state, lr, weight_decay)
        if not len(y_val):
            continue
        val_logits = emb_val @ params["W"] + params["b"]
        acc = float(np.mean(np.argmax(val_logits, axis=1) == val_idx))
        xent = float(np.mean(logsumexp(val_logits, axis=1) - val_logits[np.arange(len(val_idx)), val_idx]))
        # validation accuracy first; cross-entropy separates the many ties of a small split
        key = (acc, -xent)
        if best_key is None or key > best_key:
            best_key = key
            best = LinearClassifier(params["W"].copy(), params["b"].copy(), classes)
    if best is None:
        best = LinearClassifier(params["W"].copy(), params["b"].copy(), classes)
    return best


def linear_probe(emb: np.ndarray, labels: np.ndarray, split: SplitSpec = SplitSpec(),
                 epochs: int = 300, return_predictions: bool = False):
    """Fit on the train split, select on val, report (accuracy, weighted F1) on test."""
    if labels is None:
        raise PreconditionError("linear probe needs labels")
    labels = np.asarray(labels)
    train, val, test = split_nodes(labels, split)
    clf = fit_probe(emb[train], labels[train], emb[val], labels[val], epochs=epochs, seed=split.seed)
    pred = clf.predict(emb[test])
    # test labels are touched only here
    truth = labels[test]
    result = (accuracy(pred, truth), weighted_f1(pred, truth))
    if return_predictions:
        return result, (test, pred)
    return result
