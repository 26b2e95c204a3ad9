"""InfoNCE and the composite objectives over several timespan views.

``tables`` throughout is a list with one dict per view, mapping ``"local"``
(and for CLDG++ also ``"global"``) to an ``N x d`` matrix of unit rows; row i
refers to the same node in every table.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DimensionError, PreconditionError

MODES = ("cldg", "cldgpp")
TERMS = ("ll", "gg", "lg")


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.2
    mode: str = "cldg"
    term_weights: dict = field(default_factory=lambda: {"ll": 1.0, "gg": 1.0, "lg": 1.0})

    def validate(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown loss mode {self.mode!r}")

    def __hash__(self):
        return hash((self.tau, self.mode, tuple(sorted(self.term_weights.items()))))


def info_nce(anchor: np.ndarray, positive: np.ndarray, tau: float):
    """Mean over rows of -log softmax_j(anchor_i . positive_j / tau)[i].

    The denominator runs over every j, including j = i. Returns
    ``(loss, d_anchor, d_positive)``.
    """
    if anchor.shape[0] == 0:
        raise PreconditionError("empty batch")
    if anchor.shape != positive.shape:
        raise DimensionError(f"row mismatch: {anchor.shape} vs {positive.shape}")
    n = anchor.shape[0]
    logits = anchor @ positive.T / tau
    lse = logsumexp(logits, axis=1)
    loss = float(np.mean(lse - np.diag(logits)))
    P = np.exp(logits - lse[:, None])
    P[np.diag_indices(n)] -= 1.0
    P /= n
    return loss, P @ positive / tau, P.T @ anchor / tau


def term_counts(num_views: int, mode: str) -> Counter:
    """How often each (scope_a, view_a, scope_b, view_b) contrast occurs in the
    sum over ordered view pairs."""
    counts = Counter()
    for q in range(num_views):
        for k in range(num_views):
            if k == q:
                continue
            counts[("local", q, "local", k, "ll")] += 1
            if mode == "cldgpp":
                counts[("global", q, "global", k, "gg")] += 1
                counts[("local", q, "global", q, "lg")] += 1
                counts[("local", k, "global", k, "lg")] += 1
    return counts


def composite_loss(tables: list, cfg: LossConfig):
    """Sum of contrast terms over ordered view pairs (q, k), q != k.

    Each distinct contrast is evaluated once and weighted by its multiplicity.
    Returns ``(loss, grads)`` with ``grads`` shaped like ``tables``.
    """
    cfg.validate()
    V = len(tables)
    if V < 2:
        raise PreconditionError(f"need at least 2 views, got {V}")
    scopes = ("local",) if cfg.mode == "cldg" else ("local", "global")
    n = None
    for t in tables:
        for sc in scopes:
            if sc not in t:
                raise PreconditionError(f"view table lacks {sc!r} embeddings")
            if n is None:
                n = t[sc].shape[0]
            elif t[sc].shape[0] != n:
                raise DimensionError("view tables disagree on batch size")
    grads = [{sc: np.zeros_like(t[sc]) for sc in scopes} for t in tables]
    total = 0.0
    for (sa, qa, sb, qb, term), count in sorted(term_counts(V, cfg.mode).items()):
        w = count * cfg.term_weights.get(term, 1.0)
        if w == 0:
            continue
        val, da, db = info_nce(tables[qa][sa], tables[qb][sb], cfg.tau)
        total += w * val
        grads[qa][sa] += w * da
        grads[qb][sb] += w * db
    return total, grads
