"""Normalized adjacency and graph diffusion (personalized PageRank, heat kernel).

Exact paths return dense matrices. Approximate paths work on blocks of rows
using only sparse products, truncate every row to its ``topk`` largest
entries and rescale the row back to its pre-truncation mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .errors import ConfigError, DimensionError, NumericError

EXACT_NODE_CAP = 5000
BLOCK_ROWS = 256


@dataclass(frozen=True)
class DiffusionConfig:
    kind: str = "ppr"
    alpha: float = 0.15
    t: float = 5.0
    mode: str = "auto"  # auto | exact | approximate
    topk: int = 128
    taylor_terms: int = 0  # 0 = choose from the remainder bound at ``tol``
    tol: float = 1e-9
    exact_cap: int = EXACT_NODE_CAP

    def validate(self) -> None:
        if self.kind not in ("ppr", "heat"):
            raise ConfigError(f"unknown diffusion kind {self.kind!r}")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.t < 0:
            raise ConfigError(f"t must be >= 0, got {self.t}")
        if self.mode not in ("auto", "exact", "approximate"):
            raise ConfigError(f"unknown diffusion mode {self.mode!r}")
        if self.topk < 1:
            raise ConfigError("topk must be >= 1")
        if self.taylor_terms < 0:
            raise ConfigError("taylor_terms must be >= 1 (or 0 for automatic)")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")


def _check_square(adj):
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise DimensionError(f"adjacency must be square, got shape {adj.shape}")


def _inv_sqrt(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d, dtype=np.float64)
    nz = d > 0
    out[nz] = 1.0 / np.sqrt(d[nz])
    return out


def sym_normalize(adj, add_self_loops: bool = False) -> sp.csr_matrix:
    """D^-1/2 A D^-1/2, optionally on A + I. Isolated nodes give zero rows."""
    _check_square(adj)
    A = sp.csr_matrix(adj, dtype=np.float64)
    if add_self_loops:
        A = (A + sp.identity(A.shape[0], format="csr")).tocsr()
    d = np.asarray(A.sum(axis=1)).ravel()
    r = sp.diags(_inv_sqrt(d))
    return (r @ A @ r).tocsr()


def column_normalize(adj) -> sp.csr_matrix:
    """A D^-1; columns of isolated nodes stay zero."""
    _check_square(adj)
    A = sp.csr_matrix(adj, dtype=np.float64)
    d = np.asarray(A.sum(axis=0)).ravel()
    inv = np.zeros_like(d)
    inv[d > 0] = 1.0 / d[d > 0]
    return (A @ sp.diags(inv)).tocsr()


# --
# Personalized PageRank


def ppr_exact(adj, alpha: float, cap: int = EXACT_NODE_CAP) -> np.ndarray:
    """alpha (I - (1 - alpha) D^-1/2 A D^-1/2)^-1 by a dense solve."""
    _check_square(adj)
    n = adj.shape[0]
    if n > cap:
        raise ConfigError(f"exact diffusion limited to {cap} nodes, view has {n}")
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    T = sym_normalize(adj).toarray()
    M = np.eye(n) - (1 - alpha) * T
    try:
        S = alpha * np.linalg.solve(M, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"PPR system is singular: {exc}") from None
    return S


def _ppr_columns(Tt: sp.csr_matrix, cols: np.ndarray, alpha: float, tol: float, max_iter: int):
    """Columns ``cols`` of alpha (I - (1 - alpha) Tt)^-1 by fixed-point iteration.

    Stops once the a-posteriori bound (1-a)/a * ||delta||_2 on every column's
    remaining error drops below ``tol``; that bounds each entry's error too.
    """
    n = Tt.shape[0]
    E = np.zeros((n, len(cols)))
    E[cols, np.arange(len(cols))] = alpha
    S = E.copy()
    if alpha >= 1:
        return S, 1
    ratio = (1 - alpha) / alpha
    for it in range(1, max_iter + 1):
        nxt = E + (1 - alpha) * (Tt @ S)
        delta = np.sqrt(((nxt - S) ** 2).sum(axis=0)).max() if len(cols) else 0.0
        S = nxt
        if ratio * delta < tol:
            return S, it
    raise NumericError(
        f"PPR power iteration did not converge in {max_iter} iterations "
        f"(residual bound {ratio * delta:.3e} > tol {tol:.3e})"
    )


def truncate_rows(rows: np.ndarray, topk: int) -> sp.csr_matrix:
    """Keep the ``topk`` largest entries per row; rescale to the original row sum.

    Ties are broken toward the lower column index.
    """
    n_rows, n_cols = rows.shape
    if topk >= n_cols:
        return sp.csr_matrix(rows)
    # stable sort on the negated values keeps lower indices first on ties
    idx = np.argsort(-rows, axis=1, kind="stable")[:, :topk]
    vals = np.take_along_axis(rows, idx, axis=1)
    full = rows.sum(axis=1)
    kept = vals.sum(axis=1)
    scale = np.ones(n_rows)
    ok = kept != 0
    scale[ok] = full[ok] / kept[ok]
    vals = vals * scale[:, None]
    indptr = np.arange(0, n_rows * topk + 1, topk)
    out = sp.csr_matrix((vals.ravel(), idx.ravel(), indptr), shape=(n_rows, n_cols))
    out.sort_indices()
    out.eliminate_zeros()
    return out


def ppr_approx(adj, alpha: float, tol: float = 1e-9, topk: int = 128,
               max_iter: int = 1000, truncate: bool = True):
    """Power-iteration PPR followed by per-row top-k truncation.

    With ``truncate=False`` the converged dense matrix is returned, which is
    what the exactness checks compare against the closed form.
    """
    _check_square(adj)
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    n = adj.shape[0]
    # row r of S is column r of S^T = alpha (I - (1-alpha) T^T)^-1
    Tt = sym_normalize(adj).T.tocsr()
    blocks = []
    for start in range(0, n, BLOCK_ROWS):
        cols = np.arange(start, min(n, start + BLOCK_ROWS))
        S_cols, _ = _ppr_columns(Tt, cols, alpha, tol, max_iter)
        rows = S_cols.T
        blocks.append(truncate_rows(rows, topk) if truncate else rows)
    if not blocks:
        return sp.csr_matrix((0, 0)) if truncate else np.zeros((0, 0))
    return sp.vstack(blocks).tocsr() if truncate else np.vstack(blocks)


# --
# Heat kernel


def heat_remainder(t: float, terms: int) -> float:
    """Bound on the 1-norm error of the series truncated after ``terms``.

    All series terms are non-negative and A D^-1 has column sums <= 1, so the
    dropped mass is at most the Poisson(t) upper tail P(N > terms).
    """
    if t == 0:
        return 0.0
    return float(poisson.sf(terms, t))


def heat_terms_for_tol(t: float, tol: float) -> int:
    k = 1
    while heat_remainder(t, k) > tol:
        k += 1
    return k


def _heat_series(Mt: sp.csr_matrix, cols: np.ndarray, t: float, terms: int) -> np.ndarray:
    # sum_k Poisson(k; t) * Mt^k e_cols; the weights absorb e^-t and avoid overflow
    n = Mt.shape[0]
    P = np.zeros((n, len(cols)))
    P[cols, np.arange(len(cols))] = 1.0
    weights = poisson.pmf(np.arange(terms + 1), t)
    S = weights[0] * P
    for k in range(1, terms + 1):
        P = Mt @ P
        S += weights[k] * P
    return S


def heat_kernel(adj, t: float, taylor_terms: int = 0, tol: float | None = None,
                topk: int | None = None):
    """exp(t A D^-1 - t) by a truncated Taylor series.

    ``taylor_terms`` = 0 picks the smallest order whose remainder bound is
    below ``tol`` (default 1e-9). If both are given and the bound exceeds
    ``tol`` a :class:`NumericError` suggests a sufficient order. Returns
    ``(S, remainder_bound)``; S is dense, or top-k sparse when ``topk`` is set.
    """
    _check_square(adj)
    if t < 0:
        raise ConfigError(f"t must be >= 0, got {t}")
    n = adj.shape[0]
    if taylor_terms <= 0:
        taylor_terms = heat_terms_for_tol(t, 1e-9 if tol is None else tol)
    bound = heat_remainder(t, taylor_terms)
    if tol is not None and bound > tol:
        raise NumericError(
            f"{taylor_terms} Taylor terms leave remainder bound {bound:.3e} > tol {tol:.3e}; "
            f"use at least {heat_terms_for_tol(t, tol)} terms"
        )
    M = column_normalize(adj)
    if topk is None:
        S = _heat_series(M, np.arange(n), t, taylor_terms)
        return S, bound
    # rows of S are columns of S^T = exp(t M^T - t)
    Mt = M.T.tocsr()
    blocks = []
    for start in range(0, n, BLOCK_ROWS):
        cols = np.arange(start, min(n, start + BLOCK_ROWS))
        blocks.append(truncate_rows(_heat_series(Mt, cols, t, taylor_terms).T, topk))
    if not blocks:
        return sp.csr_matrix((0, 0)), bound
    return sp.vstack(blocks).tocsr(), bound


# --
# Per-view entry point


def diffuse(adj, cfg: DiffusionConfig):
    """Diffusion matrix of one view's adjacency according to ``cfg``."""
    cfg.validate()
    n = adj.shape[0]
    exact = cfg.mode == "exact" or (cfg.mode == "auto" and n <= cfg.exact_cap)
    if cfg.kind == "ppr":
        if exact:
            return ppr_exact(adj, cfg.alpha, cap=n if cfg.mode == "exact" else cfg.exact_cap)
        if cfg.alpha >= 1:
            return sp.identity(n, format="csr")
        return ppr_approx(adj, cfg.alpha, tol=cfg.tol, topk=cfg.topk)
    S, _ = heat_kernel(adj, cfg.t, cfg.taylor_terms,
                       tol=None if cfg.taylor_terms else cfg.tol,
                       topk=None if exact else cfg.topk)
    return S


class DiffusionCache:
    """Memoizes diffusion matrices by (quantized window, config)."""

    def __init__(self, decimals: int = 9):
        self.decimals = decimals
        self._store: dict = {}
        self.hits = 0
        self.misses = 0

    def key(self, window, cfg: DiffusionConfig):
        lo, hi = window
        return (round(lo, self.decimals), round(hi, self.decimals), cfg)

    def get(self, view, cfg: DiffusionConfig):
        k = self.key(view.window, cfg)
        if k in self._store:
            self.hits += 1
            return self._store[k]
        self.misses += 1
        S = diffuse(view.local_adj, cfg)
        self._store[k] = S
        return S

    def __len__(self):
        return len(self._store)
