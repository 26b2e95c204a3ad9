"""Continuous-time dynamic graphs: data model, ingestion, windowed views and
the ``TGV1`` binary container.

Edges are kept as three parallel arrays (``src``, ``dst``, ``ts``) in the order
they were read. A timestamp-sorted permutation is cached so that a window query
is two binary searches.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, FormatError, ParseError, PreconditionError

MAGIC = b"TGV1"
VERSION = 1

_FLAG_FEATURES = 1
_FLAG_LABELS = 2
_FLAG_NAMES = 4
_FLAG_OVERRIDES = 8

# slack used when checking that a center lies inside its admissible interval
_RANGE_EPS = 1e-12


@dataclass
class TemporalGraph:
    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    ts: np.ndarray
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    node_names: Optional[list] = None
    # per-span feature replacements: node id, [lo, hi) time bounds, replacement row
    override_nodes: Optional[np.ndarray] = None
    override_bounds: Optional[np.ndarray] = None
    override_rows: Optional[np.ndarray] = None
    _order: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.num_nodes = int(self.num_nodes)
        self.src = np.ascontiguousarray(self.src, dtype=np.int64)
        self.dst = np.ascontiguousarray(self.dst, dtype=np.int64)
        self.ts = np.ascontiguousarray(self.ts, dtype=np.float64)
        if not (len(self.src) == len(self.dst) == len(self.ts)):
            raise DimensionError("src, dst and ts must have equal length")
        if len(self.src):
            lo = min(self.src.min(), self.dst.min())
            hi = max(self.src.max(), self.dst.max())
            if lo < 0 or hi >= self.num_nodes:
                raise DimensionError(f"edge endpoint out of range [0, {self.num_nodes})")
            if not np.all(np.isfinite(self.ts)):
                raise DimensionError("timestamps must be finite")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
                raise DimensionError(
                    f"feature matrix has {self.features.shape[0]} rows, expected {self.num_nodes}"
                )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.num_nodes,):
                raise DimensionError(
                    f"label vector has length {len(self.labels)}, expected {self.num_nodes}"
                )
        if self.node_names is not None and len(self.node_names) != self.num_nodes:
            raise DimensionError("node_names length differs from num_nodes")
        if self.override_nodes is not None:
            if self.features is None:
                raise DimensionError("feature overrides require a feature matrix")
            self.override_nodes = np.asarray(self.override_nodes, dtype=np.int64)
            self.override_bounds = np.asarray(self.override_bounds, dtype=np.float64).reshape(-1, 2)
            self.override_rows = np.asarray(self.override_rows, dtype=np.float64).reshape(
                -1, self.features.shape[1]
            )
            k = len(self.override_nodes)
            if len(self.override_bounds) != k or len(self.override_rows) != k:
                raise DimensionError("override arrays have inconsistent lengths")
        self._order = np.argsort(self.ts, kind="stable")

    @property
    def num_edges(self) -> int:
        return len(self.ts)

    @property
    def t_min(self) -> float:
        return float(self.ts.min())

    @property
    def t_max(self) -> float:
        return float(self.ts.max())

    @property
    def span(self) -> float:
        return self.t_max - self.t_min

    def degrees(self) -> np.ndarray:
        """Number of temporal edges incident to each node."""
        return np.bincount(self.src, minlength=self.num_nodes) + np.bincount(
            self.dst, minlength=self.num_nodes
        )

    def edge_mask(self, lo: float, hi: float, include_hi: bool = True) -> np.ndarray:
        """Indices (into the original edge arrays) of edges with ``lo <= ts <= hi``
        (or ``< hi`` when ``include_hi`` is false)."""
        sorted_ts = self.ts[self._order]
        a = np.searchsorted(sorted_ts, lo, side="left")
        b = np.searchsorted(sorted_ts, hi, side="right" if include_hi else "left")
        return np.sort(self._order[a:b])

    def replace(self, **changes) -> "TemporalGraph":
        fields = dict(
            num_nodes=self.num_nodes,
            src=self.src,
            dst=self.dst,
            ts=self.ts,
            features=self.features,
            labels=self.labels,
            node_names=self.node_names,
            override_nodes=self.override_nodes,
            override_bounds=self.override_bounds,
            override_rows=self.override_rows,
        )
        fields.update(changes)
        return TemporalGraph(**fields)


@dataclass
class GraphView:
    window: tuple
    center: float
    active_nodes: np.ndarray
    local_adj: sp.csr_matrix
    num_edges: int = 0

    @property
    def num_active(self) -> int:
        return len(self.active_nodes)


def check_trainable(g: TemporalGraph) -> None:
    if g.num_edges == 0:
        raise PreconditionError("no edges")
    if not g.span > 0:
        raise PreconditionError("timestamps span zero time; need max(ts) > min(ts)")


# --
# Ingestion


def _split_line(line: str) -> list:
    if "\t" in line:
        parts = line.split("\t")
    elif "," in line:
        parts = line.split(",")
    else:
        parts = line.split()
    return [p.strip() for p in parts]


def ingest_edge_list(path, feature_path=None, label_path=None) -> TemporalGraph:
    """Read a ``src dst ts`` edge file (tab, comma or whitespace separated).

    Node tokens are arbitrary strings, numbered densely in first-seen order.
    ``feature_path`` is a CSV whose row i belongs to node i; ``label_path``
    holds ``node_token<TAB>class`` lines. Nodes missing from the label file
    get label -1.
    """
    ids: dict = {}
    names: list = []
    src, dst, ts = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = _split_line(line)
            if len(parts) < 3:
                raise ParseError(f"expected 'src dst ts', got {line!r}", lineno)
            try:
                t = float(parts[2])
            except ValueError:
                raise ParseError(f"timestamp {parts[2]!r} is not a number", lineno) from None
            if not np.isfinite(t):
                raise ParseError(f"timestamp {parts[2]!r} is not finite", lineno)
            pair = []
            for tok in parts[:2]:
                if tok == "":
                    raise ParseError("empty node token", lineno)
                if tok not in ids:
                    ids[tok] = len(names)
                    names.append(tok)
                pair.append(ids[tok])
            src.append(pair[0])
            dst.append(pair[1])
            ts.append(t)
    if not ts:
        raise ParseError("no edges")
    n = len(names)

    features = None
    if feature_path is not None:
        with open(feature_path, "r", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        try:
            features = np.array([[float(x) for x in r] for r in rows], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"bad feature value: {exc}") from None
        if features.ndim != 2 or features.shape[0] != n:
            raise DimensionError(
                f"feature file has {len(rows)} rows but the edge list has {n} nodes"
            )

    labels = None
    if label_path is not None:
        labels = np.full(n, -1, dtype=np.int64)
        class_ids: dict = {}
        with open(label_path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = _split_line(line)
                if len(parts) < 2:
                    raise ParseError(f"expected 'node class', got {line!r}", lineno)
                tok, cls = parts[0], parts[1]
                if tok not in ids:
                    raise DimensionError(f"line {lineno}: label for unknown node {tok!r}")
                try:
                    labels[ids[tok]] = int(cls)
                except ValueError:
                    labels[ids[tok]] = class_ids.setdefault(cls, len(class_ids))

    return TemporalGraph(n, np.array(src), np.array(dst), np.array(ts),
                         features=features, labels=labels, node_names=names)


def default_features(g: TemporalGraph, dim: int) -> np.ndarray:
    """One-hot bucket of floor(log2(1 + degree)), clipped to ``dim`` buckets."""
    if dim < 1:
        raise DimensionError("dim must be >= 1")
    deg = g.degrees()
    # exact integer floor(log2(1 + d)) via bit length, avoids float rounding at powers of two
    bucket = np.array([int(d + 1).bit_length() - 1 for d in deg], dtype=np.int64)
    bucket = np.minimum(bucket, dim - 1)
    X = np.zeros((g.num_nodes, dim))
    X[np.arange(g.num_nodes), bucket] = 1.0
    return X


# --
# Views


def view_window(g: TemporalGraph, center: float, s: int) -> tuple:
    half = g.span / (2 * s)
    lo_c, hi_c = g.t_min + half, g.t_max - half
    tol = _RANGE_EPS * max(1.0, abs(g.t_min), abs(g.t_max))
    if center < lo_c - tol or center > hi_c + tol:
        raise PreconditionError(
            f"center {center} outside admissible interval [{lo_c}, {hi_c}] for s={s}"
        )
    return center - half, center + half


def induce_window(g: TemporalGraph, lo: float, hi: float, center: float,
                  include_hi: bool = True) -> GraphView:
    """Subgraph of edges with timestamps in ``[lo, hi]`` (``[lo, hi)`` if
    ``include_hi`` is false), symmetrized, deduplicated, unit weights.

    Self-interactions make a node active but add no adjacency entry.
    """
    idx = g.edge_mask(lo, hi, include_hi)
    s, d = g.src[idx], g.dst[idx]
    active = np.unique(np.concatenate([s, d]))
    local = np.searchsorted(active, np.concatenate([s, d]))
    m = len(idx)
    rows, cols = local[:m], local[m:]
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    n = len(active)
    adj = sp.coo_matrix(
        (np.ones(2 * len(rows)), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    ).tocsr()
    adj.sum_duplicates()
    adj.data[:] = 1.0
    return GraphView(window=(float(lo), float(hi)), center=float(center),
                     active_nodes=active, local_adj=adj, num_edges=m)


def induce_view(g: TemporalGraph, center: float, s: int, include_hi: bool = True) -> GraphView:
    """View of length ``span / s`` centred at ``center``; both bounds inclusive by default."""
    lo, hi = view_window(g, center, s)
    return induce_window(g, lo, hi, center, include_hi)


def sequential_grid(g: TemporalGraph, s: int) -> list:
    """The ``s`` non-overlapping windows covering the whole span, as (lo, hi, center)."""
    width = g.span / s
    out = []
    for k in range(s):
        lo = g.t_min + k * width
        hi = g.t_max if k == s - 1 else g.t_min + (k + 1) * width
        out.append((lo, hi, g.t_min + (2 * k + 1) * g.span / (2 * s)))
    return out


def sequential_view(g: TemporalGraph, s: int, k: int) -> GraphView:
    """Window ``k`` of the sequential partition: half-open except the last one."""
    lo, hi, c = sequential_grid(g, s)[k]
    return induce_window(g, lo, hi, c, include_hi=(k == s - 1))


def view_features(g: TemporalGraph, view: GraphView, X: Optional[np.ndarray] = None) -> np.ndarray:
    """Feature rows for ``view.active_nodes``, with per-span overrides applied
    when the view's center falls inside the override's span."""
    if X is None:
        X = g.features
    out = X[view.active_nodes]
    if g.override_nodes is None or len(g.override_nodes) == 0:
        return out
    c = view.center
    lo, hi = g.override_bounds[:, 0], g.override_bounds[:, 1]
    hit = (c >= lo) & ((c < hi) | ((c == hi) & (hi >= g.t_max)))
    if not hit.any():
        return out
    out = out.copy()
    pos = np.searchsorted(view.active_nodes, g.override_nodes[hit])
    pos_ok = pos < len(view.active_nodes)
    nodes = g.override_nodes[hit]
    rows = g.override_rows[hit]
    for p, ok, node, row in zip(pos, pos_ok, nodes, rows):
        if ok and view.active_nodes[p] == node:
            out[p] = row
    return out


# --
# Binary container
#
# layout (little endian):
#   magic "TGV1" | u32 version | u64 num_nodes | u64 num_edges | u32 flags
#   i64[E] src | i64[E] dst | f64[E] ts
#   [features]  u64 dim | f64[N*dim]
#   [labels]    i64[N]
#   [names]     N x (u32 byte length | utf-8 bytes)
#   [overrides] u64 count | i64[K] nodes | f64[K*2] bounds | f64[K*dim] rows


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).astype(dt.newbyteorder("="))


def save_graph(g: TemporalGraph, path) -> None:
    flags = 0
    flags |= _FLAG_FEATURES if g.features is not None else 0
    flags |= _FLAG_LABELS if g.labels is not None else 0
    flags |= _FLAG_NAMES if g.node_names is not None else 0
    flags |= _FLAG_OVERRIDES if g.override_nodes is not None else 0
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<IQQI", VERSION, g.num_nodes, g.num_edges, flags))
    out.write(g.src.astype("<i8").tobytes())
    out.write(g.dst.astype("<i8").tobytes())
    out.write(g.ts.astype("<f8").tobytes())
    if g.features is not None:
        out.write(struct.pack("<Q", g.features.shape[1]))
        out.write(np.ascontiguousarray(g.features, dtype="<f8").tobytes())
    if g.labels is not None:
        out.write(g.labels.astype("<i8").tobytes())
    if g.node_names is not None:
        for name in g.node_names:
            b = str(name).encode("utf-8")
            out.write(struct.pack("<I", len(b)))
            out.write(b)
    if g.override_nodes is not None:
        out.write(struct.pack("<Q", len(g.override_nodes)))
        out.write(g.override_nodes.astype("<i8").tobytes())
        out.write(np.ascontiguousarray(g.override_bounds, dtype="<f8").tobytes())
        out.write(np.ascontiguousarray(g.override_rows, dtype="<f8").tobytes())
    Path(path).write_bytes(out.getvalue())


def load_graph(path) -> TemporalGraph:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not a TGV1 graph container")
    version, n, e, flags = r.unpack("<IQQI")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    src = r.array("<i8", e)
    dst = r.array("<i8", e)
    ts = r.array("<f8", e)
    features = labels = names = None
    ov_nodes = ov_bounds = ov_rows = None
    dim = 0
    if flags & _FLAG_FEATURES:
        (dim,) = r.unpack("<Q")
        features = r.array("<f8", n * dim).reshape(n, dim)
    if flags & _FLAG_LABELS:
        labels = r.array("<i8", n)
    if flags & _FLAG_NAMES:
        names = []
        for _ in range(n):
            (length,) = r.unpack("<I")
            names.append(r.take(length).decode("utf-8"))
    if flags & _FLAG_OVERRIDES:
        (k,) = r.unpack("<Q")
        ov_nodes = r.array("<i8", k)
        ov_bounds = r.array("<f8", 2 * k).reshape(k, 2)
        ov_rows = r.array("<f8", k * dim).reshape(k, dim)
    if r.pos != len(r.buf):
        raise FormatError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return TemporalGraph(n, src, dst, ts, features=features, labels=labels, node_names=names,
                         override_nodes=ov_nodes, override_bounds=ov_bounds, override_rows=ov_rows)


def graphs_equal(a: TemporalGraph, b: TemporalGraph) -> bool:
    """Field-wise equality, bit-exact on floats."""
    def same(x, y):
        if x is None or y is None:
            return x is None and y is None
        x, y = np.asarray(x), np.asarray(y)
        return x.shape == y.shape and x.tobytes() == y.tobytes()

    return (
        a.num_nodes == b.num_nodes
        and same(a.src, b.src) and same(a.dst, b.dst) and same(a.ts, b.ts)
        and same(a.features, b.features) and same(a.labels, b.labels)
        and (a.node_names == b.node_names)
        and same(a.override_nodes, b.override_nodes)
        and same(a.override_bounds, b.override_bounds)
        and same(a.override_rows, b.override_rows)
    )
