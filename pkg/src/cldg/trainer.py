"""Adam and the end-to-end contrastive training loop.

One epoch: sample a ViewSet, pick a batch of nodes active in every view,
encode each view with the local encoder (and with the global encoder on the
view's diffusion matrix for CLDG++), evaluate the composite loss, backprop,
take one Adam step.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import diffusion
from .diffusion import DiffusionCache, DiffusionConfig, sym_normalize
from .errors import ConfigError, FormatError, NumericError, PreconditionError
from .loss import LossConfig, composite_loss
from .model import ModelParams, backward, encode, init_params
from .rng import substream
from .sampler import SamplerConfig, ViewSet, sample_views
from .temporal_graph import TemporalGraph, check_trainable, default_features, view_features

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"CLD1"
CHECKPOINT_VERSION = 1
MAX_BATCH_RETRIES = 20


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    lr: float = 4e-3
    weight_decay: float = 5e-4
    tau: float = 0.2
    mode: str = "cldg"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    seed: int = 0
    d_hidden: int = 128
    d_out: int = 64
    feature_dim: int = 32
    node_cap: int = 50_000
    fanout: int = 10

    def validate(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if min(self.d_hidden, self.d_out, self.feature_dim) < 1:
            raise ConfigError("dimensions must be >= 1")
        self.loss_config().validate()
        self.sampler.validate()
        if self.mode == "cldgpp":
            self.diffusion.validate()

    def loss_config(self) -> LossConfig:
        return LossConfig(tau=self.tau, mode=self.mode)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["sampler"] = SamplerConfig(**d.get("sampler", {}))
        d["diffusion"] = DiffusionConfig(**d.get("diffusion", {}))
        return cls(**d)


def config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --
# Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, weight_decay: float = 0.0) -> None:
    """In-place Adam update with L2 weight decay folded into the gradient."""
    for name in sorted(grads):
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient in tensor {name!r} at step {state.step + 1}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise PreconditionError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        if weight_decay:
            g = g + weight_decay * p
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.u[name] = np.zeros_like(p)
        m, u = state.m[name], state.u[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        u *= state.beta2
        u += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(u / bc2) + state.eps)


# --
# Batch and view preparation


def node_features(g: TemporalGraph, dim: int = 32) -> np.ndarray:
    return g.features if g.features is not None else default_features(g, dim)


def batch_nodes(viewset: ViewSet) -> np.ndarray:
    common = viewset.views[0].active_nodes
    for v in viewset.views[1:]:
        common = np.intersect1d(common, v.active_nodes, assume_unique=True)
    return common


def sample_neighborhood(adj: sp.csr_matrix, seeds: np.ndarray, hops: int, fanout: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Seeds plus up to ``fanout`` random neighbors per node per hop (sorted local ids)."""
    keep = set(int(s) for s in seeds)
    frontier = np.unique(seeds)
    for _ in range(hops):
        nxt = []
        for node in frontier:
            nbrs = adj.indices[adj.indptr[node]:adj.indptr[node + 1]]
            if len(nbrs) > fanout:
                nbrs = rng.choice(nbrs, size=fanout, replace=False)
            nxt.extend(int(x) for x in nbrs if int(x) not in keep)
        nxt = np.unique(np.array(nxt, dtype=np.int64))
        keep.update(int(x) for x in nxt)
        frontier = nxt
    return np.array(sorted(keep), dtype=np.int64)


@dataclass
class ViewInput:
    rows: np.ndarray        # batch positions inside this view's node list
    X: np.ndarray
    local_prop: object
    global_prop: object = None


def prepare_inputs(g: TemporalGraph, X: np.ndarray, viewset: ViewSet, batch: np.ndarray,
                   cfg: TrainConfig, cache: DiffusionCache | None, rng: np.random.Generator) -> list:
    out = []
    for view in viewset.views:
        nodes = view.active_nodes
        adj = view.local_adj
        rows = np.searchsorted(nodes, batch)
        Xv = view_features(g, view, X)
        S = None
        if cfg.mode == "cldgpp":
            S = cache.get(view, cfg.diffusion) if cache is not None else diffusion.diffuse(adj, cfg.diffusion)
        if len(nodes) > cfg.node_cap:
            sub = sample_neighborhood(adj, rows, hops=2, fanout=cfg.fanout, rng=rng)
            adj = adj[sub][:, sub]
            Xv = Xv[sub]
            rows = np.searchsorted(sub, rows)
            if S is not None:
                S = S[sub][:, sub]
        local = sym_normalize(adj, add_self_loops=True)
        out.append(ViewInput(rows, Xv, local, S))
    return out


def loss_and_grads(params: ModelParams, inputs: list, loss_cfg: LossConfig):
    """Composite loss over prepared views and its gradient for every tensor."""
    tables, caches = [], []
    for vi in inputs:
        t = {}
        z, c = encode(params, vi.local_prop, vi.X, "local", vi.rows)
        t["local"] = z
        caches.append(("local", len(tables), c))
        if loss_cfg.mode == "cldgpp":
            z, c = encode(params, vi.global_prop, vi.X, "global", vi.rows)
            t["global"] = z
            caches.append(("global", len(tables), c))
        tables.append(t)
    loss, zgrads = composite_loss(tables, loss_cfg)
    grads = backward(params, [c for _, _, c in caches], [zgrads[i][sc] for sc, i, _ in caches])
    return loss, grads


def draw_epoch(g: TemporalGraph, cfg: TrainConfig, epoch: int):
    """ViewSet and batch for an epoch, resampling views if they share no node."""
    for attempt in range(MAX_BATCH_RETRIES + 1):
        viewset = sample_views(g, cfg.sampler, epoch, attempt)
        common = batch_nodes(viewset)
        if len(common):
            break
    else:
        raise PreconditionError(
            f"epoch {epoch}: sampled views shared no active node after {MAX_BATCH_RETRIES} retries"
        )
    rng = substream(cfg.seed, "batch", epoch)
    if len(common) > cfg.batch_size:
        common = np.sort(rng.choice(common, size=cfg.batch_size, replace=False))
    return viewset, common


# --
# Training


def train(g: TemporalGraph, cfg: TrainConfig, callback=None):
    """Train the encoders; return ``(params, log)`` where ``log`` holds one
    ``{"epoch", "loss", "step_ms"}`` dict per epoch."""
    cfg = dataclasses.replace(cfg, sampler=dataclasses.replace(cfg.sampler, seed=cfg.seed))
    cfg.validate()
    check_trainable(g)
    X = node_features(g, cfg.feature_dim)
    scopes = ("local",) if cfg.mode == "cldg" else ("local", "global")
    params = init_params(X.shape[1], cfg.d_hidden, cfg.d_out, scopes, substream(cfg.seed, "init"))
    state = AdamState()
    cache = DiffusionCache() if cfg.mode == "cldgpp" else None
    loss_cfg = cfg.loss_config()
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        viewset, batch = draw_epoch(g, cfg, epoch)
        inputs = prepare_inputs(g, X, viewset, batch, cfg, cache, substream(cfg.seed, "neighbors", epoch))
        loss, grads = loss_and_grads(params, inputs, loss_cfg)
        adam_step(params.tensors, grads, state, cfg.lr, cfg.weight_decay)
        step_ms = (time.perf_counter() - t0) * 1e3
        history.append({"epoch": epoch, "loss": loss, "step_ms": step_ms})
        log.debug("epoch %d loss %.6f (%.1f ms)", epoch, loss, step_ms)
        if callback is not None:
            callback(epoch, loss, params)
    return params, history


# --
# Checkpoints
#
# layout (little endian):
#   magic "CLD1" | u32 version | u32 json length | utf-8 json (model dims + train config)
#   u32 tensor count, then per tensor in name order:
#   u16 name length | name | u8 ndim | u64[ndim] shape | f64[...] data


def save_checkpoint(path, params: ModelParams, config: dict | None = None) -> None:
    meta = {
        "model": {"d_in": params.d_in, "d_hidden": params.d_hidden, "d_out": params.d_out,
                  "scopes": list(params.scopes)},
        "config": config or {},
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
    out.write(blob)
    out.write(struct.pack("<I", len(params.tensors)))
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        nb = name.encode("utf-8")
        out.write(struct.pack("<H", len(nb)))
        out.write(nb)
        out.write(struct.pack("<B", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.write(arr.tobytes())
    Path(path).write_bytes(out.getvalue())


def load_checkpoint(path):
    """Return ``(params, config_dict)``."""
    buf = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"{path}: truncated checkpoint")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic, not a CLD1 checkpoint")
    version, nblob = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(take(nblob).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", take(2))
        name = take(ln).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(buf):
        raise FormatError(f"{path}: trailing bytes in checkpoint")
    m = meta["model"]
    params = ModelParams(m["d_in"], m["d_hidden"], m["d_out"], tuple(m["scopes"]), tensors)
    return params, meta["config"]
