"""Two-layer graph-convolution encoders and projection heads, in plain numpy.

There are two independent encoders: ``local`` propagates with the
self-loop normalized view adjacency, ``global`` with the view's diffusion
matrix. Each has its own projection head

    z = l2_normalize(leaky_relu(H W_p + b_p))

Gradients are derived by hand; ``forward``/``project`` return caches that
``backward_encoder``/``backward_project`` consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, PreconditionError

SLOPE = 0.2
SCOPES = ("local", "global")


def leaky_relu(x):
    return np.where(x > 0, x, SLOPE * x)


def leaky_relu_grad(x):
    return np.where(x > 0, 1.0, SLOPE)


def tensor_names(scope: str) -> tuple:
    return (f"{scope}.W1", f"{scope}.W2", f"proj_{scope}.W", f"proj_{scope}.b")


@dataclass
class ModelParams:
    d_in: int
    d_hidden: int
    d_out: int
    scopes: tuple
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.tensors[key]

    def copy(self) -> "ModelParams":
        return ModelParams(self.d_in, self.d_hidden, self.d_out, tuple(self.scopes),
                           {k: v.copy() for k, v in self.tensors.items()})

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(d_in: int, d_hidden: int = 128, d_out: int = 64,
                scopes=("local", "global"), rng: np.random.Generator | None = None) -> ModelParams:
    """Glorot-uniform weights, zero projection biases. Each scope draws its own values."""
    if rng is None:
        rng = np.random.default_rng(0)
    tensors = {}
    for scope in scopes:
        w1, w2, wp, bp = tensor_names(scope)
        tensors[w1] = _glorot(rng, d_in, d_hidden)
        tensors[w2] = _glorot(rng, d_hidden, d_hidden)
        tensors[wp] = _glorot(rng, d_hidden, d_out)
        tensors[bp] = np.zeros(d_out)
    return ModelParams(d_in, d_hidden, d_out, tuple(scopes), tensors)


@dataclass
class EncoderCache:
    scope: str
    prop: object
    PX: np.ndarray
    A1: np.ndarray
    PH1: np.ndarray
    A2: np.ndarray


def forward(params: ModelParams, prop, X: np.ndarray, scope: str):
    """H = lrelu(P lrelu(P X W1) W2). ``prop`` may be dense or scipy sparse."""
    if scope not in params.scopes:
        raise DimensionError(f"model has no {scope!r} encoder")
    W1, W2 = params[f"{scope}.W1"], params[f"{scope}.W2"]
    n = X.shape[0]
    if prop.shape != (n, n):
        raise DimensionError(f"propagation matrix {prop.shape} does not match {n} feature rows")
    if X.shape[1] != W1.shape[0]:
        raise DimensionError(f"features have {X.shape[1]} columns, encoder expects {W1.shape[0]}")
    PX = np.asarray(prop @ X)
    A1 = PX @ W1
    H1 = leaky_relu(A1)
    PH1 = np.asarray(prop @ H1)
    A2 = PH1 @ W2
    return leaky_relu(A2), EncoderCache(scope, prop, PX, A1, PH1, A2)


@dataclass
class ProjectCache:
    scope: str
    H: np.ndarray
    pre: np.ndarray
    norm: np.ndarray
    z: np.ndarray


def project(params: ModelParams, H: np.ndarray, scope: str, with_cache: bool = False):
    """Row-wise l2_normalize(lrelu(H W + b)); all-zero rows stay zero."""
    W, b = params[f"proj_{scope}.W"], params[f"proj_{scope}.b"]
    pre = H @ W + b
    a = leaky_relu(pre)
    norm = np.sqrt((a * a).sum(axis=1))
    safe = np.where(norm > 0, norm, 1.0)
    z = a / safe[:, None]
    if with_cache:
        return z, ProjectCache(scope, H, pre, norm, z)
    return z


def backward_project(params: ModelParams, cache: ProjectCache, dz: np.ndarray, grads: dict) -> np.ndarray:
    """Accumulate projection-head gradients into ``grads``; return dL/dH."""
    z, norm = cache.z, cache.norm
    safe = np.where(norm > 0, norm, 1.0)
    da = (dz - z * (z * dz).sum(axis=1, keepdims=True)) / safe[:, None]
    da[norm == 0] = 0.0
    dpre = da * leaky_relu_grad(cache.pre)
    W = params[f"proj_{cache.scope}.W"]
    grads[f"proj_{cache.scope}.W"] += cache.H.T @ dpre
    grads[f"proj_{cache.scope}.b"] += dpre.sum(axis=0)
    return dpre @ W.T


def backward_encoder(params: ModelParams, cache: EncoderCache, dH: np.ndarray, grads: dict) -> None:
    """Accumulate encoder gradients for an upstream gradient over all rows of H."""
    if cache is None:
        raise PreconditionError("missing forward cache")
    s = cache.scope
    W2 = params[f"{s}.W2"]
    dA2 = dH * leaky_relu_grad(cache.A2)
    grads[f"{s}.W2"] += cache.PH1.T @ dA2
    dH1 = np.asarray(cache.prop.T @ (dA2 @ W2.T))
    dA1 = dH1 * leaky_relu_grad(cache.A1)
    grads[f"{s}.W1"] += cache.PX.T @ dA1


def encode(params: ModelParams, prop, X: np.ndarray, scope: str, rows=None):
    """Forward plus projection, returning caches for both stages.

    ``rows`` restricts the projection to a subset of view rows (the batch).
    """
    H, enc_cache = forward(params, prop, X, scope)
    Hb = H if rows is None else H[rows]
    z, proj_cache = project(params, Hb, scope, with_cache=True)
    return z, (enc_cache, proj_cache, rows, H.shape)


def backward(params: ModelParams, caches: list, loss_grads: list, grads: dict | None = None) -> dict:
    """Sum of parameter gradients over a list of ``encode`` caches paired with
    dL/dz for each."""
    if grads is None:
        grads = params.zeros_like()
    if len(caches) != len(loss_grads):
        raise PreconditionError("one loss gradient is needed per cache")
    for cache, dz in zip(caches, loss_grads):
        if cache is None:
            raise PreconditionError("missing forward cache")
        enc_cache, proj_cache, rows, shape = cache
        dHb = backward_project(params, proj_cache, dz, grads)
        if rows is None:
            dH = dHb
        else:
            dH = np.zeros(shape)
            np.add.at(dH, rows, dHb)
        backward_encoder(params, enc_cache, dH, grads)
    return grads
