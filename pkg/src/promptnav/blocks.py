"""Pre-norm transformer encoder layer shared by the vision and text towers.

Layers operate on (..., S, d) tensors: a single sequence is (S, d), a batch
is (B, S, d). Multi-head attention splits the feature axis into `heads`
slices of width d/heads.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .params import ParamSet
from .tensor import Tensor


def init_linear(ps: ParamSet, name: str, n_in: int, n_out: int,
                rng: np.random.Generator) -> None:
    a = math.sqrt(6.0 / (n_in + n_out))
    ps.add(f"{name}.w", rng.uniform(-a, a, size=(n_in, n_out)))
    ps.add(f"{name}.b", np.zeros(n_out))


def linear(ps: ParamSet, name: str, x: Tensor) -> Tensor:
    return T.add(T.matmul(x, ps.t(f"{name}.w")), ps.t(f"{name}.b"))


def init_layernorm(ps: ParamSet, name: str, d: int) -> None:
    ps.add(f"{name}.g", np.ones(d))
    ps.add(f"{name}.b", np.zeros(d))


def init_encoder_layer(ps: ParamSet, prefix: str, d: int, ffn_hidden: int,
                       rng: np.random.Generator) -> None:
    init_layernorm(ps, f"{prefix}.ln1", d)
    for proj in ("wq", "wk", "wv", "wo"):
        init_linear(ps, f"{prefix}.attn.{proj}", d, d, rng)
    init_layernorm(ps, f"{prefix}.ln2", d)
    init_linear(ps, f"{prefix}.ffn.fc1", d, ffn_hidden, rng)
    init_linear(ps, f"{prefix}.ffn.fc2", ffn_hidden, d, rng)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, s, d = x.shape
    dh = d // heads
    r = T.reshape(x, (*lead, s, heads, dh))
    return T.swapaxes(r, -3, -2)  # (..., heads, S, dh)


def _join_heads(x: Tensor) -> Tensor:
    *lead, h, s, dh = x.shape
    r = T.swapaxes(x, -3, -2)  # (..., S, heads, dh)
    return T.reshape(r, (*lead, s, h * dh))


def self_attention(ps: ParamSet, prefix: str, x: Tensor, heads: int) -> Tensor:
    d = x.shape[-1]
    dh = d // heads
    q = _split_heads(linear(ps, f"{prefix}.wq", x), heads)
    k = _split_heads(linear(ps, f"{prefix}.wk", x), heads)
    v = _split_heads(linear(ps, f"{prefix}.wv", x), heads)
    scores = T.scale(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / math.sqrt(dh))
    ctx = T.matmul(T.softmax(scores), v)
    return linear(ps, f"{prefix}.wo", _join_heads(ctx))


def encoder_layer(ps: ParamSet, prefix: str, x: Tensor, heads: int) -> Tensor:
    h = T.layernorm(x, ps.t(f"{prefix}.ln1.g"), ps.t(f"{prefix}.ln1.b"))
    x = T.add(x, self_attention(ps, f"{prefix}.attn", h, heads))
    h = T.layernorm(x, ps.t(f"{prefix}.ln2.g"), ps.t(f"{prefix}.ln2.b"))
    ff = linear(ps, f"{prefix}.ffn.fc2", T.gelu(linear(ps, f"{prefix}.ffn.fc1", h)))
    return T.add(x, ff)
