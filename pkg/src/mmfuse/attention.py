"""Scaled dot-product attention, positional tables and multi-head attention."""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import CapacityError, DimensionError
from .params import glorot
from .tensor import Tensor


@dataclass(frozen=True)
class AttentionConfig:
    d_model: int
    d_q: int
    d_k: int
    d_v: int
    heads: int = 1

    def __post_init__(self):
        if self.d_q != self.d_k:
            raise DimensionError(f"query width {self.d_q} must equal key width {self.d_k}")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")

    @classmethod
    def even(cls, d_model, heads):
        """Per-head widths d_model // heads (at least 1)."""
        dh = max(1, d_model // heads)
        return cls(d_model, dh, dh, dh, heads)


@dataclass
class AttentionParams:
    """Independent full-width projections per head, plus the output map."""

    wq: list
    wk: list
    wv: list
    wo: Tensor

    @property
    def heads(self):
        return len(self.wq)


def init_attention(config, rng):
    d = config.d_model
    wq, wk, wv = [], [], []
    for _ in range(config.heads):
        wq.append(glorot(rng, (d, config.d_q), d, config.d_q))
        wk.append(glorot(rng, (d, config.d_k), d, config.d_k))
        wv.append(glorot(rng, (d, config.d_v), d, config.d_v))
    hv = config.heads * config.d_v
    return AttentionParams(wq, wk, wv, glorot(rng, (hv, d), hv, d))


# ------------------------------------------------------------ positional


@dataclass
class PositionTable:
    table: Tensor  # [n_max, d_p], fixed
    mode: str = "sum"

    def __post_init__(self):
        if self.mode not in ("sum", "concat"):
            raise ValueError(f"unknown positional mode {self.mode!r}")

    @property
    def capacity(self):
        return self.table.shape[0]

    @property
    def width(self):
        return self.table.shape[1]


def sinusoidal_table(n_max, d_p):
    """PE[pos, 2i] = sin(pos / 10000^(2i/d_p)), PE[pos, 2i+1] = cos(same angle)."""
    pos = np.arange(n_max, dtype=np.float64)[:, None]
    i = np.arange(d_p)
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_p)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def positional_encode(x, table):
    """Add (``sum``) or append (``concat``) the first N table rows to ``x[..., N, d]``."""
    n, d = x.shape[-2], x.shape[-1]
    if n > table.capacity:
        raise CapacityError(f"sequence length {n} exceeds positional capacity {table.capacity}")
    rows = table.table.data[:n]
    if table.mode == "sum":
        if table.width != d:
            raise DimensionError(f"sum-mode table width {table.width} != token width {d}")
        return T.add(x, Tensor(np.broadcast_to(rows, x.shape)))
    pe = Tensor(np.broadcast_to(rows, x.shape[:-1] + (table.width,)))
    return T.concat([x, pe], axis=-1)


# ------------------------------------------------------------- attention


def scaled_dot_product(q, k, v):
    """Return ``(Softmax(Q K^T / sqrt(d_q)) V, weights)``."""
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(q.shape[-1]))
    weights = T.softmax_rows(scores)
    return T.matmul(weights, v), weights


def self_attention(z, wq, wk, wv):
    """Single-head self-attention over ``z[..., N, d]``."""
    if z.shape[-1] != wq.shape[0] or wq.shape[1] != wk.shape[1] or z.shape[-1] != wv.shape[0]:
        raise DimensionError(
            f"self_attention: tokens {list(z.shape)} vs W^Q {list(wq.shape)}, "
            f"W^K {list(wk.shape)}, W^V {list(wv.shape)}"
        )
    out, _ = scaled_dot_product(T.matmul(z, wq), T.matmul(z, wk), T.matmul(z, wv))
    return out


def mhsa(query_src, kv_src, params, return_weights=False):
    """Multi-head attention with queries from ``query_src`` and keys/values from ``kv_src``.

    Each head attends independently, head outputs are concatenated on the
    feature axis and mapped back to ``d_model`` by ``params.wo``.
    """
    d = params.wq[0].shape[0]
    if query_src.shape[-1] != d or kv_src.shape[-1] != d:
        raise DimensionError(
            f"mhsa: query width {query_src.shape[-1]} and key/value width {kv_src.shape[-1]} "
            f"must both equal d_model={d}"
        )
    heads, weights = [], []
    for wq, wk, wv in zip(params.wq, params.wk, params.wv):
        z, w = scaled_dot_product(T.matmul(query_src, wq), T.matmul(kv_src, wk), T.matmul(kv_src, wv))
        heads.append(z)
        weights.append(w)
    joined = heads[0] if len(heads) == 1 else T.concat(heads, axis=-1)
    out = T.matmul(joined, params.wo)
    return (out, weights) if return_weights else out
