"""Cross-attention-to-concatenation fusion and the multi-stage wiring."""

import re
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, AttentionParams, init_attention, mhsa
from .errors import DimensionError, ParseError
from .params import glorot, ones, zeros
from .tensor import Tensor


@dataclass
class TransformerBlockParams:
    """One pre-norm block: x + MHSA(LN(x)), then h + FF(LN(h))."""

    ln1_gain: Tensor
    ln1_bias: Tensor
    attn: AttentionParams
    ln2_gain: Tensor
    ln2_bias: Tensor
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor


@dataclass
class FusionBlockParams:
    attn_ab: AttentionParams  # queries from B, keys/values from A
    attn_ba: AttentionParams  # queries from A, keys/values from B
    tf: TransformerBlockParams


@dataclass
class Linear:
    weight: Tensor
    bias: Tensor

    def __call__(self, x):
        if x.ndim == 1:
            y = T.matmul(T.reshape(x, (1, x.shape[0])), self.weight)
            return T.add_bias(T.reshape(y, (y.shape[-1],)), self.bias)
        return T.add_bias(T.matmul(x, self.weight), self.bias)


@dataclass
class FusedFeatures:
    token_seq: Tensor  # [..., N_A + N_B, d_model]
    pooled: Tensor  # [..., d_model]


def init_linear(rng, d_in, d_out):
    return Linear(glorot(rng, (d_in, d_out), d_in, d_out), zeros((d_out,)))


def init_transformer_block(d_model, heads, rng, ff_mult=4):
    hidden = ff_mult * d_model
    return TransformerBlockParams(
        ln1_gain=ones((d_model,)),
        ln1_bias=zeros((d_model,)),
        attn=init_attention(AttentionConfig.even(d_model, heads), rng),
        ln2_gain=ones((d_model,)),
        ln2_bias=zeros((d_model,)),
        ff_w1=glorot(rng, (d_model, hidden), d_model, hidden),
        ff_b1=zeros((hidden,)),
        ff_w2=glorot(rng, (hidden, d_model), hidden, d_model),
        ff_b2=zeros((d_model,)),
    )


def init_fusion_block(d_model, heads, rng):
    config = AttentionConfig.even(d_model, heads)
    return FusionBlockParams(
        attn_ab=init_attention(config, rng),
        attn_ba=init_attention(config, rng),
        tf=init_transformer_block(d_model, heads, rng),
    )


def transformer_block(x, p):
    h = T.layer_norm(x, p.ln1_gain, p.ln1_bias)
    x = T.add(x, mhsa(h, h, p.attn))
    h = T.layer_norm(x, p.ln2_gain, p.ln2_bias)
    h = T.gelu(T.add_bias(T.matmul(h, p.ff_w1), p.ff_b1))
    return T.add(x, T.add_bias(T.matmul(h, p.ff_w2), p.ff_b2))


def cross_concat(a, b, params):
    """Both cross-attention streams joined on the sequence axis, before Tf.

    Rows ``[:N_B]`` are Z_(A) (queries from ``b``), rows ``[N_B:]`` are Z_(B).
    """
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"cross_attend_concat: widths differ, {list(a.shape)} vs {list(b.shape)}")
    z_a = mhsa(b, a, params.attn_ab)
    z_b = mhsa(a, b, params.attn_ba)
    return T.concat([z_a, z_b], axis=-2)


def cross_attend_concat(a, b, params):
    tokens = transformer_block(cross_concat(a, b, params), params.tf)
    return FusedFeatures(tokens, T.mean(tokens, axis=-2))


def _as_sequence(x):
    return T.reshape(x, x.shape[:-1] + (1, x.shape[-1]))


def multistage_fuse(
    mri_tokens, pet_tokens, nonimage_token, p1, p2, proj, stage3_input="pooled", return_stage1=False
):
    """MRI/PET fusion followed by fusion with the projected non-image token.

    ``nonimage_token`` is ``[..., 64]``; it is mapped to ``d_model`` by
    ``proj`` and enters stage three as a length-1 token sequence.  The image
    side of stage three is either the stage-one pooled vector as a length-1
    sequence (``"pooled"``) or the full stage-one token sequence
    (``"tokens"``).  With ``"tokens"`` the N image-query rows all attend to a
    single key and collapse to copies of the token's value vector, which
    swamps the image signal in the final mean.

    The stage-one pooled vector is also what feeds the embedding prompt as
    the image summary; pass ``return_stage1=True`` to get it back.
    """
    stage1 = cross_attend_concat(mri_tokens, pet_tokens, p1)
    if nonimage_token.shape[-1] != proj.weight.shape[0]:
        raise DimensionError(
            f"non-image token width {nonimage_token.shape[-1]} != projection input {proj.weight.shape[0]}"
        )
    if stage3_input == "pooled":
        image_side = _as_sequence(stage1.pooled)
    elif stage3_input == "tokens":
        image_side = stage1.token_seq
    else:
        raise ValueError(f"stage3_input must be 'pooled' or 'tokens', got {stage3_input!r}")
    stage3 = cross_attend_concat(image_side, proj(_as_sequence(nonimage_token)), p2)
    if return_stage1:
        return stage3.pooled, stage1
    return stage3.pooled


# ---------------------------------------------------------- image summary


def image_summary(fused, k=8):
    """First ``k`` pooled coordinates rounded to 3 decimals, for prompts."""
    if isinstance(fused, FusedFeatures):
        fused = fused.pooled
    pooled = np.asarray(fused.data if isinstance(fused, Tensor) else fused).reshape(-1)
    if k > pooled.shape[0]:
        raise DimensionError(f"summary length {k} exceeds d_model={pooled.shape[0]}")
    return [round(float(v), 3) for v in pooled[:k]]


def format_summary(values):
    return "[" + ", ".join(f"{v:.3f}" for v in values) + "]"


_SUMMARY_RE = re.compile(r"\[([^\[\]]*)\]")


def parse_summary(text):
    m = _SUMMARY_RE.search(text)
    if m is None:
        raise ParseError(f"no bracketed summary in {text!r}")
    body = m.group(1).strip()
    if not body:
        return []
    try:
        return [float(part) for part in body.split(",")]
    except ValueError as exc:
        raise ParseError(f"bad summary entry in {body!r}") from exc
