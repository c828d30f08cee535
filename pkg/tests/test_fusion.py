import math

import numpy as np
import pytest

from mmfuse import tensor as T
from mmfuse.errors import DimensionError, ParseError
from mmfuse.fusion import (
    cross_attend_concat,
    cross_concat,
    format_summary,
    image_summary,
    init_fusion_block,
    init_linear,
    multistage_fuse,
    parse_summary,
)
from mmfuse.params import named_parameters
from mmfuse.rng import Rng
from mmfuse.tensor import Tensor, backward


# ------------------------------------------------------- numpy reference


def np_softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def np_mhsa(xq, xkv, p):
    heads = []
    for wq, wk, wv in zip(p.wq, p.wk, p.wv):
        q, k, v = xq @ wq.data, xkv @ wk.data, xkv @ wv.data
        heads.append(np_softmax(q @ k.T / math.sqrt(q.shape[-1])) @ v)
    return np.concatenate(heads, axis=-1) @ p.wo.data


def np_ln(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def np_gelu(x):
    return 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))


def np_block(x, p):
    h = np_ln(x, p.ln1_gain.data, p.ln1_bias.data)
    x = x + np_mhsa(h, h, p.attn)
    h = np_ln(x, p.ln2_gain.data, p.ln2_bias.data)
    h = np_gelu(h @ p.ff_w1.data + p.ff_b1.data)
    return x + h @ p.ff_w2.data + p.ff_b2.data


def np_fuse(a, b, p):
    z = np.concatenate([np_mhsa(b, a, p.attn_ab), np_mhsa(a, b, p.attn_ba)], axis=0)
    tokens = np_block(z, p.tf)
    return tokens, tokens.mean(axis=0)


def block(d=8, heads=2, seed=0):
    return init_fusion_block(d, heads, Rng(seed))


# ----------------------------------------------------------------- tests


@pytest.mark.parametrize("na,nb", [(1, 1), (3, 5), (16, 16), (7, 2)])
def test_row_count(na, nb):
    rng = np.random.default_rng(0)
    out = cross_attend_concat(Tensor(rng.normal(size=(na, 8))), Tensor(rng.normal(size=(nb, 8))), block())
    assert out.token_seq.shape == (na + nb, 8)
    assert out.pooled.shape == (8,)


def test_width_mismatch():
    with pytest.raises(DimensionError):
        cross_attend_concat(Tensor(np.ones((2, 8))), Tensor(np.ones((2, 6))), block())


def test_identical_streams_with_shared_weights_are_symmetric():
    p = block(seed=3)
    p.attn_ba = p.attn_ab
    x = Tensor(np.random.default_rng(1).normal(size=(4, 8)))
    z = cross_concat(x, x, p).data
    np.testing.assert_allclose(z[:4], z[4:], atol=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_matches_numpy_reference(seed):
    rng = np.random.default_rng(seed)
    p = block(seed=seed)
    a, b = rng.normal(size=(2, 8)), rng.normal(size=(3, 8))
    out = cross_attend_concat(Tensor(a), Tensor(b), p)
    tokens, pooled = np_fuse(a.astype(np.float32), b.astype(np.float32), p)
    np.testing.assert_allclose(out.token_seq.data, tokens, atol=1e-5, rtol=1e-5)
    np.testing.assert_allclose(out.pooled.data, pooled, atol=1e-5, rtol=1e-5)


def test_pooled_is_mean_of_tokens():
    rng = np.random.default_rng(4)
    out = cross_attend_concat(Tensor(rng.normal(size=(5, 8))), Tensor(rng.normal(size=(3, 8))), block())
    np.testing.assert_allclose(out.pooled.data, out.token_seq.data.mean(axis=0), atol=1e-6)


def test_modality_swap_changes_output_order():
    # swapping inputs together with the two attention blocks swaps the halves
    rng = np.random.default_rng(5)
    p = block(seed=5)
    a, b = Tensor(rng.normal(size=(4, 8))), Tensor(rng.normal(size=(4, 8)))
    z = cross_concat(a, b, p).data
    p.attn_ab, p.attn_ba = p.attn_ba, p.attn_ab
    z_swapped = cross_concat(b, a, p).data
    np.testing.assert_allclose(z_swapped[:4], z[4:], atol=1e-6)
    np.testing.assert_allclose(z_swapped[4:], z[:4], atol=1e-6)


def test_gradient_reaches_both_streams():
    rng = np.random.default_rng(6)
    a = Tensor(rng.normal(size=(3, 8)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 8)), requires_grad=True)
    out = cross_attend_concat(a, b, block())
    backward(T.sum_all(T.mul(out.pooled, Tensor(rng.normal(size=(8,))))))
    assert np.abs(a.grad).sum() > 0 and np.abs(b.grad).sum() > 0


def test_batched_matches_unbatched():
    rng = np.random.default_rng(7)
    p = block()
    a, b = rng.normal(size=(2, 3, 8)), rng.normal(size=(2, 4, 8))
    batched = cross_attend_concat(Tensor(a), Tensor(b), p).pooled.data
    for i in range(2):
        single = cross_attend_concat(Tensor(a[i]), Tensor(b[i]), p).pooled.data
        np.testing.assert_allclose(batched[i], single, atol=1e-5)


# ------------------------------------------------------------ multistage


def stages(d=8, seed=0):
    rng = Rng(seed)
    return init_fusion_block(d, 2, rng), init_fusion_block(d, 2, rng), init_linear(rng, 64, d)


@pytest.mark.parametrize("mode", ["pooled", "tokens"])
def test_multistage_shape_and_composition(mode):
    rng = np.random.default_rng(8)
    p1, p2, proj = stages()
    mri, pet, tok = rng.normal(size=(6, 8)), rng.normal(size=(6, 8)), rng.normal(size=(64,))
    out = multistage_fuse(Tensor(mri), Tensor(pet), Tensor(tok), p1, p2, proj, stage3_input=mode)
    assert out.shape == (8,)
    s1_tokens, s1_pooled = np_fuse(mri.astype(np.float32), pet.astype(np.float32), p1)
    image_side = s1_pooled[None, :] if mode == "pooled" else s1_tokens
    token_seq = (tok.astype(np.float32) @ proj.weight.data + proj.bias.data)[None, :]
    _, expected = np_fuse(image_side, token_seq, p2)
    np.testing.assert_allclose(out.data, expected, atol=1e-4, rtol=1e-4)


def test_multistage_zero_token_is_finite():
    rng = np.random.default_rng(9)
    p1, p2, proj = stages()
    out = multistage_fuse(Tensor(rng.normal(size=(4, 8))), Tensor(rng.normal(size=(4, 8))), Tensor(np.zeros(64)), p1, p2, proj)
    assert np.all(np.isfinite(out.data))


def test_multistage_token_width_error():
    p1, p2, proj = stages()
    with pytest.raises(DimensionError):
        multistage_fuse(Tensor(np.ones((4, 8))), Tensor(np.ones((4, 8))), Tensor(np.ones(63)), p1, p2, proj)


def test_multistage_bad_mode():
    p1, p2, proj = stages()
    with pytest.raises(ValueError):
        multistage_fuse(Tensor(np.ones((4, 8))), Tensor(np.ones((4, 8))), Tensor(np.ones(64)), p1, p2, proj, "both")


def test_multistage_returns_stage1():
    rng = np.random.default_rng(10)
    p1, p2, proj = stages()
    mri, pet = Tensor(rng.normal(size=(4, 8))), Tensor(rng.normal(size=(4, 8)))
    _, s1 = multistage_fuse(mri, pet, Tensor(rng.normal(size=64)), p1, p2, proj, return_stage1=True)
    np.testing.assert_allclose(s1.pooled.data, cross_attend_concat(mri, pet, p1).pooled.data, atol=1e-7)


@pytest.mark.parametrize("mode", ["pooled", "tokens"])
def test_stage3_query_key_weights_are_the_only_dead_parameters(mode):
    rng = np.random.default_rng(11)
    p1, p2, proj = stages()
    mri = Tensor(rng.normal(size=(4, 8)))
    pet = Tensor(rng.normal(size=(4, 8)))
    out = multistage_fuse(mri, pet, Tensor(rng.normal(size=64)), p1, p2, proj, stage3_input=mode)
    backward(T.sum_all(T.mul(out, Tensor(rng.normal(size=8)))))
    dead = set()
    for prefix, obj in (("p1", p1), ("p2", p2), ("proj", proj)):
        for name, t in named_parameters(obj):
            if t.grad is None or not np.any(t.grad):
                dead.add(f"{prefix}.{name}")
    expected = {f"p2.attn_ba.{w}.{i}" for w in ("wq", "wk") for i in range(2)}
    if mode == "pooled":
        expected |= {f"p2.attn_ab.{w}.{i}" for w in ("wq", "wk") for i in range(2)}
    assert dead == expected


# ------------------------------------------------------------ summaries


def test_image_summary_rounds_to_three_decimals():
    pooled = Tensor(np.array([0.12345, -1.98765, 2.0, 0.0005, 3.3, 4.4, 5.5, 6.6, 7.7]))
    assert image_summary(pooled, k=4) == [0.123, -1.988, 2.0, 0.001]


def test_image_summary_too_long():
    with pytest.raises(DimensionError):
        image_summary(Tensor(np.zeros(8)), k=9)


def test_summary_round_trip():
    values = image_summary(Tensor(np.random.default_rng(12).normal(size=8)))
    assert parse_summary(format_summary(values)) == values


def test_parse_summary_errors():
    with pytest.raises(ParseError):
        parse_summary("no brackets here")
    with pytest.raises(ParseError):
        parse_summary("[1.0, abc]")
