"""Toy ConvNeXt-style image encoders.

A patchify stem followed by residual blocks of the form
depthwise 3x3 conv -> layer norm -> 1x1 expand (4x) -> GELU -> 1x1 reduce,
operating channels-last on the patch grid.  The grid is flattened
row-major into a token sequence.
"""

from dataclasses import dataclass, field

from . import tensor as T
from .errors import DimensionError
from .params import glorot, ones, zeros
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 32
    stem_patch: int = 4
    channels: int = 32
    blocks: int = 2
    kernel: int = 3

    def __post_init__(self):
        if self.image_size % self.stem_patch:
            raise DimensionError(
                f"image size {self.image_size} not divisible by stem patch {self.stem_patch}"
            )

    @property
    def grid(self):
        return self.image_size // self.stem_patch

    @property
    def num_tokens(self):
        return self.grid**2


@dataclass
class ConvBlockParams:
    dw_kernel: Tensor  # [k, k, C]
    dw_bias: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    expand_w: Tensor  # [C, 4C]
    expand_b: Tensor
    reduce_w: Tensor  # [4C, C]
    reduce_b: Tensor


@dataclass
class EncoderParams:
    stem_w: Tensor  # [p*p, C]
    stem_b: Tensor
    blocks: list = field(default_factory=list)


def init_encoder(config, rng):
    c, k = config.channels, config.kernel
    patch = config.stem_patch**2
    blocks = []
    for _ in range(config.blocks):
        blocks.append(
            ConvBlockParams(
                dw_kernel=glorot(rng, (k, k, c), k * k, k * k),
                dw_bias=zeros((c,)),
                ln_gain=ones((c,)),
                ln_bias=zeros((c,)),
                expand_w=glorot(rng, (c, 4 * c), c, 4 * c),
                expand_b=zeros((4 * c,)),
                reduce_w=glorot(rng, (4 * c, c), 4 * c, c),
                reduce_b=zeros((c,)),
            )
        )
    return EncoderParams(glorot(rng, (patch, c), patch, c), zeros((c,)), blocks)


def patchify(img, patch):
    """``[..., 1, S, S]`` -> ``[..., S/p, S/p, p*p]`` non-overlapping patches."""
    lead = img.shape[:-3]
    s = img.shape[-1]
    g = s // patch
    x = T.reshape(img, lead + (g, patch, g, patch))
    n = len(lead)
    axes = tuple(range(n)) + (n, n + 2, n + 1, n + 3)
    x = T.permute(x, axes)
    return T.reshape(x, lead + (g, g, patch * patch))


def conv_block(x, p):
    y = T.depthwise_conv2d(x, p.dw_kernel, p.dw_bias)
    y = T.layer_norm(y, p.ln_gain, p.ln_bias)
    y = T.gelu(T.add_bias(T.matmul(y, p.expand_w), p.expand_b))
    y = T.add_bias(T.matmul(y, p.reduce_w), p.reduce_b)
    return T.add(x, y)


def encode_image(img, params, config):
    """Encode ``[1, S, S]`` (or a batch ``[B, 1, S, S]``) into ``[(S/p)^2, C]`` tokens."""
    if not isinstance(img, Tensor):
        img = Tensor(img)
    s = config.image_size
    if img.ndim < 3 or img.shape[-3:] != (1, s, s):
        raise DimensionError(f"expected image shape [..., 1, {s}, {s}], got {list(img.shape)}")
    x = T.add_bias(T.matmul(patchify(img, config.stem_patch), params.stem_w), params.stem_b)
    for block in params.blocks:
        x = conv_block(x, block)
    lead = x.shape[:-3]
    return T.reshape(x, lead + (config.num_tokens, config.channels))
