"""The full classifier: two encoders, positional encoding, two-stage fusion, MLP head."""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .attention import PositionTable, positional_encode, sinusoidal_table
from .data_io import decode_model, encode_model
from .encoders import EncoderConfig, EncoderParams, encode_image, init_encoder
from .errors import DimensionError, FormatError
from .fusion import (
    FusionBlockParams,
    Linear,
    cross_attend_concat,
    init_fusion_block,
    init_linear,
    multistage_fuse,
)
from .params import named_parameters
from .rng import Rng
from .tensor import Tensor

TOKEN_DIM = 64


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    d_model: int = 32
    heads: int = 2
    image_size: int = 32
    stem_patch: int = 4
    encoder_blocks: int = 2
    pos_mode: str = "sum"
    mlp_hidden: tuple = (128, 64)
    stage3_input: str = "pooled"

    def __post_init__(self):
        if self.num_classes not in (2, 3, 4):
            raise ValueError(f"num_classes must be 2, 3 or 4, got {self.num_classes}")
        if self.pos_mode not in ("sum", "concat"):
            raise ValueError(f"pos_mode must be 'sum' or 'concat', got {self.pos_mode!r}")
        if self.pos_mode == "concat" and self.d_model < 2:
            raise ValueError("concat positional mode needs d_model >= 2")
        if self.stage3_input not in ("pooled", "tokens"):
            raise ValueError(f"stage3_input must be 'pooled' or 'tokens', got {self.stage3_input!r}")
        object.__setattr__(self, "mlp_hidden", tuple(self.mlp_hidden))

    @property
    def pos_width(self):
        """Positional table width: d_model in sum mode, half of it in concat mode."""
        return self.d_model if self.pos_mode == "sum" else self.d_model // 2

    @property
    def encoder(self):
        # In concat mode the encoder leaves room for the appended positional features.
        channels = self.d_model if self.pos_mode == "sum" else self.d_model - self.pos_width
        return EncoderConfig(self.image_size, self.stem_patch, channels, self.encoder_blocks)

    def to_dict(self):
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "mlp_hidden": tuple(d.get("mlp_hidden", (128, 64)))})


@dataclass
class ModelParams:
    mri_encoder: EncoderParams
    pet_encoder: EncoderParams
    pos_table: PositionTable
    fuse1: FusionBlockParams
    fuse2: FusionBlockParams
    nonimage_proj: Linear
    head: list = field(default_factory=list)


def init_model(config, seed=0):
    rng = Rng(seed)
    enc = config.encoder
    table = PositionTable(Tensor(sinusoidal_table(enc.num_tokens, config.pos_width)), config.pos_mode)
    d = config.d_model
    h1, h2 = config.mlp_hidden
    return ModelParams(
        mri_encoder=init_encoder(enc, rng),
        pet_encoder=init_encoder(enc, rng),
        pos_table=table,
        fuse1=init_fusion_block(d, config.heads, rng),
        fuse2=init_fusion_block(d, config.heads, rng),
        nonimage_proj=init_linear(rng, TOKEN_DIM, d),
        head=[init_linear(rng, d, h1), init_linear(rng, h1, h2), init_linear(rng, h2, config.num_classes)],
    )


def parameters(params):
    return list(named_parameters(params))


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    if hasattr(x, "values") and not isinstance(x, np.ndarray):  # FeatureToken
        x = x.values
    return Tensor(x)


def _features(mri, pet, token, params, config):
    enc = config.encoder
    mri_tokens = positional_encode(encode_image(mri, params.mri_encoder, enc), params.pos_table)
    pet_tokens = positional_encode(encode_image(pet, params.pet_encoder, enc), params.pos_table)
    if token.shape[-1] != TOKEN_DIM:
        raise DimensionError(f"non-image token must have {TOKEN_DIM} values, got {token.shape[-1]}")
    return multistage_fuse(
        mri_tokens,
        pet_tokens,
        token,
        params.fuse1,
        params.fuse2,
        params.nonimage_proj,
        stage3_input=config.stage3_input,
        return_stage1=True,
    )


def forward(mri, pet, token, params, config):
    """Raw logits ``[num_classes]`` (or ``[B, num_classes]`` for batched input).

    Images are ``[1, S, S]`` / ``[B, 1, S, S]``; ``token`` is the 64-value
    non-image embedding (``[64]`` / ``[B, 64]``).
    """
    mri, pet, token = _as_tensor(mri), _as_tensor(pet), _as_tensor(token)
    pooled, _ = _features(mri, pet, token, params, config)
    x = pooled
    for i, layer in enumerate(params.head):
        x = layer(x)
        if i < len(params.head) - 1:
            x = T.relu(x)
    return x


def image_features(mri, pet, params, config):
    """Stage-one pooled MRI/PET features (the image summary source), no token needed."""
    mri, pet = _as_tensor(mri), _as_tensor(pet)
    enc = config.encoder
    with T.no_grad():
        mri_tokens = positional_encode(encode_image(mri, params.mri_encoder, enc), params.pos_table)
        pet_tokens = positional_encode(encode_image(pet, params.pet_encoder, enc), params.pos_table)
        return cross_attend_concat(mri_tokens, pet_tokens, params.fuse1)


def predict(logits):
    """Argmax over the last axis; ties go to the lowest index."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    out = np.argmax(data, axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def softmax(logits):
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    e = np.exp(data - data.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def save_model(params, config, path, meta=None):
    named = [(name, t.data) for name, t in parameters(params)]
    with open(path, "wb") as fh:
        fh.write(encode_model(named, config.to_dict(), meta))


def load_model(path, with_meta=False):
    with open(path, "rb") as fh:
        buf = fh.read()
    header, arrays = decode_model(buf)
    try:
        config = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid model config in header: {exc}", offset=9) from exc
    params = init_model(config)
    expected = parameters(params)
    names = [n for n, _ in expected]
    if sorted(names) != sorted(arrays):
        missing = sorted(set(names) - set(arrays))
        extra = sorted(set(arrays) - set(names))
        raise FormatError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
    for name, t in expected:
        if t.shape != arrays[name].shape:
            raise FormatError(f"parameter {name}: shape {arrays[name].shape}, expected {t.shape}")
        t.data = arrays[name].copy()
    if with_meta:
        return params, config, header.get("meta", {})
    return params, config
