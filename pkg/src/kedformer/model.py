"""Encoder-decoder forecaster with progressive seasonal-trend decomposition.

The encoder keeps only seasonal parts after each decomposition. The decoder
runs self-attention, cross-attention and a feed-forward block, decomposes
after each, and projects every extracted trend into data space where it is
added to a running trend. The forecast is the projected final seasonal
stream plus the accumulated trend, restricted to the last ``horizon`` rows.

Parameters live in a flat ``{name: Tensor}`` dict so the optimizer,
checkpointing and gradient checks can treat them uniformly.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .decomp import DEFAULT_KERNEL, mstw_decompose
from .errors import ConfigurationError, DimensionError, IncompatibleCheckpointError
from .keda import AttentionConfig, Variant, keda_attention
from .numerics import Tensor, add, as_tensor, check_finite, concat, getitem, linear, matmul, relu

ABLATIONS = ("KEDformer", "V1", "V2")


def configure_ablation(variant):
    """Attention variant per position for the three ablation layouts.

    Returns ``{"self": Variant, "cross": Variant}``; the self entry applies to
    both encoder and decoder self-attention.
    """
    layouts = {
        "KEDformer": (Variant.KEDATT, Variant.KEDATT),
        "V1": (Variant.KEDATT, Variant.KEDATT_F),
        "V2": (Variant.KEDATT_F, Variant.KEDATT_F),
    }
    if variant not in layouts:
        raise ConfigurationError(f"unknown ablation variant {variant!r}; expected one of {ABLATIONS}")
    self_v, cross_v = layouts[variant]
    return {"self": self_v, "cross": cross_v}


@dataclass(frozen=True)
class ModelConfig:
    input_len: int = 96
    horizon: int = 24
    feature_dim: int = 1
    d_model: int = 32
    enc_layers: int = 2
    dec_layers: int = 1
    ma_kernel: int = DEFAULT_KERNEL
    ff_hidden: int = 0  # 0 means 4 * d_model
    enc_self: AttentionConfig = field(default_factory=AttentionConfig)
    dec_self: AttentionConfig = field(default_factory=AttentionConfig)
    dec_cross: AttentionConfig = field(default_factory=AttentionConfig)

    def __post_init__(self):
        for name in ("input_len", "horizon", "feature_dim", "d_model", "ma_kernel"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.input_len % 2:
            raise ConfigurationError(f"input length must be even, got {self.input_len}")
        if self.ma_kernel % 2 == 0:
            raise ConfigurationError(f"moving-average kernel must be odd, got {self.ma_kernel}")
        if self.enc_layers < 0 or self.dec_layers < 0:
            raise ConfigurationError("layer counts must be non-negative")
        for att in (self.enc_self, self.dec_self, self.dec_cross):
            if self.d_model % att.heads:
                raise ConfigurationError(f"d_model {self.d_model} is not divisible by {att.heads} heads")
        if self.ff_hidden == 0:
            object.__setattr__(self, "ff_hidden", 4 * self.d_model)

    @property
    def decoder_len(self):
        return self.input_len // 2 + self.horizon

    @classmethod
    def for_ablation(cls, variant="KEDformer", heads=8, factor=3.0, **kwargs):
        layout = configure_ablation(variant)
        self_att = AttentionConfig(factor=factor, heads=heads, variant=layout["self"])
        cross_att = AttentionConfig(factor=factor, heads=heads, variant=layout["cross"])
        return cls(enc_self=self_att, dec_self=self_att, dec_cross=cross_att, **kwargs)

    def with_attention(self, variant, heads=None, factor=None):
        """Same config with every attention position set to ``variant``."""
        att = AttentionConfig(
            factor=self.enc_self.factor if factor is None else factor,
            heads=self.enc_self.heads if heads is None else heads,
            variant=variant,
        )
        return replace(self, enc_self=att, dec_self=att, dec_cross=att)

    def to_dict(self):
        out = asdict(self)
        for key in ("enc_self", "dec_self", "dec_cross"):
            out[key] = getattr(self, key).to_dict()
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        for key in ("enc_self", "dec_self", "dec_cross"):
            data[key] = AttentionConfig(**data[key])
        return cls(**data)


# ------------------------------------------------------------------ params
def parameter_shapes(cfg):
    """Ordered ``(name, shape)`` list; the order fixes initialisation and I/O."""
    d, D, h = cfg.d_model, cfg.feature_dim, cfg.ff_hidden
    shapes = []

    def dense(prefix, fan_in, fan_out, bias=True):
        shapes.append((f"{prefix}.weight", (fan_in, fan_out)))
        if bias:
            shapes.append((f"{prefix}.bias", (fan_out,)))

    def attention(prefix):
        for proj in ("q", "k", "v", "o"):
            dense(f"{prefix}.{proj}", d, d)

    dense("embed_enc", D, d)
    dense("embed_dec", D, d)
    for layer in range(cfg.enc_layers):
        attention(f"enc{layer}.self")
        dense(f"enc{layer}.ff1", d, h)
        dense(f"enc{layer}.ff2", h, d)
    for layer in range(cfg.dec_layers):
        attention(f"dec{layer}.self")
        attention(f"dec{layer}.cross")
        dense(f"dec{layer}.ff1", d, h)
        dense(f"dec{layer}.ff2", h, d)
        for i in (1, 2, 3):
            dense(f"dec{layer}.trend{i}", d, D, bias=False)
    dense("out", d, D)
    return shapes


def init_params(cfg, seed=0):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) draws in :func:`parameter_shapes` order."""
    rng = np.random.default_rng(seed)
    params = {}
    fan_in = {}
    for name, shape in parameter_shapes(cfg):
        prefix = name.rsplit(".", 1)[0]
        if name.endswith(".weight"):
            fan_in[prefix] = shape[0]
        bound = 1.0 / math.sqrt(fan_in[prefix])
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)
    return params


def zero_params(cfg):
    return {name: Tensor(np.zeros(shape), requires_grad=True, name=name) for name, shape in parameter_shapes(cfg)}


def count_params(cfg):
    return int(sum(np.prod(shape) for _, shape in parameter_shapes(cfg)))


# ------------------------------------------------------------------ blocks
def positional_encoding(length, width):
    pos = np.arange(length)[:, None]
    rate = np.exp(-math.log(10000.0) * (np.arange(0, width, 2) / width))
    pe = np.zeros((length, width))
    pe[:, 0::2] = np.sin(pos * rate)
    pe[:, 1::2] = np.cos(pos * rate[: width // 2])
    return pe


def embed(x, params, prefix):
    x = as_tensor(x)
    h = linear(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"])
    return add(h, positional_encoding(x.shape[-2], h.shape[-1]))


def attention_block(x_q, x_kv, params, prefix, att_cfg):
    p = params
    q = linear(x_q, p[f"{prefix}.q.weight"], p[f"{prefix}.q.bias"])
    k = linear(x_kv, p[f"{prefix}.k.weight"], p[f"{prefix}.k.bias"])
    v = linear(x_kv, p[f"{prefix}.v.weight"], p[f"{prefix}.v.bias"])
    out = keda_attention(q, k, v, att_cfg)
    return linear(out, p[f"{prefix}.o.weight"], p[f"{prefix}.o.bias"])


def feed_forward(x, params, prefix):
    hidden = relu(linear(x, params[f"{prefix}.ff1.weight"], params[f"{prefix}.ff1.bias"]))
    return linear(hidden, params[f"{prefix}.ff2.weight"], params[f"{prefix}.ff2.bias"])


def init_decoder_inputs(x_en, cfg):
    """Seasonal and trend decoder seeds of length ``I/2 + O``.

    The last ``I/2`` input steps are decomposed; the seasonal seed is padded
    with zeros and the trend seed with the per-feature input mean.
    """
    x_en = np.asarray(x_en.data if isinstance(x_en, Tensor) else x_en, dtype=np.float64)
    length = x_en.shape[-2]
    if length % 2:
        raise ConfigurationError(f"input length must be even, got {length}")
    pair = mstw_decompose(x_en[..., length // 2:, :], cfg.ma_kernel)
    lead = x_en.shape[:-2]
    zeros = np.zeros(lead + (cfg.horizon, x_en.shape[-1]))
    means = np.broadcast_to(x_en.mean(axis=-2, keepdims=True), zeros.shape)
    x_des = np.concatenate([pair.seasonal.data, zeros], axis=-2)
    x_det = np.concatenate([pair.trend.data, means], axis=-2)
    return x_des, x_det


def encoder_layer(x, params, layer, cfg):
    """Attention and feed-forward, each followed by decomposition; trends dropped."""
    prefix = f"enc{layer}"
    s1 = mstw_decompose(add(attention_block(x, x, params, f"{prefix}.self", cfg.enc_self), x), cfg.ma_kernel).seasonal
    s2 = mstw_decompose(add(feed_forward(s1, params, prefix), s1), cfg.ma_kernel).seasonal
    return s2


def decoder_layer(x, trend, enc_out, params, layer, cfg):
    """One decoder layer; returns the seasonal stream and the updated trend."""
    prefix = f"dec{layer}"
    x = as_tensor(x)
    if enc_out.shape[-1] != x.shape[-1]:
        raise DimensionError(f"encoder width {enc_out.shape[-1]} != decoder width {x.shape[-1]}")
    d1 = mstw_decompose(add(attention_block(x, x, params, f"{prefix}.self", cfg.dec_self), x), cfg.ma_kernel)
    d2 = mstw_decompose(
        add(attention_block(d1.seasonal, enc_out, params, f"{prefix}.cross", cfg.dec_cross), d1.seasonal),
        cfg.ma_kernel,
    )
    d3 = mstw_decompose(add(feed_forward(d2.seasonal, params, prefix), d2.seasonal), cfg.ma_kernel)
    for i, part in enumerate((d1, d2, d3), start=1):
        trend = add(trend, matmul(part.trend, params[f"{prefix}.trend{i}.weight"]))
    return d3.seasonal, trend


def forward(x_en, params, cfg):
    """Forecast ``(..., O, D)`` from a standardized ``(..., I, D)`` input window."""
    x_en = np.asarray(x_en.data if isinstance(x_en, Tensor) else x_en, dtype=np.float64)
    if x_en.shape[-2:] != (cfg.input_len, cfg.feature_dim):
        raise DimensionError(
            f"expected input (..., {cfg.input_len}, {cfg.feature_dim}), got {x_en.shape}"
        )
    x_des, x_det = init_decoder_inputs(x_en, cfg)
    enc = check_finite(embed(x_en, params, "embed_enc"), "encoder embedding")
    for layer in range(cfg.enc_layers):
        enc = check_finite(encoder_layer(enc, params, layer, cfg), f"encoder layer {layer}")
    dec = check_finite(embed(x_des, params, "embed_dec"), "decoder embedding")
    trend = Tensor(x_det)
    for layer in range(cfg.dec_layers):
        dec, trend = decoder_layer(dec, trend, enc, params, layer, cfg)
        check_finite(dec, f"decoder layer {layer} seasonal stream")
        check_finite(trend, f"decoder layer {layer} trend")
    seasonal = linear(dec, params["out.weight"], params["out.bias"])
    pred = add(seasonal, trend)
    index = (Ellipsis, slice(cfg.decoder_len - cfg.horizon, None), slice(None))
    return check_finite(getitem(pred, index), "forecast head")


class KEDformer:
    """Config plus parameter dict with convenience wrappers."""

    def __init__(self, cfg, params=None, seed=0):
        self.cfg = cfg
        self.seed = seed
        self.params = init_params(cfg, seed) if params is None else params

    def __call__(self, x):
        return forward(x, self.params, self.cfg)

    def predict(self, x):
        return forward(x, self.params, self.cfg).data

    def parameters(self):
        return list(self.params.values())

    def n_params(self):
        return int(sum(p.data.size for p in self.params.values()))

    def state(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, state):
        for name, value in state.items():
            self.params[name].data = np.array(value, dtype=np.float64)

    def save(self, path, extra=None):
        save_checkpoint(path, self.cfg, self.params, self.seed, extra)

    @classmethod
    def load(cls, path):
        cfg, params, seed, _ = load_checkpoint(path)
        return cls(cfg, params, seed)


# -------------------------------------------------------------- checkpoint
CHECKPOINT_MAGIC = b"KEDFCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, cfg, params, seed, extra=None):
    """Write a checkpoint: magic, version, JSON header, raw float64 arrays.

    Byte layout: 8-byte magic ``KEDFCKPT``; little-endian uint32 format
    version; little-endian uint64 header length; UTF-8 JSON header with keys
    ``format_version``, ``model_config``, ``seed``, ``extra`` and ``tensors``
    (a list of ``{name, shape, offset, count}``, offsets in float64 units);
    then every tensor as little-endian float64, row-major, in header order.
    Output is a pure function of the inputs.
    """
    names = [name for name, _ in parameter_shapes(cfg)]
    if set(names) != set(params):
        raise IncompatibleCheckpointError("parameter names do not match the model config")
    entries, offset = [], 0
    for name in names:
        data = params[name].data
        entries.append({"name": name, "shape": list(data.shape), "offset": offset, "count": int(data.size)})
        offset += int(data.size)
    header = json.dumps(
        {"format_version": CHECKPOINT_VERSION, "model_config": cfg.to_dict(), "seed": seed,
         "extra": extra or {}, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for name in names:
            fh.write(np.ascontiguousarray(params[name].data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns ``(cfg, params, seed, extra)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise IncompatibleCheckpointError(f"{path} is not a kedformer checkpoint")
    version, header_len = struct.unpack("<IQ", blob[8:20])
    if version != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[20:20 + header_len].decode("utf-8"))
    cfg = ModelConfig.from_dict(header["model_config"])
    body = np.frombuffer(blob[20 + header_len:], dtype="<f8")
    params = {}
    for entry in header["tensors"]:
        chunk = body[entry["offset"]:entry["offset"] + entry["count"]]
        params[entry["name"]] = Tensor(chunk.reshape(entry["shape"]).astype(np.float64),
                                       requires_grad=True, name=entry["name"])
    expected = dict(parameter_shapes(cfg))
    if {k: tuple(v.shape) for k, v in params.items()} != {k: tuple(v) for k, v in expected.items()}:
        raise IncompatibleCheckpointError("checkpoint tensors do not match its model config")
    return cfg, params, header["seed"], header.get("extra", {})
