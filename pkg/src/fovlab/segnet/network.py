"""UNet definition: configuration, parameter layout, forward/backward, checkpoints.

Architecture, for depth d and base width b:

  encoder level l in [0, d):  conv3x3 -> ReLU -> conv3x3 -> ReLU -> dropout,
                              channels b * 2^l; 2x2 max-pool between levels
  bottleneck:                 same double-conv block at b * 2^d channels
  decoder level l in (d, 0]:  nearest 2x upsample -> conv3x3 halving channels
                              -> concat encoder skip -> two conv3x3+ReLU -> dropout
  head:                       1x1 conv to 1 channel -> sigmoid

Input counts are normalized per image by log1p followed by max-scaling into
[0, 1] before the first layer.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..types import BevImage, GridSpec, ProbMap
from . import layers as L

PROB_CLIP = 1e-7  # keeps probability maps strictly inside (0, 1)

FVNT_MAGIC = b"FVNT"
FVNT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    """UNet hyperparameters. depth counts downsampling stages."""

    depth: int = 4
    base_channels: int = 8
    dropout_rate: float = 0.10
    resolution: int = 64

    def __post_init__(self):
        if not 3 <= self.depth <= 6:
            raise ValueError("depth must lie in [3, 6]")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.resolution < 8 or self.resolution % (2 ** self.depth) != 0:
            raise ValueError(
                f"resolution {self.resolution} must be >= 8 and divisible by 2^depth={2 ** self.depth}")


def conv_specs(cfg: NetConfig) -> list[tuple[str, int, int, int]]:
    """Canonical (name, out_ch, in_ch, kernel) list in forward execution order."""
    specs = []
    ch_in = 1
    for l in range(cfg.depth):
        ch_out = cfg.base_channels * (2 ** l)
        specs.append((f"enc{l}.c1", ch_out, ch_in, 3))
        specs.append((f"enc{l}.c2", ch_out, ch_out, 3))
        ch_in = ch_out
    ch_out = cfg.base_channels * (2 ** cfg.depth)
    specs.append(("bott.c1", ch_out, ch_in, 3))
    specs.append(("bott.c2", ch_out, ch_out, 3))
    for l in reversed(range(cfg.depth)):
        ch = cfg.base_channels * (2 ** l)
        specs.append((f"dec{l}.up", ch, 2 * ch, 3))
        specs.append((f"dec{l}.c1", ch, 2 * ch, 3))
        specs.append((f"dec{l}.c2", ch, ch, 3))
    specs.append(("head", 1, cfg.base_channels, 1))
    return specs


def parameter_count(cfg: NetConfig) -> int:
    return sum(o * i * k * k + o for _, o, i, k in conv_specs(cfg))


@dataclass
class Network:
    """Parameter container; `params` maps '<conv>.W' / '<conv>.b' to arrays."""

    config: NetConfig
    params: dict = field(default_factory=dict)
    seed: int = 0

    def param_names(self) -> list[str]:
        names = []
        for name, _, _, _ in conv_specs(self.config):
            names.extend([f"{name}.W", f"{name}.b"])
        return names

    @property
    def dtype(self):
        return self.params["head.W"].dtype

    def copy(self) -> "Network":
        return Network(self.config, {k: v.copy() for k, v in self.params.items()}, self.seed)


def unet_init(cfg: NetConfig, seed: int = 0, dtype=np.float32) -> Network:
    """He-uniform weights, zero biases; bit-deterministic per (cfg, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    params = {}
    for name, out_ch, in_ch, k in conv_specs(cfg):
        fan_in = in_ch * k * k
        limit = np.sqrt(6.0 / fan_in)
        params[f"{name}.W"] = rng.uniform(-limit, limit, (out_ch, in_ch, k, k)).astype(dtype)
        params[f"{name}.b"] = np.zeros(out_ch, dtype=dtype)
    net = Network(cfg, params, seed)
    assert sum(p.size for p in params.values()) == parameter_count(cfg)
    return net


def normalize_counts(counts: np.ndarray, dtype=np.float32) -> np.ndarray:
    """log1p then per-image max scaling into [0, 1]."""
    x = np.log1p(counts.astype(np.float64))
    m = x.max() if x.size else 0.0
    if m > 0:
        x = x / m
    return x.astype(dtype)


def forward_batch(net: Network, x: np.ndarray, drop_rng=None):
    """Run the network on a normalized channels-last (N, H, W, 1) batch.

    Returns (probs (N, H, W, 1) raw sigmoid output, caches) — caches feed
    backward_batch. Dropout is active iff drop_rng is given.
    """
    cfg = net.config
    p = net.params
    rate = cfg.dropout_rate

    def double_conv(x, name):
        a, c1 = L.conv3x3_forward(x, p[f"{name}.c1.W"], p[f"{name}.c1.b"])
        a, r1 = L.relu_forward(a)
        a, c2 = L.conv3x3_forward(a, p[f"{name}.c2.W"], p[f"{name}.c2.b"])
        a, r2 = L.relu_forward(a)
        a, dm = L.dropout_forward(a, rate, drop_rng)
        return a, (c1, r1, c2, r2, dm)

    caches = {}
    skips = []
    for l in range(cfg.depth):
        x, caches[f"enc{l}"] = double_conv(x, f"enc{l}")
        skips.append(x)
        x, caches[f"pool{l}"] = L.maxpool2_forward(x)
    x, caches["bott"] = double_conv(x, "bott")
    for l in reversed(range(cfg.depth)):
        x = L.upsample2_forward(x)
        x, caches[f"dec{l}.up"] = L.conv3x3_forward(x, p[f"dec{l}.up.W"], p[f"dec{l}.up.b"])
        x = np.concatenate([x, skips[l]], axis=3)
        x, caches[f"dec{l}"] = double_conv(x, f"dec{l}")
    logits, caches["head"] = L.conv1x1_forward(x, p["head.W"], p["head.b"])
    probs = L.sigmoid(logits)
    return probs, caches


def backward_batch(net: Network, caches: dict, dlogits: np.ndarray) -> dict:
    """Gradients of every parameter given dLoss/dlogits."""
    cfg = net.config
    grads = {}

    def double_conv_bw(d, name, cache):
        c1, r1, c2, r2, dm = cache
        d = L.dropout_backward(d, dm)
        d = L.relu_backward(d, r2)
        d, dW, db = L.conv3x3_backward(d, c2)
        grads[f"{name}.c2.W"], grads[f"{name}.c2.b"] = dW, db
        d = L.relu_backward(d, r1)
        d, dW, db = L.conv3x3_backward(d, c1)
        grads[f"{name}.c1.W"], grads[f"{name}.c1.b"] = dW, db
        return d

    d, dW, db = L.conv1x1_backward(dlogits, caches["head"])
    grads["head.W"], grads["head.b"] = dW, db

    d_skip = {}
    for l in range(cfg.depth):  # reverse of decoder execution order
        d = double_conv_bw(d, f"dec{l}", caches[f"dec{l}"])
        ch = cfg.base_channels * (2 ** l)
        d_up, d_skip[l] = d[..., :ch], d[..., ch:]
        d, dW, db = L.conv3x3_backward(d_up, caches[f"dec{l}.up"])
        grads[f"dec{l}.up.W"], grads[f"dec{l}.up.b"] = dW, db
        d = L.upsample2_backward(d)

    d = double_conv_bw(d, "bott", caches["bott"])
    for l in reversed(range(cfg.depth)):
        d = L.maxpool2_backward(d, caches[f"pool{l}"])
        d = d + d_skip[l]
        d = double_conv_bw(d, f"enc{l}", caches[f"enc{l}"])
    return grads


def _rng_from_seed(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence((int(seed),)))


def forward(net: Network, image: BevImage, dropout_active: bool = False,
            seed: int = 0) -> ProbMap:
    """Single-image forward pass -> probability map.

    With dropout_active=False the output is deterministic; otherwise dropout
    masks are drawn from `seed`.
    """
    res = net.config.resolution
    if image.spec.resolution != res:
        raise ValueError(f"image resolution {image.spec.resolution} != network resolution {res}")
    x = normalize_counts(image.counts, np.float32 if net.dtype == np.float32 else np.float64)
    drop_rng = _rng_from_seed(seed) if dropout_active else None
    probs, _ = forward_batch(net, x[None, :, :, None], drop_rng=drop_rng)
    values = np.clip(probs[0, :, :, 0].astype(np.float64), PROB_CLIP, 1.0 - PROB_CLIP)
    return ProbMap(image.spec, values)


def save_checkpoint(path, net: Network) -> None:
    """FVNT checkpoint: magic, u32 version, length-prefixed JSON config,
    then parameters as little-endian f32 in canonical layer order."""
    cfg = net.config
    header = json.dumps({
        "depth": cfg.depth, "base_channels": cfg.base_channels,
        "dropout_rate": cfg.dropout_rate, "resolution": cfg.resolution,
    }, sort_keys=True).encode("ascii")
    with open(path, "wb") as f:
        f.write(FVNT_MAGIC)
        f.write(struct.pack("<I", FVNT_VERSION))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for name in net.param_names():
            f.write(net.params[name].astype("<f4").tobytes(order="C"))


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != FVNT_MAGIC:
        raise DataError(f"{path}: not an FVNT checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FVNT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", data, 8)
    try:
        doc = json.loads(data[12:12 + hlen].decode("ascii"))
        cfg = NetConfig(**doc)
    except (ValueError, TypeError) as e:
        raise DataError(f"{path}: malformed checkpoint header ({e})") from e
    net = Network(cfg, {}, seed=0)
    offset = 12 + hlen
    for name, out_ch, in_ch, k in conv_specs(cfg):
        for suffix, shape in ((".W", (out_ch, in_ch, k, k)), (".b", (out_ch,))):
            n_vals = int(np.prod(shape))
            raw = data[offset:offset + 4 * n_vals]
            if len(raw) != 4 * n_vals:
                raise DataError(f"{path}: truncated checkpoint")
            net.params[name + suffix] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            offset += 4 * n_vals
    if offset != len(data):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    return net
