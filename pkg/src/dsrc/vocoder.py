"""Forward pass of a unit-conditioned HiFi-GAN generator and its discriminators.

The generator embeds content and F0 codes through look-up tables, holds
each F0 embedding for ``r`` content frames, appends the speaker embedding
to every frame and upsamples with transposed convolutions interleaved with
multi-receptive-field residual blocks. Everything runs in numpy (or the
numba conv kernel); there is no training code here.

Weights travel in the ``WGTS`` container::

    magic "WGTS" | version u8 | count u32 | count x tensor
    tensor: name_len u16 | utf-8 name | rank u8 | dims u32[rank] | f32[prod(dims)]
"""

from dataclasses import dataclass, field
from math import prod
from pathlib import Path
import struct

import numpy as np

from .errors import ConfigError, FormatError
from .kernels import conv1d
from .quantize import F0CodeSequence, UnitSequence
from .signal import AudioClip

__all__ = [
    "SPEAKER_DIM",
    "GeneratorConfig",
    "Generator",
    "SpeakerTable",
    "ActivationStack",
    "DiscriminatorConfig",
    "Discriminators",
    "generator_shapes",
    "init_generator_weights",
    "load_generator",
    "save_weights",
    "load_weights",
    "generate",
    "discriminate_mpd",
    "discriminate_msd",
    "conv_transpose1d",
    "leaky_relu",
]

SPEAKER_DIM = 256

_DEFAULT_RATES = {320: (5, 4, 4, 2, 2), 160: (5, 4, 2, 2, 2)}


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------

def leaky_relu(x, slope=0.1):
    return np.where(x > 0, x, slope * x)


def _same(kernel, dilation=1):
    total = dilation * (kernel - 1)
    return (total // 2, total - total // 2)


def conv_transpose1d(x, weight, bias, stride, trim, out_len):
    """Transposed 1-D convolution; ``weight`` is ``[in, out, kernel]``.

    The full output (length ``(T-1)*stride + kernel``) is cropped to
    ``[trim, trim + out_len)``.
    """
    batch, cin, t = x.shape
    ksize = weight.shape[-1]
    stuffed = np.zeros((batch, cin, (t - 1) * stride + 1))
    stuffed[:, :, ::stride] = x
    flipped = np.ascontiguousarray(weight.transpose(1, 0, 2)[:, :, ::-1])
    full = conv1d(stuffed, flipped, bias, padding=(ksize - 1, ksize - 1))
    if trim + out_len > full.shape[-1]:
        raise ValueError(f"cannot crop {out_len} samples at offset {trim} from {full.shape[-1]}")
    return full[:, :, trim:trim + out_len]


# --------------------------------------------------------------------------
# weight container
# --------------------------------------------------------------------------

_MAGIC = b"WGTS"
_VERSION = 1


def save_weights(path, tensors) -> None:
    """Write a name -> array mapping in insertion order as float32."""
    out = [struct.pack("<4sBI", _MAGIC, _VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


def load_weights(path) -> dict:
    """Read a ``WGTS`` file into an ordered dict of float32 arrays."""
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated weight file at byte {pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    magic, version, count = struct.unpack("<4sBI", take(9))
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported weight file version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        arr = np.frombuffer(take(4 * prod(dims)), dtype="<f4").reshape(dims)
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor {name!r}")
        tensors[name] = arr
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    return tensors


def _check_tensors(tensors, shapes, what):
    for name, shape in shapes.items():
        if name not in tensors:
            raise ConfigError(f"{what}: missing tensor {name!r}")
        found = tuple(np.shape(tensors[name]))
        if found != tuple(shape):
            raise ConfigError(f"{what}: tensor {name!r} expected shape {tuple(shape)}, found {found}")
        if not np.all(np.isfinite(tensors[name])):
            raise ConfigError(f"{what}: tensor {name!r} has non-finite values")
    extra = set(tensors) - set(shapes)
    if extra:
        raise ConfigError(f"{what}: unexpected tensors {sorted(extra)}")
    return {name: np.asarray(tensors[name], dtype=np.float64) for name in shapes}


def _random_tensors(shapes, seed, scale):
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in shapes.items():
        if name.startswith("lut_"):
            out[name] = rng.standard_normal(shape)
        elif name.endswith(".bias"):
            out[name] = 0.01 * rng.standard_normal(shape)
        else:
            fan_in = prod(shape) // shape[0] if len(shape) > 1 else shape[0]
            out[name] = scale * rng.standard_normal(shape) / np.sqrt(max(fan_in, 1))
    return out


# --------------------------------------------------------------------------
# generator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    content_vocab: int
    f0_vocab: int
    content_embed_dim: int = 128
    f0_embed_dim: int = 128
    speaker_dim: int = SPEAKER_DIM
    hidden_channels: int = 128
    upsample_rates: tuple = (5, 4, 4, 2, 2)
    resblock_kernels: tuple = (3, 7, 11)
    resblock_dilations: tuple = ((1, 3, 5), (1, 3, 5), (1, 3, 5))
    pre_kernel: int = 7
    post_kernel: int = 7
    leaky_slope: float = 0.1
    sample_rate: int = 16000

    def __post_init__(self):
        object.__setattr__(self, "upsample_rates", tuple(int(u) for u in self.upsample_rates))
        object.__setattr__(self, "resblock_kernels", tuple(int(k) for k in self.resblock_kernels))
        object.__setattr__(self, "resblock_dilations",
                           tuple(tuple(int(d) for d in ds) for ds in self.resblock_dilations))
        if self.content_vocab < 1 or self.f0_vocab < 1:
            raise ConfigError("vocabularies must be at least 1")
        if self.speaker_dim != SPEAKER_DIM:
            raise ConfigError(f"speaker_dim must be {SPEAKER_DIM}, got {self.speaker_dim}")
        if not self.upsample_rates or min(self.upsample_rates) < 1:
            raise ConfigError("upsample_rates must be positive integers")
        if len(self.resblock_kernels) != len(self.resblock_dilations):
            raise ConfigError("one dilation set per residual kernel size is required")

    @classmethod
    def for_hop(cls, hop: int, content_vocab: int, f0_vocab: int, **kwargs):
        if hop not in _DEFAULT_RATES:
            raise ConfigError(f"no default upsampling stack for hop {hop}; pass upsample_rates")
        return cls(content_vocab, f0_vocab, upsample_rates=_DEFAULT_RATES[hop], **kwargs)

    @property
    def hop(self) -> int:
        return prod(self.upsample_rates)

    def stage_channels(self):
        """Channel count after each upsampling stage."""
        return [max(self.hidden_channels // 2 ** (i + 1), 1) for i in range(len(self.upsample_rates))]


def generator_shapes(cfg: GeneratorConfig) -> dict:
    """Every tensor the generator needs, in file order."""
    cin = cfg.content_embed_dim + cfg.f0_embed_dim + cfg.speaker_dim
    shapes = {
        "lut_content": (cfg.content_vocab, cfg.content_embed_dim),
        "lut_f0": (cfg.f0_vocab, cfg.f0_embed_dim),
        "conv_pre.weight": (cfg.hidden_channels, cin, cfg.pre_kernel),
        "conv_pre.bias": (cfg.hidden_channels,),
    }
    ch_in = cfg.hidden_channels
    for i, (u, ch) in enumerate(zip(cfg.upsample_rates, cfg.stage_channels())):
        shapes[f"ups.{i}.weight"] = (ch_in, ch, 2 * u)
        shapes[f"ups.{i}.bias"] = (ch,)
        for j, (k, dils) in enumerate(zip(cfg.resblock_kernels, cfg.resblock_dilations)):
            for m in range(len(dils)):
                for conv in ("convs1", "convs2"):
                    shapes[f"resblocks.{i}.{j}.{conv}.{m}.weight"] = (ch, ch, k)
                    shapes[f"resblocks.{i}.{j}.{conv}.{m}.bias"] = (ch,)
        ch_in = ch
    shapes["conv_post.weight"] = (1, ch_in, cfg.post_kernel)
    shapes["conv_post.bias"] = (1,)
    return shapes


def init_generator_weights(cfg: GeneratorConfig, seed: int = 0, scale: float = 1.0) -> dict:
    """Seeded random weights (fan-in scaled normals, unit-normal look-up tables)."""
    return _random_tensors(generator_shapes(cfg), seed, scale)


class Generator:
    """Immutable generator: config plus validated float64 weights."""

    def __init__(self, config: GeneratorConfig, weights: dict):
        self.config = config
        self.weights = _check_tensors(weights, generator_shapes(config), "generator")
        for arr in self.weights.values():
            arr.setflags(write=False)

    def _resblock(self, x, i, j):
        cfg = self.config
        w = self.weights
        k = cfg.resblock_kernels[j]
        for m, d in enumerate(cfg.resblock_dilations[j]):
            pre = f"resblocks.{i}.{j}"
            xt = leaky_relu(x, cfg.leaky_slope)
            xt = conv1d(xt, w[f"{pre}.convs1.{m}.weight"], w[f"{pre}.convs1.{m}.bias"],
                        dilation=d, padding=_same(k, d))
            xt = leaky_relu(xt, cfg.leaky_slope)
            xt = conv1d(xt, w[f"{pre}.convs2.{m}.weight"], w[f"{pre}.convs2.{m}.bias"],
                        padding=_same(k))
            x = x + xt
        return x

    def forward(self, content_codes, f0_codes, speaker, ratio: int) -> np.ndarray:
        cfg = self.config
        w = self.weights
        content_codes = np.asarray(content_codes, dtype=np.int64)
        f0_codes = np.asarray(f0_codes, dtype=np.int64)
        length = len(content_codes)
        emb_c = w["lut_content"][content_codes]
        emb_f = np.repeat(w["lut_f0"][f0_codes], ratio, axis=0)[:length]
        spk = np.broadcast_to(speaker, (length, cfg.speaker_dim))
        x = np.concatenate([emb_c, emb_f, spk], axis=1).T[None]
        x = conv1d(x, w["conv_pre.weight"], w["conv_pre.bias"], padding=_same(cfg.pre_kernel))
        nres = len(cfg.resblock_kernels)
        for i, u in enumerate(cfg.upsample_rates):
            x = leaky_relu(x, cfg.leaky_slope)
            x = conv_transpose1d(x, w[f"ups.{i}.weight"], w[f"ups.{i}.bias"], u,
                                 trim=u // 2, out_len=x.shape[-1] * u)
            acc = self._resblock(x, i, 0)
            for j in range(1, nres):
                acc = acc + self._resblock(x, i, j)
            x = acc / nres
        x = leaky_relu(x, cfg.leaky_slope)
        x = conv1d(x, w["conv_post.weight"], w["conv_post.bias"], padding=_same(cfg.post_kernel))
        return np.tanh(x[0, 0])


def load_generator(path, config: GeneratorConfig) -> Generator:
    return Generator(config, load_weights(path))


def _rate_ratio(content_rate, f0_rate):
    ratio = content_rate / f0_rate
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"content rate {content_rate} Hz is not an integer multiple of F0 rate {f0_rate} Hz")
    return r


def generate(gen: Generator, units: UnitSequence, f0: F0CodeSequence, speaker) -> AudioClip:
    """Synthesize ``len(units) * prod(upsample_rates)`` samples."""
    cfg = gen.config
    if len(units) == 0:
        raise ValueError("empty content sequence")
    if units.vocab > cfg.content_vocab or f0.vocab > cfg.f0_vocab:
        raise ConfigError(
            f"code vocabularies ({units.vocab}, {f0.vocab}) exceed the generator's "
            f"({cfg.content_vocab}, {cfg.f0_vocab})"
        )
    r = _rate_ratio(units.frame_rate, f0.frame_rate)
    if len(f0) * r < len(units):
        raise ConfigError(f"{len(f0)} F0 codes x {r} cannot cover {len(units)} content frames")
    speaker = np.asarray(speaker, dtype=np.float64)
    if speaker.shape != (cfg.speaker_dim,) or not np.all(np.isfinite(speaker)):
        raise ValueError(f"speaker embedding must be a finite {cfg.speaker_dim}-vector")
    samples = gen.forward(units.codes, f0.codes, speaker, r)
    return AudioClip(samples, cfg.sample_rate)


# --------------------------------------------------------------------------
# speaker look-up table
# --------------------------------------------------------------------------

@dataclass
class SpeakerTable:
    """speaker id -> 256-dim embedding; stored as a WGTS file of ``speaker.<id>`` vectors."""

    embeddings: dict = field(default_factory=dict)

    def __post_init__(self):
        self.embeddings = {int(k): self._check(v) for k, v in self.embeddings.items()}

    @staticmethod
    def _check(v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (SPEAKER_DIM,) or not np.all(np.isfinite(v)):
            raise ValueError(f"speaker embeddings must be finite {SPEAKER_DIM}-vectors")
        return v

    def __getitem__(self, speaker_id):
        try:
            return self.embeddings[int(speaker_id)]
        except KeyError:
            raise KeyError(f"unknown speaker id {speaker_id}") from None

    def __contains__(self, speaker_id):
        return int(speaker_id) in self.embeddings

    def __len__(self):
        return len(self.embeddings)

    def ids(self):
        return sorted(self.embeddings)

    @classmethod
    def random(cls, speaker_ids, seed: int = 0):
        return cls({int(s): np.random.default_rng([seed, int(s)]).standard_normal(SPEAKER_DIM)
                    for s in speaker_ids})

    def save(self, path):
        save_weights(path, {f"speaker.{s}": self.embeddings[s] for s in self.ids()})

    @classmethod
    def load(cls, path):
        tensors = load_weights(path)
        table = {}
        for name, arr in tensors.items():
            prefix, _, sid = name.partition(".")
            if prefix != "speaker" or not sid.isdigit():
                raise FormatError(f"{path}: unexpected tensor {name!r} in speaker table")
            table[int(sid)] = arr
        return cls(table)


# --------------------------------------------------------------------------
# discriminators
# --------------------------------------------------------------------------

@dataclass
class ActivationStack:
    """Layer activations of one sub-discriminator; the last entry is the score map."""

    name: str
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an activation stack needs at least one layer")

    @property
    def scores(self) -> np.ndarray:
        return self.layers[-1]

    @property
    def sizes(self):
        return [a.size for a in self.layers]


@dataclass(frozen=True)
class DiscriminatorConfig:
    periods: tuple = (2, 3, 5, 7, 11)
    scales: tuple = (1, 2, 4)
    # period sub-discriminator: strided (kernel x 1) convs, then one unstrided
    mpd_channels: tuple = (16, 32, 64, 128, 128)
    mpd_kernel: int = 5
    mpd_stride: int = 3
    # scale sub-discriminator layers: (out_channels, kernel, stride, groups)
    msd_layers: tuple = (
        (16, 15, 1, 1),
        (16, 41, 2, 4),
        (32, 41, 2, 16),
        (64, 41, 4, 16),
        (128, 41, 4, 16),
        (128, 41, 1, 16),
        (128, 5, 1, 1),
    )
    post_kernel: int = 3
    leaky_slope: float = 0.1

    def mpd_shapes(self):
        shapes = {}
        for p in self.periods:
            cin = 1
            for i, ch in enumerate(self.mpd_channels):
                shapes[f"mpd.{p}.convs.{i}.weight"] = (ch, cin, self.mpd_kernel, 1)
                shapes[f"mpd.{p}.convs.{i}.bias"] = (ch,)
                cin = ch
            shapes[f"mpd.{p}.post.weight"] = (1, cin, self.post_kernel, 1)
            shapes[f"mpd.{p}.post.bias"] = (1,)
        return shapes

    def msd_shapes(self):
        shapes = {}
        for s in self.scales:
            cin = 1
            for i, (ch, k, _, g) in enumerate(self.msd_layers):
                if cin % g or ch % g:
                    raise ConfigError(f"msd layer {i}: groups {g} must divide {cin} and {ch}")
                shapes[f"msd.{s}.convs.{i}.weight"] = (ch, cin // g, k)
                shapes[f"msd.{s}.convs.{i}.bias"] = (ch,)
                cin = ch
            shapes[f"msd.{s}.post.weight"] = (1, cin, self.post_kernel)
            shapes[f"msd.{s}.post.bias"] = (1,)
        return shapes

    def shapes(self):
        return {**self.mpd_shapes(), **self.msd_shapes()}


def pad_to_period(x, period):
    """Zero-pad ``x`` at the end to the least multiple of ``period`` and fold to ``[T/p, p]``."""
    x = np.asarray(x, dtype=np.float64)
    total = -(-len(x) // period) * period
    return np.pad(x, (0, total - len(x))).reshape(-1, period)


def pool_scales(x, scales=(1, 2, 4)):
    """Signals average-pooled by each factor in ``scales`` (non-overlapping windows)."""
    x = np.asarray(x, dtype=np.float64)
    out = []
    for s in scales:
        n = len(x) // s
        out.append(x[: n * s].reshape(n, s).mean(axis=1))
    return out


class Discriminators:
    """Multi-period and multi-scale discriminators with fixed weights."""

    def __init__(self, config: DiscriminatorConfig, weights: dict):
        self.config = config
        self.weights = _check_tensors(weights, config.shapes(), "discriminators")

    @classmethod
    def random(cls, config: DiscriminatorConfig = DiscriminatorConfig(), seed: int = 0):
        return cls(config, _random_tensors(config.shapes(), seed, 1.0))

    @classmethod
    def zeros(cls, config: DiscriminatorConfig = DiscriminatorConfig()):
        return cls(config, {n: np.zeros(s) for n, s in config.shapes().items()})

    def period_stack(self, x, p) -> ActivationStack:
        cfg = self.config
        w = self.weights
        # [T/p, p] -> batch of p columns, each a 1-channel time series
        h = pad_to_period(x, p).T[:, None, :]
        layers = []
        pad = ((cfg.mpd_kernel - 1) // 2, (cfg.mpd_kernel - 1) // 2)
        n = len(cfg.mpd_channels)
        for i in range(n):
            stride = cfg.mpd_stride if i < n - 1 else 1
            h = conv1d(h, w[f"mpd.{p}.convs.{i}.weight"][..., 0], w[f"mpd.{p}.convs.{i}.bias"],
                       stride=stride, padding=pad)
            h = leaky_relu(h, cfg.leaky_slope)
            layers.append(h.transpose(1, 2, 0))
        h = conv1d(h, w[f"mpd.{p}.post.weight"][..., 0], w[f"mpd.{p}.post.bias"],
                   padding=_same(cfg.post_kernel))
        layers.append(h.transpose(1, 2, 0))
        return ActivationStack(f"mpd{p}", layers)

    def scale_stack(self, x, s) -> ActivationStack:
        cfg = self.config
        w = self.weights
        h = np.asarray(x, dtype=np.float64)[None, None, :]
        layers = []
        for i, (_, k, stride, g) in enumerate(cfg.msd_layers):
            h = conv1d(h, w[f"msd.{s}.convs.{i}.weight"], w[f"msd.{s}.convs.{i}.bias"],
                       stride=stride, padding=_same(k), groups=g)
            h = leaky_relu(h, cfg.leaky_slope)
            layers.append(h[0])
        h = conv1d(h, w[f"msd.{s}.post.weight"], w[f"msd.{s}.post.bias"],
                   padding=_same(cfg.post_kernel))
        layers.append(h[0])
        return ActivationStack(f"msd{s}", layers)

    def mpd(self, x):
        x = _samples(x)
        if len(x) == 0:
            raise ValueError("empty signal")
        return [self.period_stack(x, p) for p in self.config.periods]

    def msd(self, x):
        x = _samples(x)
        if len(x) < max(self.config.scales):
            raise ValueError(f"signal of {len(x)} samples too short to pool x{max(self.config.scales)}")
        pooled = pool_scales(x, self.config.scales)
        return [self.scale_stack(xs, s) for xs, s in zip(pooled, self.config.scales)]

    def __call__(self, x):
        return self.mpd(x) + self.msd(x)


def _samples(x):
    return x.samples if isinstance(x, AudioClip) else np.asarray(x, dtype=np.float64)


def discriminate_mpd(clip, disc: Discriminators):
    return disc.mpd(clip)


def discriminate_msd(clip, disc: Discriminators):
    return disc.msd(clip)
