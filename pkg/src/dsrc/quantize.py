"""Discretization: k-means content units and an EMA-trained F0 codebook.

The F0 encoder is gradient-free. A track is cut into non-overlapping
16-frame windows, each window becomes a 32-dim vector of interleaved
``(log f0, voicing flag)`` pairs, and the vector is snapped to the nearest
entry of a codebook trained with exponential-moving-average updates and
random restarts of under-used entries.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
import struct

import numpy as np

from . import kernels
from .errors import ConfigError, FormatError
from .features import FeatureSequence
from .pitch import F0Track

__all__ = [
    "Codebook",
    "UnitSequence",
    "F0CodeSequence",
    "VQReport",
    "EPS",
    "kmeans_fit",
    "quantize",
    "vq_ema_update",
    "train_vq",
    "f0_windows",
    "f0_unwindow",
    "f0_encode",
    "f0_decode",
    "train_f0_codebook",
    "save_codebook",
    "load_codebook",
]

EPS = 1e-8
F0_DOWNSAMPLE = 16


@dataclass(frozen=True)
class Codebook:
    """K vectors plus the EMA statistics that produced them."""

    vectors: np.ndarray
    usage_ema: np.ndarray
    sum_ema: np.ndarray
    decay: float = 0.99
    restart_threshold: float = 1.0
    seed: int = 0
    step: int = 0

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        usage = np.asarray(self.usage_ema, dtype=np.float64)
        sums = np.asarray(self.sum_ema, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValueError(f"codebook vectors must be [K>=1, dim>=1], got {vectors.shape}")
        if usage.shape != (vectors.shape[0],) or sums.shape != vectors.shape:
            raise ValueError("usage_ema / sum_ema shapes do not match the vectors")
        if not (np.all(np.isfinite(vectors)) and np.all(np.isfinite(sums))):
            raise ValueError("codebook values must be finite")
        if np.any(usage < 0):
            raise ValueError("usage_ema must be non-negative")
        if not 0 <= self.decay < 1:
            raise ValueError(f"decay must lie in [0, 1), got {self.decay}")
        if self.restart_threshold < 0:
            raise ValueError("restart_threshold must be non-negative")
        for arr in (vectors, usage, sums):
            arr.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "usage_ema", usage)
        object.__setattr__(self, "sum_ema", sums)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_vectors(cls, vectors, usage=1.0, **kwargs):
        vectors = np.array(vectors, dtype=np.float64)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        usage = np.broadcast_to(np.asarray(usage, dtype=np.float64), (vectors.shape[0],)).copy()
        return cls(vectors, usage, vectors * usage[:, None], **kwargs)


@dataclass(frozen=True)
class UnitSequence:
    codes: np.ndarray
    vocab: int
    frame_rate: float

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 1:
            raise ValueError("codes must be 1-D")
        if self.vocab < 1:
            raise ValueError("vocab must be at least 1")
        if codes.size and (codes.min() < 0 or codes.max() >= self.vocab):
            raise ValueError(f"codes must lie in [0, {self.vocab})")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def __len__(self):
        return len(self.codes)


@dataclass(frozen=True)
class F0CodeSequence:
    codes: np.ndarray
    vocab: int
    frame_rate: float
    downsample: int = F0_DOWNSAMPLE
    # original F0 frame count; decode truncates the zero-padded tail to it
    num_frames: int | None = None

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 1:
            raise ValueError("codes must be 1-D")
        if self.vocab < 1:
            raise ValueError("vocab must be at least 1")
        if codes.size and (codes.min() < 0 or codes.max() >= self.vocab):
            raise ValueError(f"codes must lie in [0, {self.vocab})")
        if self.num_frames is not None and not (
            (len(codes) - 1) * self.downsample < self.num_frames <= len(codes) * self.downsample
        ):
            raise ValueError(f"num_frames {self.num_frames} inconsistent with {len(codes)} codes")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def __len__(self):
        return len(self.codes)


@dataclass(frozen=True)
class VQReport:
    """What one EMA update did: per-vector assignments, per-code counts, restarts."""

    codes: np.ndarray
    counts: np.ndarray
    restarted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, FeatureSequence):
        x = features.vectors
    elif isinstance(features, np.ndarray):
        x = features
    else:
        parts = [f.vectors if isinstance(f, FeatureSequence) else np.asarray(f) for f in features]
        x = np.concatenate(parts, axis=0) if parts else np.zeros((0, 1))
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise ValueError("input vectors must be finite")
    return x


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    _, d2 = kernels.nearest_codes(x, centers[:1])
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[i] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _cluster_sums(x, codes, k):
    counts = np.bincount(codes, minlength=k).astype(np.float64)
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, codes, x)
    return counts, sums


def kmeans_fit(features, k: int, max_iters: int = 100, tol: float = 1e-6, seed: int = 0,
               trace: list | None = None) -> Codebook:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops after ``max_iters`` assignment passes or once the relative inertia
    improvement drops below ``tol``. A cluster left empty takes the point
    farthest from its current centroid. If ``trace`` is a list, the inertia
    of every assignment pass is appended to it.
    """
    x = _as_matrix(features)
    if k < 1:
        raise ValueError("k must be at least 1")
    if x.shape[0] < k:
        raise ValueError(f"need at least {k} vectors for k={k}, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    prev = None
    for _ in range(max_iters):
        codes, d2 = kernels.nearest_codes(x, centers)
        inertia = float(d2.sum())
        if trace is not None:
            trace.append(inertia)
        if prev is not None and prev - inertia <= tol * prev:
            break
        prev = inertia
        counts, sums = _cluster_sums(x, codes, k)
        empty = np.flatnonzero(counts == 0)
        centers = sums / np.maximum(counts, 1.0)[:, None]
        if empty.size:
            far = np.argsort(-d2, kind="stable")[: empty.size]
            centers[empty] = x[far]
    counts, _ = _cluster_sums(x, codes, k)
    return Codebook(centers, counts, centers * counts[:, None], seed=seed)


def quantize(features, codebook: Codebook, frame_rate: float | None = None) -> UnitSequence:
    """Nearest-codebook index per frame (squared Euclidean, ties to the lowest index)."""
    x = _as_matrix(features)
    if x.shape[1] != codebook.dim:
        raise ConfigError(f"feature dim {x.shape[1]} != codebook dim {codebook.dim}")
    if frame_rate is None:
        frame_rate = features.frame_rate if isinstance(features, FeatureSequence) else 1.0
    codes, _ = kernels.nearest_codes(x, codebook.vectors)
    return UnitSequence(codes, codebook.size, frame_rate)


def vq_ema_update(codebook: Codebook, batch) -> tuple[Codebook, VQReport]:
    """One EMA step of the codebook on ``batch``; returns the new codebook and a report.

    Codes whose usage falls below ``restart_threshold`` are moved onto a
    random batch vector (seeded by ``(seed, step)``) with usage 1.
    """
    x = _as_matrix(batch)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[1] != codebook.dim:
        raise ConfigError(f"batch dim {x.shape[1]} != codebook dim {codebook.dim}")
    k = codebook.size
    gamma = codebook.decay
    codes, _ = kernels.nearest_codes(x, codebook.vectors)
    counts, sums = _cluster_sums(x, codes, k)
    usage = gamma * codebook.usage_ema + (1.0 - gamma) * counts
    sum_ema = gamma * codebook.sum_ema + (1.0 - gamma) * sums
    restarted = np.flatnonzero(usage < codebook.restart_threshold)
    if restarted.size:
        rng = np.random.default_rng([codebook.seed, codebook.step])
        picks = x[rng.integers(x.shape[0], size=restarted.size)]
        usage[restarted] = 1.0
        sum_ema[restarted] = picks
    vectors = sum_ema / np.maximum(usage, EPS)[:, None]
    new = replace(codebook, vectors=vectors, usage_ema=usage, sum_ema=sum_ema, step=codebook.step + 1)
    return new, VQReport(codes, counts.astype(np.int64), restarted)


def train_vq(vectors, k: int, epochs: int = 20, batch_size: int = 256, decay: float = 0.99,
             restart_threshold: float = 1.0, seed: int = 0) -> Codebook:
    """Train a codebook from scratch with repeated :func:`vq_ema_update` passes."""
    x = _as_matrix(vectors)
    if x.shape[0] < k:
        raise ValueError(f"need at least {k} vectors for k={k}, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    init = x[rng.choice(x.shape[0], size=k, replace=False)]
    cb = Codebook.from_vectors(init, 1.0, decay=decay, restart_threshold=restart_threshold, seed=seed)
    for _ in range(epochs):
        order = rng.permutation(x.shape[0])
        for lo in range(0, len(order), batch_size):
            cb, _ = vq_ema_update(cb, x[order[lo:lo + batch_size]])
    return cb


def f0_windows(track: F0Track, downsample: int = F0_DOWNSAMPLE) -> np.ndarray:
    """``[ceil(T/downsample), 2*downsample]`` grid of interleaved (log f0, flag) pairs.

    The last window is padded with unvoiced frames, i.e. ``(0, 0)`` pairs.
    """
    n = len(track)
    if n == 0:
        raise ValueError("empty F0 track")
    nwin = -(-n // downsample)
    logf = np.zeros(nwin * downsample)
    flag = np.zeros(nwin * downsample)
    logf[:n] = np.where(track.voiced, np.log(np.where(track.voiced, track.f0, 1.0)), 0.0)
    flag[:n] = track.voiced
    return np.stack([logf, flag], axis=1).reshape(nwin, 2 * downsample)


def f0_unwindow(vectors, frame_rate: float, num_frames: int | None = None) -> F0Track:
    """Invert :func:`f0_windows`: voiced where the flag exceeds 0.5, f0 = exp(log f0)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    pairs = vectors.reshape(-1, 2)
    voiced = pairs[:, 1] > 0.5
    f0 = np.where(voiced, np.exp(np.where(voiced, pairs[:, 0], 0.0)), 0.0)
    if num_frames is not None:
        f0, voiced = f0[:num_frames], voiced[:num_frames]
    return F0Track(f0, voiced, frame_rate)


def f0_encode(track: F0Track, codebook: Codebook, downsample: int = F0_DOWNSAMPLE) -> F0CodeSequence:
    windows = f0_windows(track, downsample)
    if codebook.dim != windows.shape[1]:
        raise ConfigError(
            f"F0 codebook dim {codebook.dim} != window dim {windows.shape[1]} (2 x {downsample})"
        )
    codes, _ = kernels.nearest_codes(windows, codebook.vectors)
    return F0CodeSequence(codes, codebook.size, track.frame_rate / downsample, downsample, len(track))


def f0_decode(seq: F0CodeSequence, codebook: Codebook) -> F0Track:
    if len(seq) and seq.codes.max() >= codebook.size:
        raise ConfigError(f"code {seq.codes.max()} out of range for a {codebook.size}-entry codebook")
    if codebook.dim != 2 * seq.downsample:
        raise ConfigError(f"F0 codebook dim {codebook.dim} != 2 x {seq.downsample}")
    return f0_unwindow(codebook.vectors[seq.codes], seq.frame_rate * seq.downsample, seq.num_frames)


def train_f0_codebook(tracks, k: int = 20, downsample: int = F0_DOWNSAMPLE, **kwargs) -> Codebook:
    if isinstance(tracks, F0Track):
        tracks = [tracks]
    windows = np.concatenate([f0_windows(t, downsample) for t in tracks], axis=0)
    return train_vq(windows, k, **kwargs)


# CDBK: magic, version u8, K u32, dim u32, decay f32, restart_threshold f32,
# vectors f32[K, dim], usage_ema f32[K]
_MAGIC = b"CDBK"
_VERSION = 1
_HEAD = struct.Struct("<4sBIIff")


def save_codebook(path, codebook: Codebook) -> None:
    head = _HEAD.pack(_MAGIC, _VERSION, codebook.size, codebook.dim,
                      codebook.decay, codebook.restart_threshold)
    body = codebook.vectors.astype("<f4").tobytes() + codebook.usage_ema.astype("<f4").tobytes()
    Path(path).write_bytes(head + body)


def load_codebook(path) -> Codebook:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise FormatError(f"{path}: truncated codebook header")
    magic, version, k, dim, decay, threshold = _HEAD.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported codebook version {version}")
    if k == 0 or dim == 0:
        raise FormatError(f"{path}: empty codebook (K={k}, dim={dim})")
    expected = 4 * (k * dim + k)
    body = data[_HEAD.size:]
    if len(body) != expected:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    vectors = np.frombuffer(body[: 4 * k * dim], dtype="<f4").reshape(k, dim).astype(np.float64)
    usage = np.frombuffer(body[4 * k * dim:], dtype="<f4").astype(np.float64)
    return Codebook(vectors, usage, vectors * usage[:, None], decay=float(decay),
                    restart_threshold=float(threshold))
