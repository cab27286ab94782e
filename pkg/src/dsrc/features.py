"""Content feature sequences: file interchange and a log-Mel baseline featurizer.

Externally computed frame features (e.g. exported from a self-supervised
speech model) enter the pipeline through the ``FTRS`` file format::

    magic "FTRS" | version u8 | dim u32 | count u32 | frame_rate f32 | f32[count, dim]

All integers and floats are little-endian; the payload is row-major.
"""

from dataclasses import dataclass
from pathlib import Path
import struct

import numpy as np

from .errors import FormatError
from .signal import AudioClip, MelConfig, mel_spectrogram

__all__ = ["FeatureSequence", "load_features", "store_features", "baseline_features"]

_MAGIC = b"FTRS"
_VERSION = 1
_HEAD = struct.Struct("<4sBIIf")


@dataclass(frozen=True)
class FeatureSequence:
    vectors: np.ndarray
    frame_rate: float
    source_tag: str = ""

    def __post_init__(self):
        vectors = np.asarray(self.vectors)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValueError(f"vectors must be a non-empty [frames, dim] grid, got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("feature values must be finite")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def store_features(path, seq: FeatureSequence) -> None:
    payload = np.ascontiguousarray(seq.vectors, dtype="<f4")
    head = _HEAD.pack(_MAGIC, _VERSION, seq.dim, len(seq), seq.frame_rate)
    Path(path).write_bytes(head + payload.tobytes())


def load_features(path) -> FeatureSequence:
    """Read an ``FTRS`` file. Vectors stay float32 so re-storing is byte-exact."""
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise FormatError(f"{path}: truncated feature header")
    magic, version, dim, count, rate = _HEAD.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported feature file version {version}")
    if dim == 0 or count == 0:
        raise FormatError(f"{path}: empty feature grid (dim={dim}, count={count})")
    body = data[_HEAD.size:]
    if len(body) != 4 * dim * count:
        raise FormatError(
            f"{path}: payload has {len(body)} bytes, header declares {4 * dim * count}"
        )
    vectors = np.frombuffer(body, dtype="<f4").reshape(count, dim).copy()
    return FeatureSequence(vectors, float(rate), source_tag=Path(path).name)


def baseline_features(clip: AudioClip, hop: int = 320, mel: MelConfig | None = None) -> FeatureSequence:
    """Per-utterance standardized log-Mel frames at ``sample_rate / hop`` Hz.

    Dimensions that are constant over the utterance are set to zero rather
    than divided by a zero deviation.
    """
    base = mel or MelConfig()
    window = max(base.window, hop)
    cfg = MelConfig(
        fft_size=max(base.fft_size, window),
        window=window,
        hop=hop,
        mel_bands=base.mel_bands,
        fmin=base.fmin,
        fmax=min(base.fmax, clip.sample_rate / 2),
        log_floor=base.log_floor,
    )
    logmel = mel_spectrogram(clip, cfg).frames
    mean = logmel.mean(axis=0)
    std = logmel.std(axis=0)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    normed = (logmel - mean) / np.where(flat, 1.0, std)
    normed[:, flat] = 0.0
    return FeatureSequence(normed, clip.sample_rate / hop, source_tag="logmel")
