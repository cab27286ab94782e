"""F0 tracking, speaker pitch statistics and F0 flattening.

The tracker computes a normalized cross-correlation (NCCF) per frame over
the lag range ``[sr/fmax, sr/fmin]``, keeps the strongest local peaks as
pitch candidates and links them with a Viterbi pass that penalizes octave
jumps. Voicing is decided per frame from the correlation peak and an
energy gate relative to the loudest frame.
"""

from dataclasses import dataclass
from pathlib import Path
import struct

import numpy as np

from . import kernels
from .errors import FormatError
from .signal import AudioClip, frame_count

__all__ = [
    "PitchConfig",
    "F0Track",
    "extract_f0",
    "speaker_mean_f0",
    "flatten_f0",
    "read_f0track",
    "write_f0track",
]


@dataclass(frozen=True)
class PitchConfig:
    window_ms: float = 20.0
    hop_ms: float = 5.0
    fmin: float = 60.0
    fmax: float = 400.0
    voicing_threshold: float = 0.45
    energy_gate_db: float = 30.0
    octave_penalty: float = 0.35
    # short-lag preference in the local cost; keeps subharmonics from winning
    lag_weight: float = 0.3
    max_candidates: int = 5

    def __post_init__(self):
        if not 0 < self.fmin < self.fmax:
            raise ValueError(f"need 0 < fmin < fmax, got {self.fmin}, {self.fmax}")
        if not 0 < self.hop_ms <= self.window_ms:
            raise ValueError(f"need 0 < hop <= window, got {self.hop_ms}, {self.window_ms}")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be at least 1")

    @property
    def frame_rate(self) -> float:
        return 1000.0 / self.hop_ms

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))


@dataclass(frozen=True)
class F0Track:
    """Per-frame pitch in Hz; unvoiced frames carry 0."""

    f0: np.ndarray
    voiced: np.ndarray
    frame_rate: float = 200.0

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if f0.ndim != 1 or f0.shape != voiced.shape:
            raise ValueError(f"f0 {f0.shape} and voiced {voiced.shape} must be equal-length 1-D")
        if not np.all(np.isfinite(f0)):
            raise ValueError("f0 must be finite")
        if np.any(f0[~voiced] != 0):
            raise ValueError("unvoiced frames must carry f0 = 0")
        if np.any(f0[voiced] <= 0):
            raise ValueError("voiced frames must carry positive f0")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")
        f0.setflags(write=False)
        voiced.setflags(write=False)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "voiced", voiced)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    def __len__(self):
        return len(self.f0)


def _peak_candidates(corr, lag_min, max_candidates, lag_weight=0.0, lag_max=1):
    """Local maxima of one NCCF row as (fractional lag, peak value).

    Peaks are ranked by the lag-weighted correlation, so near-equal
    subharmonic peaks cannot crowd the fundamental out of the shortlist.
    """
    interior = (corr[1:-1] > corr[:-2]) & (corr[1:-1] >= corr[2:]) & (corr[1:-1] > 0)
    idx = np.flatnonzero(interior) + 1
    if idx.size == 0:
        return []
    score = corr[idx] * (1.0 - lag_weight * (lag_min + idx) / lag_max)
    idx = idx[np.argsort(-score, kind="stable")][:max_candidates]
    out = []
    for k in idx:
        a, b, c = corr[k - 1], corr[k], corr[k + 1]
        denom = a - 2.0 * b + c
        shift = 0.5 * (a - c) / denom if denom < 0 else 0.0
        out.append((lag_min + k + shift, b))
    return out


def extract_f0(clip: AudioClip, cfg: PitchConfig = PitchConfig()) -> F0Track:
    """Track F0 with one (f0, voiced) pair per hop over full windows only."""
    sr = clip.sample_rate
    if sr < 2 * cfg.fmax:
        raise ValueError(f"sample rate {sr} Hz cannot resolve fmax {cfg.fmax} Hz")
    n = cfg.window_samples(sr)
    hop = cfg.hop_samples(sr)
    nframes = frame_count(len(clip), n, hop)
    if nframes == 0:
        raise ValueError(f"clip of {len(clip)} samples is shorter than one {n}-sample window")

    lag_min = max(1, int(np.floor(sr / cfg.fmax)))
    lag_max = int(np.ceil(sr / cfg.fmin))
    x = clip.samples - clip.samples.mean()
    starts = np.arange(nframes) * hop
    # one extra sample so every lag in [lag_min - 1, lag_max + 1] is computable
    xpad = np.concatenate([x, np.zeros(lag_max + 2)])
    corr = kernels.nccf(xpad, starts, n, lag_min - 1, lag_max + 1)

    frames = np.lib.stride_tricks.sliding_window_view(x, n)[starts]
    power = np.mean(frames * frames, axis=1)
    peak = power.max()
    if peak <= 0:
        return F0Track(np.zeros(nframes), np.zeros(nframes, dtype=bool), cfg.frame_rate)
    with np.errstate(divide="ignore"):
        level_db = 10.0 * np.log10(power / peak)
    gate = (power > 0) & (level_db >= -cfg.energy_gate_db)

    ncand = cfg.max_candidates
    cand_f = np.zeros((nframes, ncand))
    cand_cost = np.full((nframes, ncand), np.inf)
    cand_ok = np.zeros((nframes, ncand), dtype=bool)
    voiced = np.zeros(nframes, dtype=bool)
    for t in range(nframes):
        # corr row covers lags lag_min-1 .. lag_max+1; peaks only inside the range
        peaks = [
            (lag, val)
            for lag, val in _peak_candidates(corr[t], lag_min - 1, ncand, cfg.lag_weight, lag_max)
            if lag_min <= round(lag) <= lag_max
        ]
        if not peaks or not gate[t]:
            continue
        if max(v for _, v in peaks) <= cfg.voicing_threshold:
            continue
        voiced[t] = True
        freqs = np.clip([sr / lag for lag, _ in peaks], cfg.fmin, cfg.fmax)
        costs = [1.0 - v * (1.0 - cfg.lag_weight * lag / lag_max) for lag, v in peaks]
        order = np.argsort(freqs, kind="stable")
        m = len(order)
        cand_f[t, :m] = freqs[order]
        cand_cost[t, :m] = np.asarray(costs)[order]
        cand_ok[t, :m] = True

    f0 = np.zeros(nframes)
    log2f = np.log2(np.where(cand_ok, cand_f, 1.0))
    t = 0
    while t < nframes:
        if not voiced[t]:
            t += 1
            continue
        end = t
        while end < nframes and voiced[end]:
            end += 1
        path = kernels.viterbi(cand_cost[t:end], log2f[t:end], cand_ok[t:end], cfg.octave_penalty)
        f0[t:end] = cand_f[np.arange(t, end), path]
        t = end
    return F0Track(f0, voiced, cfg.frame_rate)


def speaker_mean_f0(tracks) -> float:
    """Mean F0 over the voiced frames of all ``tracks``."""
    if isinstance(tracks, F0Track):
        tracks = [tracks]
    voiced = [tr.f0[tr.voiced] for tr in tracks]
    values = np.concatenate(voiced) if voiced else np.zeros(0)
    if values.size == 0:
        raise ValueError("no voiced frames to average")
    return float(values.mean())


def flatten_f0(track: F0Track, mean: float) -> F0Track:
    """Set every voiced frame to ``mean``; voicing decisions are untouched."""
    if not mean > 0:
        raise ValueError(f"mean F0 must be positive, got {mean}")
    return F0Track(np.where(track.voiced, float(mean), 0.0), track.voiced, track.frame_rate)


# F0TK: magic, version u8, frame_rate f32, count u32, then (f32 f0, u8 voiced) per frame
_F0_MAGIC = b"F0TK"
_F0_VERSION = 1
_F0_HEAD = struct.Struct("<4sBfI")
_F0_FRAME = np.dtype([("f0", "<f4"), ("voiced", "u1")])


def write_f0track(path, track: F0Track) -> None:
    rec = np.empty(len(track), dtype=_F0_FRAME)
    rec["f0"] = track.f0
    rec["voiced"] = track.voiced
    head = _F0_HEAD.pack(_F0_MAGIC, _F0_VERSION, track.frame_rate, len(track))
    Path(path).write_bytes(head + rec.tobytes())


def read_f0track(path) -> F0Track:
    data = Path(path).read_bytes()
    if len(data) < _F0_HEAD.size:
        raise FormatError(f"{path}: truncated F0 track header")
    magic, version, rate, count = _F0_HEAD.unpack_from(data)
    if magic != _F0_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _F0_VERSION:
        raise FormatError(f"{path}: unsupported F0 track version {version}")
    body = data[_F0_HEAD.size:]
    if len(body) != count * _F0_FRAME.itemsize:
        raise FormatError(f"{path}: expected {count} frames, payload has {len(body)} bytes")
    rec = np.frombuffer(body, dtype=_F0_FRAME)
    voiced = rec["voiced"] != 0
    return F0Track(np.where(voiced, rec["f0"].astype(np.float64), 0.0), voiced, float(rate))
