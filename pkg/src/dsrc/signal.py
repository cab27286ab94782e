"""Audio clips, WAV I/O, framing and the log-Mel spectrogram."""

from dataclasses import dataclass, field
import wave

import numpy as np

from .errors import FormatError

__all__ = [
    "AudioClip",
    "MelConfig",
    "MelSpectrogram",
    "load_audio",
    "write_audio",
    "frame_count",
    "frame_signal",
    "hann_window",
    "mel_filterbank",
    "mel_band_centers",
    "mel_spectrogram",
    "hz_to_mel",
    "mel_to_hz",
]


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


_PCM_SCALE = {1: 128.0, 2: 32768.0, 3: 8388608.0, 4: 2147483648.0}


def load_audio(path) -> AudioClip:
    """Read a PCM WAV file, keeping the first channel.

    Integer samples are divided by the magnitude of the type's most negative
    value, so -32768 maps to exactly -1.0 for 16-bit data.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            nchan = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise FormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    except EOFError as exc:
        raise FormatError(f"{path}: truncated WAV header") from exc
    if width not in _PCM_SCALE:
        raise FormatError(f"{path}: unsupported sample width {width} bytes")
    nframes = len(raw) // (width * nchan)
    if nframes == 0:
        raise FormatError(f"{path}: zero-length audio")
    raw = raw[: nframes * width * nchan]
    if width == 1:
        data = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        data = (b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)).astype(np.int64)
        data = np.where(data >= 1 << 23, data - (1 << 24), data).astype(np.float64)
    else:
        data = np.frombuffer(raw, dtype=f"<i{width}").astype(np.float64)
    data = data.reshape(nframes, nchan)[:, 0] / _PCM_SCALE[width]
    return AudioClip(data, rate)


def write_audio(path, clip: AudioClip) -> None:
    """Write ``clip`` as mono 16-bit little-endian PCM."""
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def frame_count(length: int, window: int, hop: int) -> int:
    """Number of full windows: ``floor((length - window) / hop) + 1``, 0 if too short."""
    if length < window:
        return 0
    return (length - window) // hop + 1


def frame_signal(x, window: int, hop: int) -> np.ndarray:
    """View ``x`` as ``[frames, window]`` without padding."""
    x = np.asarray(x, dtype=np.float64)
    n = frame_count(len(x), window, hop)
    if n == 0:
        raise ValueError(f"signal of {len(x)} samples is shorter than one window ({window})")
    return np.lib.stride_tricks.sliding_window_view(x, window)[::hop][:n]


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelConfig:
    fft_size: int = 1024
    window: int = 1024
    hop: int = 256
    mel_bands: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.fft_size < 1 or self.window < 1 or self.hop < 1 or self.mel_bands < 1:
            raise ValueError("fft_size, window, hop and mel_bands must be positive")
        if self.window > self.fft_size:
            raise ValueError(f"window {self.window} exceeds fft_size {self.fft_size}")
        if self.hop > self.window:
            raise ValueError(f"hop {self.hop} exceeds window {self.window}")
        if not 0 <= self.fmin < self.fmax:
            raise ValueError(f"need 0 <= fmin < fmax, got {self.fmin}, {self.fmax}")
        if not self.log_floor > 0:
            raise ValueError("log_floor must be positive")

    def check_rate(self, sample_rate: int) -> None:
        if self.fmax > sample_rate / 2:
            raise ValueError(f"fmax {self.fmax} Hz above Nyquist for {sample_rate} Hz audio")


def mel_band_centers(cfg: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of every triangular band."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bands + 2))
    return edges[1:-1]


def mel_filterbank(cfg: MelConfig, sample_rate: int) -> np.ndarray:
    """Triangular filters on the rfft bins, shape ``[mel_bands, fft_size // 2 + 1]``.

    Peaks are 1 at each band center; no area normalization.
    """
    cfg.check_rate(sample_rate)
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bands + 2))
    freqs = np.arange(cfg.fft_size // 2 + 1) * sample_rate / cfg.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray
    config: MelConfig = field(default_factory=MelConfig)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def mel_spectrogram(clip: AudioClip, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    """Natural-log Mel energies of Hann-windowed frames, floored at ``cfg.log_floor``."""
    cfg.check_rate(clip.sample_rate)
    if len(clip) < cfg.window:
        raise ValueError(f"clip of {len(clip)} samples is shorter than one window ({cfg.window})")
    frames = frame_signal(clip.samples, cfg.window, cfg.hop) * hann_window(cfg.window)
    power = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=-1)) ** 2
    energy = power @ mel_filterbank(cfg, clip.sample_rate).T
    return MelSpectrogram(np.log(np.maximum(energy, cfg.log_floor)), cfg)
