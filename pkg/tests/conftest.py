import numpy as np
import pytest

from dsrc import _accel
from dsrc.signal import AudioClip

SR = 16000


@pytest.fixture(params=["numba", "numpy"])
def kernel_path(request, monkeypatch):
    """Run a test once per kernel implementation."""
    monkeypatch.setattr(_accel, "DISABLE_NUMBA", request.param == "numpy")
    return request.param


def tone(freq, seconds=1.0, amp=0.5, sr=SR, kind="sine"):
    t = np.arange(int(round(seconds * sr))) / sr
    if kind == "sine":
        x = np.sin(2 * np.pi * freq * t)
    elif kind == "saw":
        x = 2.0 * ((freq * t) % 1.0) - 1.0
    else:
        raise ValueError(kind)
    return AudioClip(amp * x, sr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def speechlike(seconds=3.0, sr=SR, seed=0):
    """Gliding sawtooth syllables separated by short pauses, plus faint noise."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sr))
    t = np.arange(n) / sr
    f0 = 140.0 + 40.0 * np.sin(2 * np.pi * 0.7 * t) + 15.0 * np.sin(2 * np.pi * 3.1 * t)
    phase = np.cumsum(f0) / sr
    x = 2.0 * (phase % 1.0) - 1.0
    envelope = np.clip(2.0 * np.sin(2 * np.pi * 2.0 * t) + 0.6, 0.0, 1.0)
    x = 0.4 * x * envelope + 0.002 * rng.standard_normal(n)
    return AudioClip(np.clip(x, -1, 1), sr)
