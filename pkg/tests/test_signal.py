import wave

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsrc.errors import FormatError
from dsrc.signal import (
    AudioClip, MelConfig, frame_count, load_audio, mel_band_centers, mel_filterbank,
    mel_spectrogram, write_audio,
)

from conftest import SR, tone


def _write_pcm16(path, data, channels=1, sr=SR):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(sr)
        wf.writeframes(np.asarray(data, dtype="<i2").tobytes())


def test_load_silence(tmp_path):
    _write_pcm16(tmp_path / "s.wav", np.zeros(SR))
    clip = load_audio(tmp_path / "s.wav")
    assert clip.sample_rate == SR and len(clip) == SR
    assert np.all(clip.samples == 0)


def test_load_full_scale_negative_is_minus_one(tmp_path):
    _write_pcm16(tmp_path / "m.wav", [-32768, 0, 32767])
    clip = load_audio(tmp_path / "m.wav")
    assert clip.samples[0] == -1.0
    assert clip.samples[2] == 32767 / 32768


def test_load_stereo_takes_first_channel(tmp_path, rng):
    left = rng.integers(-32768, 32768, size=500)
    right = rng.integers(-32768, 32768, size=500)
    inter = np.stack([left, right], axis=1).ravel()
    _write_pcm16(tmp_path / "st.wav", inter, channels=2)
    clip = load_audio(tmp_path / "st.wav")
    # oracle: split the interleaved buffer by channel
    np.testing.assert_array_equal(clip.samples, inter[0::2] / 32768.0)
    assert len(clip) == 500


def test_load_errors(tmp_path):
    (tmp_path / "junk.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(FormatError):
        load_audio(tmp_path / "junk.wav")
    _write_pcm16(tmp_path / "empty.wav", [])
    with pytest.raises(FormatError, match="zero-length"):
        load_audio(tmp_path / "empty.wav")
    with pytest.raises(FileNotFoundError):
        load_audio(tmp_path / "missing.wav")


def test_write_read_round_trip(tmp_path, rng):
    x = rng.integers(-32767, 32768, size=1000) / 32767.0
    write_audio(tmp_path / "w.wav", AudioClip(x, SR))
    back = load_audio(tmp_path / "w.wav")
    np.testing.assert_allclose(back.samples, x * 32767 / 32768, atol=1e-12)


def test_clip_validation():
    with pytest.raises(ValueError):
        AudioClip([0.0, np.nan], SR)
    with pytest.raises(ValueError):
        AudioClip([0.0], 0)


def test_mel_config_validation():
    with pytest.raises(ValueError):
        MelConfig(fft_size=512, window=1024)
    with pytest.raises(ValueError):
        MelConfig(hop=2048)
    with pytest.raises(ValueError):
        MelConfig(fmin=9000, fmax=8000)
    with pytest.raises(ValueError):
        MelConfig(log_floor=0)
    with pytest.raises(ValueError, match="Nyquist"):
        mel_spectrogram(AudioClip(np.zeros(2048), 8000), MelConfig())


def test_zero_clip_is_floor():
    cfg = MelConfig()
    mel = mel_spectrogram(AudioClip(np.zeros(4000), SR), cfg)
    assert np.all(mel.frames == np.log(cfg.log_floor))


def test_frame_count_example():
    cfg = MelConfig()
    mel = mel_spectrogram(AudioClip(np.zeros(cfg.window + 3 * cfg.hop), SR), cfg)
    assert mel.num_frames == 4
    assert mel.frames.shape == (4, cfg.mel_bands)


def test_short_clip_rejected():
    with pytest.raises(ValueError, match="shorter than one window"):
        mel_spectrogram(AudioClip(np.zeros(100), SR))


@settings(max_examples=60, deadline=None)
@given(window=st.integers(16, 256), hop_frac=st.floats(0.05, 1.0), extra=st.integers(0, 2000))
def test_frame_count_property(window, hop_frac, extra):
    hop = max(1, int(window * hop_frac))
    length = window + extra
    cfg = MelConfig(fft_size=256, window=window, hop=hop, mel_bands=8)
    x = np.random.default_rng(extra).standard_normal(length) * 0.1
    mel = mel_spectrogram(AudioClip(x, SR), cfg)
    assert mel.num_frames == (length - window) // hop + 1 == frame_count(length, window, hop)


def test_tone_peaks_in_nearest_band():
    cfg = MelConfig()
    mel = mel_spectrogram(tone(1000.0, 0.5), cfg)
    # band centers straight from the HTK mel formula
    mels = np.linspace(0.0, 2595 * np.log10(1 + 8000 / 700), cfg.mel_bands + 2)[1:-1]
    centers = 700 * (10 ** (mels / 2595) - 1)
    np.testing.assert_allclose(mel_band_centers(cfg), centers)
    want = int(np.argmin(np.abs(centers - 1000.0)))
    assert np.all(np.argmax(mel.frames, axis=1) == want)


def test_filterbank_shape_and_peaks():
    cfg = MelConfig()
    fb = mel_filterbank(cfg, SR)
    assert fb.shape == (80, 513)
    assert np.all(fb >= 0) and np.all(fb.max(axis=1) <= 1.0)


def test_deterministic(rng):
    clip = AudioClip(rng.uniform(-1, 1, 5000), SR)
    a = mel_spectrogram(clip).frames
    b = mel_spectrogram(clip).frames
    assert a.tobytes() == b.tobytes()


def test_doubling_amplitude_adds_log4(rng):
    cfg = MelConfig()
    x = rng.uniform(-0.4, 0.4, 6000)
    a = mel_spectrogram(AudioClip(x, SR), cfg).frames
    b = mel_spectrogram(AudioClip(2 * x, SR), cfg).frames
    above = a > np.log(cfg.log_floor)
    assert above.any()
    np.testing.assert_allclose(b[above] - a[above], np.log(4.0), atol=1e-6)
