import numpy as np
import pytest

from dsrc.errors import FormatError
from dsrc.metrics import ffe, vde
from dsrc.pitch import (
    F0Track, PitchConfig, extract_f0, flatten_f0, read_f0track, speaker_mean_f0, write_f0track,
)
from dsrc.signal import AudioClip, frame_count

from conftest import SR, tone


def test_sine_220(kernel_path):
    tr = extract_f0(tone(220.0, 2.0))
    assert tr.frame_rate == 200.0
    assert len(tr) == frame_count(2 * SR, 320, 80)
    assert tr.voiced.mean() >= 0.9
    assert abs(np.median(tr.f0[tr.voiced]) - 220.0) <= 0.05 * 220.0


def test_silence_unvoiced():
    tr = extract_f0(AudioClip(np.zeros(SR), SR))
    assert not tr.voiced.any()
    assert np.all(tr.f0 == 0)


def test_ramp_to_zero_lowers_voicing():
    clip = tone(220.0, 2.0)
    n = len(clip)
    env = np.ones(n)
    env[n // 2:] = np.linspace(1.0, 0.0, n - n // 2)
    tr = extract_f0(AudioClip(clip.samples * env, SR))
    half = len(tr) // 2
    assert tr.voiced[:half].mean() > tr.voiced[half:].mean()


def test_noise_mostly_unvoiced(rng):
    tr = extract_f0(AudioClip(rng.uniform(-0.5, 0.5, SR), SR))
    assert tr.voiced.mean() < 0.2


def test_gross_error_rate_on_sweep_of_pitches():
    for f in (80.0, 150.0, 260.0, 390.0):
        tr = extract_f0(tone(f, 1.0, kind="saw"))
        v = tr.f0[tr.voiced]
        assert np.mean(np.abs(v - f) / f > 0.2) < 0.05


def test_voiced_f0_within_search_range():
    cfg = PitchConfig()
    tr = extract_f0(tone(150.0, 1.0), cfg)
    assert np.all((tr.f0[tr.voiced] >= cfg.fmin) & (tr.f0[tr.voiced] <= cfg.fmax))


def test_deterministic(kernel_path, rng):
    clip = AudioClip(0.3 * np.sin(np.cumsum(rng.uniform(0.05, 0.1, SR))), SR)
    a, b = extract_f0(clip), extract_f0(clip)
    assert a.f0.tobytes() == b.f0.tobytes()
    assert np.array_equal(a.voiced, b.voiced)


def test_paths_agree_on_voicing():
    from dsrc import _accel
    clip = tone(180.0, 1.0, kind="saw")
    old = _accel.DISABLE_NUMBA
    try:
        _accel.DISABLE_NUMBA = False
        a = extract_f0(clip)
        _accel.DISABLE_NUMBA = True
        b = extract_f0(clip)
    finally:
        _accel.DISABLE_NUMBA = old
    assert np.array_equal(a.voiced, b.voiced)
    np.testing.assert_allclose(a.f0, b.f0, rtol=1e-9)


def test_input_errors():
    with pytest.raises(ValueError, match="shorter"):
        extract_f0(AudioClip(np.zeros(100), SR))
    with pytest.raises(ValueError, match="cannot resolve"):
        extract_f0(AudioClip(np.zeros(1000), 500))
    with pytest.raises(ValueError):
        PitchConfig(fmin=400, fmax=60)
    with pytest.raises(ValueError):
        PitchConfig(hop_ms=30, window_ms=20)


def _track(f0, voiced):
    return F0Track(np.asarray(f0, float), np.asarray(voiced, bool))


def test_speaker_mean():
    assert speaker_mean_f0([_track([100, 110, 90, 0], [1, 1, 1, 0])]) == 100.0
    assert speaker_mean_f0([_track([100], [1]), _track([200], [1])]) == 150.0
    with pytest.raises(ValueError, match="no voiced"):
        speaker_mean_f0([_track([0, 0], [0, 0])])


def test_flatten():
    tr = _track([100, 110, 90, 0], [1, 1, 1, 0])
    flat = flatten_f0(tr, 100.0)
    assert flat.f0.tolist() == [100, 100, 100, 0]
    assert np.array_equal(flat.voiced, tr.voiced)
    np.testing.assert_array_equal(flatten_f0(flat, 100.0).f0, flat.f0)
    with pytest.raises(ValueError):
        flatten_f0(tr, 0.0)


def test_flatten_ffe_example():
    tr = _track([100, 130], [1, 1])
    flat = flatten_f0(tr, 115.0)
    # brute force: per frame, voicing differs or relative error above 20%
    want = np.mean([abs(115 - f) / f > 0.2 for f in (100, 130)])
    assert want == 0.0
    assert ffe(tr, flat) == want


def test_flatten_never_changes_voicing(rng):
    for _ in range(50):
        v = rng.random(40) < 0.6
        tr = _track(np.where(v, rng.uniform(60, 400, 40), 0), v)
        m = rng.uniform(50, 500)
        flat = flatten_f0(tr, m)
        assert vde(tr, flat) == 0.0
        np.testing.assert_array_equal(flatten_f0(flat, m).f0, flat.f0)


def test_track_invariants():
    with pytest.raises(ValueError):
        _track([100, 5], [1, 0])
    with pytest.raises(ValueError):
        _track([0], [1])


def test_f0track_file_round_trip(tmp_path, rng):
    v = rng.random(50) < 0.5
    tr = _track(np.where(v, rng.uniform(60, 400, 50), 0).astype(np.float32), v)
    write_f0track(tmp_path / "t.f0tk", tr)
    back = read_f0track(tmp_path / "t.f0tk")
    np.testing.assert_array_equal(back.f0, tr.f0)
    np.testing.assert_array_equal(back.voiced, tr.voiced)
    assert back.frame_rate == 200.0
    raw = (tmp_path / "t.f0tk").read_bytes()
    assert raw[:4] == b"F0TK" and len(raw) == 4 + 1 + 4 + 4 + 5 * 50
    (tmp_path / "bad.f0tk").write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        read_f0track(tmp_path / "bad.f0tk")
