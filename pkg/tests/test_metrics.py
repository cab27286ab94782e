import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsrc.metrics import ScoredTrial, eer, error_rate, ffe, read_tokens, read_trials, vde
from dsrc.pitch import F0Track

from oracles import edit_ref, eer_ref, ffe_ref, vde_ref


def track(f0):
    f0 = np.asarray(f0, dtype=float)
    return F0Track(f0, f0 > 0)


def trials(targets, nontargets):
    return [ScoredTrial(s, True) for s in targets] + [ScoredTrial(s, False) for s in nontargets]


def random_track(rng, n):
    voiced = rng.random(n) < 0.6
    f0 = np.where(voiced, rng.choice([80.0, 100.0, 119.0, 120.0, 121.0, 150.0, 200.0], n), 0.0)
    return F0Track(f0, voiced)


# ---- examples ------------------------------------------------------------

def test_vde_examples():
    r = F0Track([100, 100, 0, 0], [True, True, False, False])
    h = F0Track([100, 0, 0, 90], [True, False, False, True])
    assert vde(r, r) == 0.0
    assert vde(r, h) == 0.5
    inv = F0Track([0, 0, 100, 100], [False, False, True, True])
    assert vde(r, inv) == 1.0
    with pytest.raises(ValueError):
        vde(r, track([100]))


def test_ffe_examples():
    r = track([100, 100])
    assert ffe(r, r) == 0.0
    assert ffe(r, track([119, 121])) == 0.5
    assert ffe(r, track([120, 120])) == 0.0
    assert ffe(r, track([80, 80])) == 0.0
    with pytest.raises(ValueError):
        ffe(r, track([100]))


def test_eer_examples():
    assert eer(trials([0.9, 0.8], [0.1, 0.2])) == 0.0
    assert eer(trials([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])) == 0.5
    assert eer(trials([0.6, 0.4], [0.5, 0.3])) == 0.5
    with pytest.raises(ValueError):
        eer(trials([0.3], []))
    with pytest.raises(ValueError):
        ScoredTrial(float("nan"), True)


def test_error_rate_examples():
    assert error_rate("abc", "abc") == 0.0
    assert error_rate(["a", "b", "c"], ["a", "x", "c"]) == pytest.approx(1 / 3)
    assert error_rate(["a", "b"], ["a", "b", "c"]) == 0.5
    assert error_rate(["a"], ["x", "y", "z"]) == 3.0
    with pytest.raises(ValueError):
        error_rate([], ["a"])


# ---- brute-force agreement -----------------------------------------------

def test_vde_ffe_match_brute_force():
    rng = np.random.default_rng(21)
    for _ in range(100):
        n = int(rng.integers(1, 30))
        r, h = random_track(rng, n), random_track(rng, n)
        assert vde(r, h) == vde_ref(r, h)
        assert ffe(r, h) == ffe_ref(r, h)
        assert ffe(r, h) >= vde(r, h)


def test_eer_matches_brute_force():
    rng = np.random.default_rng(22)
    for _ in range(100):
        nt, nn = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        # coarse grid forces ties between and within classes
        ts = trials(rng.integers(0, 8, nt) / 4.0 + 0.5, rng.integers(0, 8, nn) / 4.0)
        assert eer(ts) == eer_ref(ts)
        assert 0.0 <= eer(ts) <= 1.0


def test_error_rate_matches_brute_force():
    rng = np.random.default_rng(23)
    for _ in range(100):
        a = tuple(rng.integers(0, 4, int(rng.integers(1, 9))))
        b = tuple(rng.integers(0, 4, int(rng.integers(0, 9))))
        assert error_rate(a, b) == edit_ref(a, b)


# ---- properties ----------------------------------------------------------

voicing = st.lists(st.tuples(st.booleans(), st.floats(50, 500)), min_size=1, max_size=40)


@settings(max_examples=100, deadline=None)
@given(voicing, st.data())
def test_bounds_symmetry_and_ffe_dominates(frames, data):
    other = data.draw(st.lists(st.tuples(st.booleans(), st.floats(50, 500)),
                               min_size=len(frames), max_size=len(frames)))
    r = F0Track([f if v else 0.0 for v, f in frames], [v for v, _ in frames])
    h = F0Track([f if v else 0.0 for v, f in other], [v for v, _ in other])
    assert 0 <= vde(r, h) <= ffe(r, h) <= 1
    assert vde(r, h) == vde(h, r)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-40, 40), min_size=1, max_size=10),
       st.lists(st.integers(-40, 40), min_size=1, max_size=10))
def test_eer_invariant_under_monotone_map(tgt, non):
    # grid scores keep both maps strictly monotone in floating point
    tgt = [s / 8 for s in tgt]
    non = [s / 8 for s in non]
    base = eer(trials(tgt, non))
    assert 0 <= base <= 1
    assert eer(trials([math.exp(s) for s in tgt], [math.exp(s) for s in non])) == base
    assert eer(trials([3 * s - 1 for s in tgt], [3 * s - 1 for s in non])) == base


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=10),
       st.lists(st.integers(0, 3), min_size=1, max_size=10))
def test_error_rate_symmetric_for_equal_lengths(a, b):
    b = (b * len(a))[:len(a)]
    assert error_rate(a, b) == error_rate(b, a)


def test_file_readers(tmp_path):
    p = tmp_path / "trials.txt"
    p.write_text("0.9\t1\n0.1\t0\n\n0.5\t1\n")
    ts = read_trials(p)
    assert [(t.score, t.is_target) for t in ts] == [(0.9, True), (0.1, False), (0.5, True)]
    p.write_text("0.9 1\n")
    with pytest.raises(ValueError, match=":1:"):
        read_trials(p)
    q = tmp_path / "tok.txt"
    q.write_text("a b  c\nd\n")
    assert read_tokens(q) == [["a", "b", "c"], ["d"]]
