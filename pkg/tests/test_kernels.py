"""The numba and numpy kernel paths against each other and against naive oracles."""

import numpy as np
import pytest

from dsrc import _accel, kernels


def _both(fn, *args):
    old = _accel.DISABLE_NUMBA
    try:
        _accel.DISABLE_NUMBA = False
        a = fn(*args)
        _accel.DISABLE_NUMBA = True
        b = fn(*args)
    finally:
        _accel.DISABLE_NUMBA = old
    return a, b


def naive_conv1d(x, w, b, stride, dilation, pad, groups):
    batch, cin, _ = x.shape
    cout, cin_g, k = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), pad))
    span = (k - 1) * dilation + 1
    tout = (xp.shape[-1] - span) // stride + 1
    out = np.zeros((batch, cout, tout))
    for bi in range(batch):
        for o in range(cout):
            g = o // (cout // groups)
            for t in range(tout):
                acc = b[o]
                for c in range(cin_g):
                    for kk in range(k):
                        acc += w[o, c, kk] * xp[bi, g * cin_g + c, t * stride + kk * dilation]
                out[bi, o, t] = acc
    return out


@pytest.mark.parametrize("stride,dilation,groups,pad", [
    (1, 1, 1, (0, 0)), (2, 1, 1, (3, 3)), (1, 3, 1, (3, 3)), (4, 1, 2, (5, 4)), (1, 1, 4, (2, 2)),
])
def test_conv1d_matches_naive(kernel_path, rng, stride, dilation, groups, pad):
    x = rng.standard_normal((2, 4, 23))
    w = rng.standard_normal((8, 4 // groups, 3))
    b = rng.standard_normal(8)
    got = kernels.conv1d(x, w, b, stride=stride, dilation=dilation, padding=pad, groups=groups)
    want = naive_conv1d(x, w, b, stride, dilation, pad, groups)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_conv1d_rejects_channel_mismatch():
    with pytest.raises(ValueError, match="channel mismatch"):
        kernels.conv1d(np.zeros((1, 3, 10)), np.zeros((2, 2, 3)))


def naive_nccf(x, start, n, lag):
    a = x[start:start + n]
    b = x[start + lag:start + lag + n]
    d = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return np.dot(a, b) / d if d > 0 else 0.0


def test_nccf_paths_agree_with_oracle(rng):
    x = rng.standard_normal(600)
    starts = np.array([0, 37, 100, 250])
    a, b = _both(kernels.nccf, x, starts, 64, 10, 80)
    want = np.array([[naive_nccf(x, s, 64, lag) for lag in range(10, 81)] for s in starts])
    np.testing.assert_allclose(a, want, atol=1e-10)
    np.testing.assert_allclose(b, want, atol=1e-12)


def test_nccf_zero_frame_is_zero(kernel_path):
    x = np.zeros(300)
    out = kernels.nccf(x, np.array([0, 50]), 64, 10, 40)
    assert np.all(out == 0)


def brute_viterbi(cost, log2f, valid, penalty):
    import itertools
    nframes, ncand = cost.shape
    best, arg = np.inf, None
    for path in itertools.product(range(ncand), repeat=nframes):
        if not all(valid[t, j] for t, j in enumerate(path)):
            continue
        c = sum(cost[t, j] for t, j in enumerate(path))
        c += sum(penalty * abs(log2f[t, path[t]] - log2f[t - 1, path[t - 1]]) for t in range(1, nframes))
        if c < best - 1e-12:
            best, arg = c, path
    return np.array(arg)


def test_viterbi_matches_brute_force(rng):
    for _ in range(30):
        nframes, ncand = rng.integers(1, 6), rng.integers(1, 4)
        cost = rng.random((nframes, ncand))
        f = np.sort(rng.uniform(60, 400, (nframes, ncand)), axis=1)
        valid = rng.random((nframes, ncand)) < 0.8
        valid[:, 0] = True
        want = brute_viterbi(cost, np.log2(f), valid, 0.35)
        a, b = _both(kernels.viterbi, cost, np.log2(f), valid, 0.35)
        np.testing.assert_array_equal(a, want)
        np.testing.assert_array_equal(b, want)


def test_viterbi_tie_goes_to_lowest_frequency(kernel_path):
    cost = np.array([[0.5, 0.5]])
    path = kernels.viterbi(cost, np.log2([[100.0, 200.0]]), np.ones((1, 2), bool), 0.35)
    assert path.tolist() == [0]


def test_nearest_codes_paths_agree(rng):
    x = rng.standard_normal((500, 7))
    cb = rng.standard_normal((13, 7))
    (ca, da), (cb_, db) = _both(kernels.nearest_codes, x, cb)
    want = np.argmin(((x[:, None] - cb[None]) ** 2).sum(-1), axis=1)
    np.testing.assert_array_equal(ca, want)
    np.testing.assert_array_equal(cb_, want)
    np.testing.assert_allclose(da, db, rtol=1e-12)


def test_nearest_codes_tie_to_lowest_index(kernel_path):
    codes, _ = kernels.nearest_codes(np.array([[5.0]]), np.array([[0.0], [10.0]]))
    assert codes.tolist() == [0]


@pytest.mark.parametrize("nbits", [0, 1, 2, 5, 7, 8, 11, 16])
def test_pack_unpack_round_trip(kernel_path, rng, nbits):
    codes = rng.integers(0, 1 << nbits, size=37) if nbits else np.zeros(37, dtype=int)
    buf = kernels.pack_codes(codes, nbits)
    assert len(buf) == (37 * nbits + 7) // 8
    np.testing.assert_array_equal(kernels.unpack_codes(buf, nbits, 37), codes)


def test_pack_paths_identical(rng):
    codes = rng.integers(0, 100, size=101)
    a, b = _both(kernels.pack_codes, codes, 7)
    assert a == b


def test_pack_msb_first(kernel_path):
    assert kernels.pack_codes([3, 0, 2, 1], 2) == bytes([0xC9])
    assert kernels.pack_codes([1], 3) == bytes([0b00100000])


def dp_edit_distance(a, b):
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[-1][-1]


def test_levenshtein_paths_match_dp(rng):
    for _ in range(100):
        a = rng.integers(0, 4, size=rng.integers(0, 9))
        b = rng.integers(0, 4, size=rng.integers(0, 9))
        want = dp_edit_distance(a.tolist(), b.tolist())
        assert _both(kernels.levenshtein, a, b) == (want, want)
