"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``nccf``, ``viterbi``, ``nearest_codes``, ``pack_codes``,
``unpack_codes``, ``levenshtein``, ``conv1d``) dispatch on
:func:`dsrc._accel.use_numba` at call time. The ``_nb``/``_np`` variants are
exported for tests and benchmarks that compare the two.

Integer kernels (bit packing, edit distance, Viterbi back-pointers) return
identical results on both paths. Floating-point kernels agree to rounding
error only; each path on its own is bitwise deterministic.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _accel
from ._accel import njit

__all__ = [
    "nccf",
    "viterbi",
    "nearest_codes",
    "pack_codes",
    "unpack_codes",
    "levenshtein",
    "conv1d",
]


# --------------------------------------------------------------------------
# normalized cross-correlation over a lag range
# --------------------------------------------------------------------------

@njit
def _nccf_nb(x, starts, n, lag_min, lag_max):
    nframes = starts.shape[0]
    nlags = lag_max - lag_min + 1
    out = np.zeros((nframes, nlags))
    for f in range(nframes):
        s = starts[f]
        e0 = 0.0
        for i in range(n):
            e0 += x[s + i] * x[s + i]
        if e0 <= 0.0:
            continue
        # running energy of the lagged segment
        el = 0.0
        for i in range(n):
            el += x[s + lag_min + i] * x[s + lag_min + i]
        for k in range(nlags):
            lag = lag_min + k
            if k > 0:
                old = x[s + lag - 1]
                new = x[s + lag + n - 1]
                el += new * new - old * old
            acc = 0.0
            for i in range(n):
                acc += x[s + i] * x[s + lag + i]
            denom = e0 * el
            if denom > 0.0:
                out[f, k] = acc / np.sqrt(denom)
    return out


def _nccf_np(x, starts, n, lag_min, lag_max):
    nlags = lag_max - lag_min + 1
    span = n + lag_max
    frames = sliding_window_view(x, span)[starts]
    head = frames[:, :n]
    e0 = np.einsum("ij,ij->i", head, head)
    out = np.zeros((len(starts), nlags))
    for k in range(nlags):
        lag = lag_min + k
        seg = frames[:, lag:lag + n]
        el = np.einsum("ij,ij->i", seg, seg)
        acc = np.einsum("ij,ij->i", head, seg)
        denom = e0 * el
        ok = denom > 0.0
        out[ok, k] = acc[ok] / np.sqrt(denom[ok])
    return out


def nccf(x, starts, n, lag_min, lag_max):
    """Normalized cross-correlation of ``x[s:s+n]`` with ``x[s+lag:s+lag+n]``.

    ``x`` must already be padded so that ``starts.max() + n + lag_max``
    fits. Frames with zero energy yield an all-zero row.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if _accel.use_numba():
        return _nccf_nb(x, starts, int(n), int(lag_min), int(lag_max))
    return _nccf_np(x, starts, int(n), int(lag_min), int(lag_max))


# --------------------------------------------------------------------------
# Viterbi over per-frame pitch candidates
# --------------------------------------------------------------------------

@njit
def _viterbi_nb(local_cost, log2f, valid, penalty):
    nframes, ncand = local_cost.shape
    acc = np.full((nframes, ncand), np.inf)
    back = np.zeros((nframes, ncand), dtype=np.int64)
    for j in range(ncand):
        if valid[0, j]:
            acc[0, j] = local_cost[0, j]
    for t in range(1, nframes):
        for j in range(ncand):
            if not valid[t, j]:
                continue
            best = np.inf
            arg = 0
            for i in range(ncand):
                if not valid[t - 1, i]:
                    continue
                c = acc[t - 1, i] + penalty * abs(log2f[t, j] - log2f[t - 1, i])
                if c < best:
                    best = c
                    arg = i
            acc[t, j] = best + local_cost[t, j]
            back[t, j] = arg
    path = np.zeros(nframes, dtype=np.int64)
    best = np.inf
    for j in range(ncand):
        if acc[nframes - 1, j] < best:
            best = acc[nframes - 1, j]
            path[nframes - 1] = j
    for t in range(nframes - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _viterbi_np(local_cost, log2f, valid, penalty):
    nframes, ncand = local_cost.shape
    acc = np.where(valid[0], local_cost[0], np.inf)
    back = np.zeros((nframes, ncand), dtype=np.int64)
    for t in range(1, nframes):
        prev = np.where(valid[t - 1], acc, np.inf)
        trans = prev[None, :] + penalty * np.abs(log2f[t][:, None] - log2f[t - 1][None, :])
        arg = np.argmin(trans, axis=1)
        best = trans[np.arange(ncand), arg]
        acc = np.where(valid[t], best + local_cost[t], np.inf)
        back[t] = np.where(valid[t], arg, 0)
    path = np.zeros(nframes, dtype=np.int64)
    path[-1] = int(np.argmin(acc))
    for t in range(nframes - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def viterbi(local_cost, log2f, valid, penalty):
    """Minimum-cost candidate path with cost ``penalty * |log2 f_t - log2 f_{t-1}|``.

    Candidates must be sorted by ascending frequency within each frame:
    ties resolve to the lowest index, i.e. the lowest frequency. Every frame
    needs at least one valid candidate.
    """
    local_cost = np.ascontiguousarray(local_cost, dtype=np.float64)
    log2f = np.ascontiguousarray(log2f, dtype=np.float64)
    valid = np.ascontiguousarray(valid, dtype=np.bool_)
    if local_cost.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if _accel.use_numba():
        return _viterbi_nb(local_cost, log2f, valid, float(penalty))
    return _viterbi_np(local_cost, log2f, valid, float(penalty))


# --------------------------------------------------------------------------
# nearest codebook entry
# --------------------------------------------------------------------------

@njit
def _nearest_nb(x, codebook):
    n, d = x.shape
    k = codebook.shape[0]
    codes = np.zeros(n, dtype=np.int64)
    dists = np.zeros(n)
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(k):
            acc = 0.0
            for m in range(d):
                diff = x[i, m] - codebook[j, m]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = j
        codes[i] = arg
        dists[i] = best
    return codes, dists


def _nearest_np(x, codebook, chunk=4096):
    n = x.shape[0]
    codes = np.zeros(n, dtype=np.int64)
    dists = np.zeros(n)
    for lo in range(0, n, chunk):
        diff = x[lo:lo + chunk, None, :] - codebook[None, :, :]
        d2 = np.einsum("nkd,nkd->nk", diff, diff)
        arg = np.argmin(d2, axis=1)
        codes[lo:lo + chunk] = arg
        dists[lo:lo + chunk] = d2[np.arange(len(arg)), arg]
    return codes, dists


def nearest_codes(x, codebook):
    """Index of the nearest row of ``codebook`` for every row of ``x``.

    Squared Euclidean distance, ties to the lowest index. Returns
    ``(codes, squared_distances)``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    codebook = np.ascontiguousarray(codebook, dtype=np.float64)
    if _accel.use_numba():
        return _nearest_nb(x, codebook)
    return _nearest_np(x, codebook)


# --------------------------------------------------------------------------
# fixed-width MSB-first bit packing
# --------------------------------------------------------------------------

@njit
def _pack_nb(codes, nbits):
    total = codes.shape[0] * nbits
    out = np.zeros((total + 7) // 8, dtype=np.uint8)
    pos = 0
    for i in range(codes.shape[0]):
        v = codes[i]
        for b in range(nbits - 1, -1, -1):
            if (v >> b) & 1:
                out[pos >> 3] |= np.uint8(0x80 >> (pos & 7))
            pos += 1
    return out


def _pack_np(codes, nbits):
    if nbits == 0 or codes.size == 0:
        return np.zeros(0, dtype=np.uint8)
    shifts = np.arange(nbits - 1, -1, -1, dtype=np.int64)
    bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return np.packbits(bits.ravel())


@njit
def _unpack_nb(buf, nbits, count):
    out = np.zeros(count, dtype=np.int64)
    pos = 0
    for i in range(count):
        v = 0
        for _ in range(nbits):
            bit = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
            v = (v << 1) | bit
            pos += 1
        out[i] = v
    return out


def _unpack_np(buf, nbits, count):
    if nbits == 0 or count == 0:
        return np.zeros(count, dtype=np.int64)
    bits = np.unpackbits(buf)[: count * nbits].reshape(count, nbits).astype(np.int64)
    weights = np.int64(1) << np.arange(nbits - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def pack_codes(codes, nbits):
    """Pack non-negative integers at ``nbits`` each, MSB first, zero-padded to a byte."""
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    if _accel.use_numba():
        return _pack_nb(codes, int(nbits)).tobytes()
    return _pack_np(codes, int(nbits)).tobytes()


def unpack_codes(buf, nbits, count):
    """Inverse of :func:`pack_codes`; ``buf`` must hold at least ``count*nbits`` bits."""
    arr = np.frombuffer(bytes(buf), dtype=np.uint8)
    if len(arr) * 8 < count * nbits:
        raise ValueError(f"need {count * nbits} bits, buffer has {len(arr) * 8}")
    if _accel.use_numba():
        return _unpack_nb(arr, int(nbits), int(count))
    return _unpack_np(arr, int(nbits), int(count))


# --------------------------------------------------------------------------
# Levenshtein distance with unit costs
# --------------------------------------------------------------------------

@njit
def _lev_nb(a, b):
    m = b.shape[0]
    prev = np.arange(m + 1)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, a.shape[0] + 1):
        cur[0] = i
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def _lev_np(a, b):
    m = b.shape[0]
    idx = np.arange(m + 1)
    prev = idx.copy()
    for i in range(1, a.shape[0] + 1):
        cand = np.empty(m + 1, dtype=np.int64)
        cand[0] = i
        cand[1:] = np.minimum(prev[:-1] + (a[i - 1] != b), prev[1:] + 1)
        # insertions chain left to right: cur[j] = min_k<=j cand[k] + (j - k)
        prev = np.minimum.accumulate(cand - idx) + idx
    return int(prev[m])


def levenshtein(a, b):
    """Edit distance between two integer sequences."""
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    if _accel.use_numba():
        return int(_lev_nb(a, b))
    return _lev_np(a, b)


# --------------------------------------------------------------------------
# grouped, dilated, strided 1-D convolution (cross-correlation, torch layout)
# --------------------------------------------------------------------------

@njit
def _conv1d_nb(xp, w, bias, stride, dilation, groups, tout):
    batch, cin, _ = xp.shape
    cout, cin_g, ksize = w.shape
    cout_g = cout // groups
    out = np.empty((batch, cout, tout))
    for b in range(batch):
        for o in range(cout):
            g = o // cout_g
            acc = np.full(tout, bias[o])
            for c in range(cin_g):
                ci = g * cin_g + c
                for k in range(ksize):
                    wk = w[o, c, k]
                    if wk == 0.0:
                        continue
                    off = k * dilation
                    for t in range(tout):
                        acc[t] += wk * xp[b, ci, off + t * stride]
            out[b, o, :] = acc
    return out


def _conv1d_np(xp, w, bias, stride, dilation, groups, tout):
    batch, cin, _ = xp.shape
    cout, cin_g, ksize = w.shape
    cout_g = cout // groups
    span = (ksize - 1) * dilation + 1
    win = sliding_window_view(xp, span, axis=-1)[:, :, : (tout - 1) * stride + 1 : stride, ::dilation]
    out = np.empty((batch, cout, tout))
    for g in range(groups):
        xs = win[:, g * cin_g:(g + 1) * cin_g]
        ws = w[g * cout_g:(g + 1) * cout_g]
        # [B, T, Cout_g]
        y = np.tensordot(xs, ws, axes=([1, 3], [1, 2]))
        out[:, g * cout_g:(g + 1) * cout_g] = y.transpose(0, 2, 1)
    out += bias[None, :, None]
    return out


def conv1d(x, weight, bias=None, stride=1, dilation=1, padding=(0, 0), groups=1):
    """1-D cross-correlation over ``x`` of shape ``[batch, channels, time]``.

    ``weight`` is ``[out_channels, in_channels // groups, kernel]``;
    ``padding`` is a ``(left, right)`` pair of zero-pad lengths.
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    cout, cin_g, ksize = weight.shape
    if x.ndim != 3:
        raise ValueError(f"expected [batch, channels, time], got shape {x.shape}")
    if x.shape[1] != cin_g * groups or cout % groups:
        raise ValueError(
            f"channel mismatch: input {x.shape[1]}, weight {weight.shape}, groups {groups}"
        )
    bias = np.zeros(cout) if bias is None else np.ascontiguousarray(bias, dtype=np.float64)
    left, right = padding
    xp = np.ascontiguousarray(np.pad(x, ((0, 0), (0, 0), (left, right))))
    span = (ksize - 1) * dilation + 1
    tout = (xp.shape[-1] - span) // stride + 1
    if tout < 1:
        raise ValueError(f"input of length {x.shape[-1]} too short for kernel span {span}")
    if _accel.use_numba():
        return _conv1d_nb(xp, weight, bias, int(stride), int(dilation), int(groups), tout)
    return _conv1d_np(xp, weight, bias, int(stride), int(dilation), int(groups), tout)
