"""Time each numeric kernel on its numba and pure-numpy paths.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--seconds 3]

Each row reports the best-of-``repeat`` wall time per call for both paths
(after one warm-up call, so JIT compilation is excluded) and the speedup of
numba over numpy. Both paths are checked to agree before timing.
"""

import argparse
import timeit

import numpy as np

from dsrc import _accel, kernels
from dsrc.pitch import PitchConfig, extract_f0
from dsrc.quantize import F0CodeSequence, UnitSequence
from dsrc.signal import AudioClip
from dsrc.vocoder import Generator, GeneratorConfig, generate, init_generator_weights


def cases(seconds: float, rng):
    sr = 16000
    n = int(seconds * sr)
    x = np.concatenate([rng.standard_normal(n), np.zeros(300)])
    starts = np.arange(0, n - 320, 80)
    codes = rng.integers(0, 100, int(seconds * 50))
    packed = kernels.pack_codes(codes, 7)
    feats = rng.standard_normal((int(seconds * 50), 80))
    book = rng.standard_normal((100, 80))
    ntrans = int(seconds * 200)
    cost = rng.random((ntrans, 5))
    log2f = np.sort(rng.uniform(6, 8.6, (ntrans, 5)), axis=1)
    valid = np.ones((ntrans, 5), dtype=bool)
    words_a = rng.integers(0, 30, 400)
    words_b = rng.integers(0, 30, 420)
    conv_x = rng.standard_normal((1, 64, int(seconds * 1000)))
    conv_w = rng.standard_normal((64, 64, 7))
    conv_b = rng.standard_normal(64)

    clip = AudioClip(0.5 * np.sin(2 * np.pi * 180 * np.arange(n) / sr), sr)
    gcfg = GeneratorConfig.for_hop(320, 50, 20)
    gen = Generator(gcfg, init_generator_weights(gcfg, 0))
    frames = int(seconds * 50)
    units = UnitSequence(rng.integers(0, 50, frames), 50, 50.0)
    f0 = F0CodeSequence(rng.integers(0, 20, -(-frames // 4)), 20, 12.5)
    spk = rng.standard_normal(256)

    return [
        ("nccf", lambda: kernels.nccf(x, starts, 320, 39, 268)),
        ("viterbi", lambda: kernels.viterbi(cost, log2f, valid, 0.35)),
        ("nearest_codes", lambda: kernels.nearest_codes(feats, book)),
        ("pack_codes", lambda: kernels.pack_codes(codes, 7)),
        ("unpack_codes", lambda: kernels.unpack_codes(packed, 7, len(codes))),
        ("levenshtein", lambda: kernels.levenshtein(words_a, words_b)),
        ("conv1d", lambda: kernels.conv1d(conv_x, conv_w, conv_b, dilation=3, padding=(9, 9))),
        ("extract_f0", lambda: extract_f0(clip, PitchConfig())),
        ("generate", lambda: generate(gen, units, f0, spk)),
    ]


def _as_array(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(o, dtype=np.float64)) for o in out])
    if isinstance(out, bytes):
        return np.frombuffer(out, dtype=np.uint8).astype(np.float64)
    if hasattr(out, "samples"):
        return out.samples
    if hasattr(out, "f0"):
        return out.f0
    return np.ravel(np.asarray(out, dtype=np.float64))


def run_path(fn, disable: bool, repeat: int):
    _accel.DISABLE_NUMBA = disable
    out = fn()  # warm-up (and JIT compile on the numba path)
    best = min(timeit.repeat(fn, number=1, repeat=repeat))
    return best, _as_array(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seconds", type=float, default=3.0, help="audio length the inputs are sized for")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    saved = _accel.DISABLE_NUMBA
    print(f"{'kernel':<14}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}  agree")
    try:
        for name, fn in cases(args.seconds, np.random.default_rng(args.seed)):
            t_nb, out_nb = run_path(fn, False, args.repeat)
            t_np, out_np = run_path(fn, True, args.repeat)
            agree = out_nb.shape == out_np.shape and np.allclose(out_nb, out_np, rtol=1e-9, atol=1e-9)
            print(f"{name:<14}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>9.2f}x  {agree}")
    finally:
        _accel.DISABLE_NUMBA = saved


if __name__ == "__main__":
    main()
