"""Objective evaluation: VDE, FFE, EER and token error rate (WER/PER)."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .pitch import F0Track

__all__ = [
    "ScoredTrial",
    "vde",
    "ffe",
    "eer",
    "error_rate",
    "read_trials",
    "read_tokens",
]


@dataclass(frozen=True)
class ScoredTrial:
    score: float
    is_target: bool

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("trial score must be finite")


def _pair(ref: F0Track, hyp: F0Track):
    if len(ref) != len(hyp):
        raise ValueError(f"frame count mismatch: {len(ref)} vs {len(hyp)}")
    if len(ref) == 0:
        raise ValueError("empty tracks")
    return ref, hyp


def vde(ref: F0Track, hyp: F0Track) -> float:
    """Fraction of frames whose voicing decisions differ."""
    ref, hyp = _pair(ref, hyp)
    return float(np.mean(ref.voiced != hyp.voiced))


def ffe(ref: F0Track, hyp: F0Track) -> float:
    """Fraction of frames with a voicing error or a pitch error above 20% of the reference.

    Pitch is compared only where both tracks are voiced; a frame counts once.
    """
    ref, hyp = _pair(ref, hyp)
    both = ref.voiced & hyp.voiced
    if np.any(ref.f0[both] <= 0):
        raise ValueError("reference voiced frame with non-positive f0")
    dev = np.zeros(len(ref))
    dev[both] = np.abs(hyp.f0[both] - ref.f0[both]) / ref.f0[both]
    errors = (ref.voiced != hyp.voiced) | (both & (dev > 0.2))
    return float(np.mean(errors))


def eer(trials) -> float:
    """Equal error rate by threshold sweep with linear interpolation at the crossing.

    ``FAR(t)`` is the share of non-targets scoring ``>= t``, ``FRR(t)`` the
    share of targets scoring ``< t``. Thresholds are every distinct score
    plus -inf and +inf.
    """
    scores = np.array([t.score for t in trials], dtype=np.float64)
    labels = np.array([t.is_target for t in trials], dtype=bool)
    tgt = np.sort(scores[labels])
    non = np.sort(scores[~labels])
    if tgt.size == 0 or non.size == 0:
        raise ValueError("EER needs at least one target and one non-target trial")
    thresholds = np.concatenate([[-np.inf], np.unique(scores), [np.inf]])
    far = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    frr = np.searchsorted(tgt, thresholds, side="left") / tgt.size
    diff = far - frr
    # diff falls from +1 at -inf to -1 at +inf
    i = int(np.argmax(diff <= 0))
    if diff[i] == 0:
        return float(far[i])
    alpha = diff[i - 1] / (diff[i - 1] - diff[i])
    return float(far[i - 1] + alpha * (far[i] - far[i - 1]))


def error_rate(ref_tokens, hyp_tokens) -> float:
    """Levenshtein distance over tokens divided by the reference length."""
    ref = list(ref_tokens)
    hyp = list(hyp_tokens)
    if not ref:
        raise ValueError("empty reference")
    vocab = {}
    a = np.array([vocab.setdefault(t, len(vocab)) for t in ref], dtype=np.int64)
    b = np.array([vocab.setdefault(t, len(vocab)) for t in hyp], dtype=np.int64)
    return kernels.levenshtein(a, b) / len(ref)


def read_trials(path) -> list:
    """Parse ``score<TAB>0|1`` lines."""
    trials = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1].strip() not in ("0", "1"):
            raise ValueError(f"{path}:{lineno}: expected 'score<TAB>0|1', got {line!r}")
        trials.append(ScoredTrial(float(parts[0]), parts[1].strip() == "1"))
    return trials


def read_tokens(path) -> list:
    """One whitespace-tokenized list per line."""
    return [line.split() for line in Path(path).read_text().splitlines()]
