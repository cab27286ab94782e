"""Forward-only GAN objective: least-squares adversarial terms, Mel L1, feature matching.

Reduction convention: every term is a mean over its elements, and terms
are summed (not averaged) over sub-discriminators. The generator total is

    sum_j adv_j + lambda_fm * sum_j fm_j + lambda_r * recon

and the discriminator total is ``sum_j d_j``.
"""

from dataclasses import dataclass, field
from math import fsum

import numpy as np

from .signal import AudioClip, MelConfig, mel_spectrogram
from .vocoder import ActivationStack

__all__ = [
    "LossWeights",
    "LossReport",
    "adv_loss_g",
    "d_loss",
    "recon_loss",
    "fm_loss",
    "total_losses",
]


@dataclass(frozen=True)
class LossWeights:
    lambda_fm: float = 2.0
    lambda_r: float = 45.0

    def __post_init__(self):
        if self.lambda_fm < 0 or self.lambda_r < 0:
            raise ValueError("loss weights must be non-negative")


def _scores(s):
    s = s.scores if isinstance(s, ActivationStack) else s
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty score map")
    return s


def adv_loss_g(scores_fake) -> float:
    """Mean of ``(1 - s)**2`` over the fake-audio score map."""
    s = _scores(scores_fake)
    return float(np.mean((1.0 - s) ** 2))


def d_loss(scores_real, scores_fake) -> float:
    real = _scores(scores_real)
    fake = _scores(scores_fake)
    return float(np.mean((1.0 - real) ** 2) + np.mean(fake ** 2))


def recon_loss(x: AudioClip, x_hat: AudioClip, mel_cfg: MelConfig = MelConfig()) -> float:
    """Mean absolute difference of the two log-Mel spectrograms."""
    if len(x) != len(x_hat):
        raise ValueError(f"length mismatch: {len(x)} vs {len(x_hat)}")
    if x.sample_rate != x_hat.sample_rate:
        raise ValueError(f"sample rate mismatch: {x.sample_rate} vs {x_hat.sample_rate}")
    a = mel_spectrogram(x, mel_cfg).frames
    b = mel_spectrogram(x_hat, mel_cfg).frames
    return float(np.mean(np.abs(a - b)))


def _layers(stack):
    return stack.layers if isinstance(stack, ActivationStack) else list(stack)


def fm_loss(real_acts, fake_acts) -> float:
    """Sum over layers of ``(1/M_i) * ||real_i - fake_i||_1``; the score layer counts."""
    real = _layers(real_acts)
    fake = _layers(fake_acts)
    if len(real) != len(fake):
        raise ValueError(f"stacks differ in depth: {len(real)} vs {len(fake)}")
    total = 0.0
    for i, (a, b) in enumerate(zip(real, fake)):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise ValueError(f"layer {i} shape mismatch: {a.shape} vs {b.shape}")
        total += np.sum(np.abs(a - b)) / a.size
    return float(total)


@dataclass
class LossReport:
    adv: list = field(default_factory=list)
    fm: list = field(default_factory=list)
    disc: list = field(default_factory=list)
    recon: float = 0.0
    weights: LossWeights = field(default_factory=LossWeights)
    names: list = field(default_factory=list)
    generator_total: float = 0.0
    discriminator_total: float = 0.0

    def to_text(self) -> str:
        """Flat ``key<TAB>value`` table, one line per entry."""
        rows = []
        for name, a, f, d in zip(self.names, self.adv, self.fm, self.disc):
            rows += [(f"adv.{name}", a), (f"fm.{name}", f), (f"disc.{name}", d)]
        rows += [
            ("recon", self.recon),
            ("lambda_fm", self.weights.lambda_fm),
            ("lambda_r", self.weights.lambda_r),
            ("generator_total", self.generator_total),
            ("discriminator_total", self.discriminator_total),
        ]
        return "\n".join(f"{k}\t{v:.9g}" for k, v in rows) + "\n"


def total_losses(x: AudioClip, x_hat: AudioClip, real_stacks, fake_stacks,
                 weights: LossWeights = LossWeights(), mel_cfg: MelConfig = MelConfig(),
                 recon: float | None = None) -> LossReport:
    """Combine per-sub-discriminator terms into generator and discriminator totals.

    ``recon`` may be passed in precomputed; otherwise it is evaluated from
    ``x`` and ``x_hat``.
    """
    real_stacks = list(real_stacks)
    fake_stacks = list(fake_stacks)
    if not real_stacks or len(real_stacks) != len(fake_stacks):
        raise ValueError(
            f"need matching non-empty stack lists, got {len(real_stacks)} real and {len(fake_stacks)} fake"
        )
    adv = [adv_loss_g(f) for f in fake_stacks]
    fm = [fm_loss(r, f) for r, f in zip(real_stacks, fake_stacks)]
    disc = [d_loss(r, f) for r, f in zip(real_stacks, fake_stacks)]
    rec = recon_loss(x, x_hat, mel_cfg) if recon is None else float(recon)
    names = [getattr(f, "name", str(j)) for j, f in enumerate(fake_stacks)]
    # fsum is exactly rounded, so totals do not depend on sub-discriminator order
    g_total = fsum(adv) + weights.lambda_fm * fsum(fm) + weights.lambda_r * rec
    return LossReport(adv, fm, disc, rec, weights, names, g_total, fsum(disc))
