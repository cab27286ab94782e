"""Ultra-low-bitrate discrete speech codec.

Content units (k-means over frame features), F0 codes (EMA-trained VQ over
pitch windows) and a speaker id are packed into a fixed-width bitstream and
resynthesized by a unit-conditioned HiFi-GAN generator.
"""

__version__ = "0.1.0"

from .codec import CodecConfig, bitrate, decode_stream, encode_stream, depacketize, packetize
from .features import FeatureSequence, baseline_features, load_features, store_features
from .losses import LossWeights, total_losses
from .metrics import eer, error_rate, ffe, vde
from .pitch import F0Track, PitchConfig, extract_f0, flatten_f0, speaker_mean_f0
from .quantize import (
    Codebook,
    F0CodeSequence,
    UnitSequence,
    f0_decode,
    f0_encode,
    kmeans_fit,
    quantize,
    vq_ema_update,
)
from .signal import AudioClip, MelConfig, load_audio, mel_spectrogram, write_audio
from .vocoder import Discriminators, Generator, GeneratorConfig, generate
