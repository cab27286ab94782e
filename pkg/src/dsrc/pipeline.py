"""End-to-end glue: run configuration, encode a clip, decode a stream to audio."""

from dataclasses import dataclass, field, fields, replace
import logging
from pathlib import Path
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .codec import Bitstream, CodecConfig, decode_stream, encode_stream
from .errors import ConfigError
from .features import baseline_features
from .pitch import F0Track, PitchConfig, extract_f0, flatten_f0
from .quantize import Codebook, F0CodeSequence, UnitSequence, f0_encode, quantize
from .signal import AudioClip, MelConfig
from .vocoder import Generator, GeneratorConfig, SpeakerTable, generate, init_generator_weights, load_generator

log = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "EncodeResult",
    "load_run_config",
    "decimate",
    "align_f0_codes",
    "encode_clip",
    "build_generator",
    "speaker_embedding",
    "decode_to_audio",
]

_PATH_KEYS = ("content_codebook", "f0_codebook", "generator", "speakers")


@dataclass(frozen=True)
class RunConfig:
    codec: CodecConfig = field(default_factory=CodecConfig)
    pitch: PitchConfig = field(default_factory=PitchConfig)
    mel: MelConfig = field(default_factory=MelConfig)
    content_codebook: Path | None = None
    f0_codebook: Path | None = None
    generator: Path | None = None
    speakers: Path | None = None
    hidden_channels: int = 128
    seed: int = 0

    def generator_config(self) -> GeneratorConfig:
        c = self.codec
        return GeneratorConfig.for_hop(c.content_hop, c.content_vocab, c.f0_vocab,
                                       hidden_channels=self.hidden_channels,
                                       sample_rate=c.sample_rate)

    def check_files(self):
        for key in _PATH_KEYS:
            p = getattr(self, key)
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{key} file not found: {p}")


def _section(cls, values, name):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"[{name}] unknown keys {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def load_run_config(path=None, **overrides) -> RunConfig:
    """Read a TOML run config; non-``None`` keyword overrides win.

    Sections ``[codec]``, ``[pitch]``, ``[mel]`` map onto their config
    classes; ``[paths]`` holds file locations relative to the config file;
    ``seed`` and ``hidden_channels`` sit at the top level.
    """
    raw = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        base = path.parent
    raw = dict(raw)
    codec_vals = dict(raw.pop("codec", {}))
    pitch_vals = dict(raw.pop("pitch", {}))
    mel_vals = dict(raw.pop("mel", {}))
    path_vals = dict(raw.pop("paths", {}))
    top = {k: raw.pop(k) for k in ("seed", "hidden_channels") if k in raw}
    if raw:
        raise ConfigError(f"unknown config entries {sorted(raw)}")
    bad = set(path_vals) - set(_PATH_KEYS)
    if bad:
        raise ConfigError(f"[paths] unknown keys {sorted(bad)}")

    codec_keys = {f.name for f in fields(CodecConfig)}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in codec_keys:
            codec_vals[key] = value
        elif key in _PATH_KEYS:
            path_vals[key] = str(Path(value).resolve())
        elif key in ("seed", "hidden_channels"):
            top[key] = value
        else:
            raise ConfigError(f"unknown override {key!r}")

    paths = {k: (base / v) for k, v in path_vals.items()}
    return RunConfig(
        codec=_section(CodecConfig, codec_vals, "codec"),
        pitch=_section(PitchConfig, pitch_vals, "pitch"),
        mel=_section(MelConfig, mel_vals, "mel"),
        seed=int(top.get("seed", 0)),
        hidden_channels=int(top.get("hidden_channels", 128)),
        **paths,
    )


def decimate(clip: AudioClip, factor: int, taps: int = 63) -> AudioClip:
    """Integer-factor downsampling behind a Hann-windowed sinc low-pass."""
    if factor == 1:
        return clip
    n = np.arange(taps) - (taps - 1) / 2
    h = np.sinc(n / factor) / factor * np.hanning(taps)
    h /= h.sum()
    y = np.convolve(clip.samples, h, mode="same")[::factor]
    return AudioClip(np.clip(y, -1.0, 1.0), clip.sample_rate // factor)


def conform_rate(clip: AudioClip, sample_rate: int) -> AudioClip:
    if clip.sample_rate == sample_rate:
        return clip
    if clip.sample_rate % sample_rate:
        raise ConfigError(
            f"audio at {clip.sample_rate} Hz is not an integer multiple of {sample_rate} Hz"
        )
    return decimate(clip, clip.sample_rate // sample_rate)


def align_f0_codes(seq: F0CodeSequence, count: int) -> F0CodeSequence:
    """Trim or extend (holding the last code) to exactly ``count`` codes.

    Content and pitch framings cover slightly different spans of the same
    clip, so their code counts can differ by one or two.
    """
    codes = seq.codes[:count]
    if len(codes) < count:
        fill = codes[-1] if len(codes) else 0
        codes = np.concatenate([codes, np.full(count - len(codes), fill, dtype=np.int64)])
    return F0CodeSequence(codes, seq.vocab, seq.frame_rate, seq.downsample)


@dataclass(frozen=True)
class EncodeResult:
    stream: Bitstream
    units: UnitSequence
    f0_codes: F0CodeSequence
    track: F0Track


def encode_clip(clip: AudioClip, content_cb: Codebook, f0_cb: Codebook, cfg: CodecConfig,
                speaker_id: int = 0, pitch_cfg: PitchConfig = PitchConfig(),
                flatten_mean: float | None = None, mel: MelConfig | None = None) -> EncodeResult:
    """Audio -> content units + F0 codes -> bit-exact stream.

    With ``flatten_mean`` set, every voiced F0 frame is replaced by it before
    F0 quantization.
    """
    if content_cb.size != cfg.content_vocab:
        raise ConfigError(f"content codebook has {content_cb.size} entries, config says {cfg.content_vocab}")
    if f0_cb.size != cfg.f0_vocab:
        raise ConfigError(f"F0 codebook has {f0_cb.size} entries, config says {cfg.f0_vocab}")
    clip = conform_rate(clip, cfg.sample_rate)
    feats = baseline_features(clip, cfg.content_hop, mel)
    units = quantize(feats, content_cb)
    track = extract_f0(clip, pitch_cfg)
    if flatten_mean is not None:
        track = flatten_f0(track, flatten_mean)
    f0 = f0_encode(track, f0_cb)
    expected_rate = float(cfg.f0_frame_rate)
    if abs(f0.frame_rate - expected_rate) > 1e-9 * expected_rate:
        raise ConfigError(
            f"F0 code rate {f0.frame_rate} Hz does not match content rate / f0_group = {expected_rate} Hz"
        )
    f0 = align_f0_codes(f0, cfg.num_f0_codes(len(units)))
    stream = encode_stream(units.codes, f0.codes, speaker_id, cfg)
    log.info("encoded %d content frames, %d F0 codes, %d payload bytes",
             len(units), len(f0), len(stream.payload))
    return EncodeResult(stream, units, f0, track)


def build_generator(run: RunConfig, cfg: CodecConfig | None = None) -> Generator:
    """Load generator weights from ``run.generator`` or draw them from ``run.seed``."""
    if cfg is not None:
        run = replace(run, codec=cfg)
    gcfg = run.generator_config()
    if run.generator is not None:
        return load_generator(run.generator, gcfg)
    return Generator(gcfg, init_generator_weights(gcfg, run.seed))


def speaker_embedding(speaker_id: int, table: SpeakerTable | None = None, seed: int = 0) -> np.ndarray:
    if table is not None:
        return table[speaker_id]
    return SpeakerTable.random([speaker_id], seed)[speaker_id]


def decode_to_audio(stream, gen: Generator, table: SpeakerTable | None = None,
                    seed: int = 0, speaker_id: int | None = None) -> AudioClip:
    """Bitstream -> audio of exactly ``num_content_frames * content_hop`` samples."""
    dec = decode_stream(stream)
    cfg = dec.config
    gcfg = gen.config
    if gcfg.hop != cfg.content_hop:
        raise ConfigError(f"generator upsamples x{gcfg.hop}, stream hop is {cfg.content_hop}")
    if gcfg.sample_rate != cfg.sample_rate:
        raise ConfigError(f"generator rate {gcfg.sample_rate} Hz != stream rate {cfg.sample_rate} Hz")
    units = UnitSequence(dec.content_codes, cfg.content_vocab, float(cfg.content_frame_rate))
    f0 = F0CodeSequence(dec.f0_codes, cfg.f0_vocab, float(cfg.f0_frame_rate))
    spk = dec.speaker_id if speaker_id is None else speaker_id
    return generate(gen, units, f0, speaker_embedding(spk, table, seed))
