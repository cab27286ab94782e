"""Bit-exact ``.dsrc`` streams, bitrate accounting and packetization.

Stream layout (integers little-endian, codes MSB-first)::

    header   "DSRC" | version u8 | sample_rate u32 | content_hop u16 |
             content_vocab u16 | f0_vocab u16 | f0_group u8 | speaker_id u16 |
             num_content_frames u32
    content  L codes x ceil(log2 K) bits, zero-padded to a byte
    f0       ceil(L / f0_group) codes x ceil(log2 K') bits, zero-padded to a byte

Packets are ``u32 sequence | body``. Packet 0 carries the header followed
by ``frames_per_packet`` (u32); packet ``i >= 1`` carries the content and F0
code bits of frames ``[(i-1)*fpp, i*fpp)``, each section padded on its own.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import ceil
from pathlib import Path
import struct

import numpy as np

from . import kernels
from .errors import ConfigError, FormatError, PacketError

__all__ = [
    "MAGIC",
    "VERSION",
    "CodecConfig",
    "StreamHeader",
    "Bitstream",
    "DecodedStream",
    "Bitrate",
    "bits_per_code",
    "bitrate",
    "encode_stream",
    "decode_stream",
    "packetize",
    "depacketize",
    "write_stream",
    "read_stream",
]

MAGIC = b"DSRC"
VERSION = 1
_HEAD = struct.Struct("<4sBIHHHBHI")
_SEQ = struct.Struct("<I")


def bits_per_code(vocab: int) -> int:
    """``ceil(log2 vocab)``; a one-symbol vocabulary needs no bits."""
    if vocab < 1:
        raise ConfigError(f"vocabulary size must be at least 1, got {vocab}")
    return (int(vocab) - 1).bit_length()


@dataclass(frozen=True)
class CodecConfig:
    content_vocab: int = 50
    f0_vocab: int = 20
    sample_rate: int = 16000
    content_hop: int = 320
    f0_group: int = 4

    def __post_init__(self):
        if self.content_vocab < 1 or self.f0_vocab < 1:
            raise ConfigError("vocabulary sizes must be at least 1")
        if self.sample_rate < 1 or self.content_hop < 1 or self.f0_group < 1:
            raise ConfigError("sample_rate, content_hop and f0_group must be positive")
        if self.content_vocab > 0xFFFF or self.f0_vocab > 0xFFFF or self.content_hop > 0xFFFF:
            raise ConfigError("vocabularies and hop must fit in 16 bits")
        if self.f0_group > 0xFF:
            raise ConfigError("f0_group must fit in 8 bits")

    @property
    def content_frame_rate(self) -> Fraction:
        return Fraction(self.sample_rate, self.content_hop)

    @property
    def f0_frame_rate(self) -> Fraction:
        return self.content_frame_rate / self.f0_group

    def num_f0_codes(self, num_content_frames: int) -> int:
        return -(-num_content_frames // self.f0_group)


@dataclass(frozen=True)
class StreamHeader:
    config: CodecConfig
    speaker_id: int
    num_content_frames: int
    version: int = VERSION

    def pack(self) -> bytes:
        c = self.config
        return _HEAD.pack(MAGIC, self.version, c.sample_rate, c.content_hop, c.content_vocab,
                          c.f0_vocab, c.f0_group, self.speaker_id, self.num_content_frames)

    @classmethod
    def unpack(cls, data: bytes) -> "StreamHeader":
        if len(data) < _HEAD.size:
            raise FormatError(f"stream shorter than its {_HEAD.size}-byte header")
        magic, version, sr, hop, kc, kf, group, spk, n = _HEAD.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported stream version {version}")
        if n < 1:
            raise FormatError("stream declares zero content frames")
        try:
            cfg = CodecConfig(kc, kf, sr, hop, group)
        except ConfigError as exc:
            raise FormatError(f"invalid header: {exc}") from exc
        return cls(cfg, spk, n, version)

    @property
    def num_f0_codes(self) -> int:
        return self.config.num_f0_codes(self.num_content_frames)

    def section_sizes(self):
        """Byte lengths of the padded content and F0 sections."""
        c = self.config
        return (
            ceil(self.num_content_frames * bits_per_code(c.content_vocab) / 8),
            ceil(self.num_f0_codes * bits_per_code(c.f0_vocab) / 8),
        )


@dataclass(frozen=True)
class Bitstream:
    header: StreamHeader
    payload: bytes

    def to_bytes(self) -> bytes:
        return self.header.pack() + self.payload

    @property
    def payload_bits(self) -> int:
        """Code bits before byte padding."""
        c = self.header.config
        return (self.header.num_content_frames * bits_per_code(c.content_vocab)
                + self.header.num_f0_codes * bits_per_code(c.f0_vocab))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        header = StreamHeader.unpack(data)
        return cls(header, bytes(data[_HEAD.size:]))


@dataclass(frozen=True)
class DecodedStream:
    content_codes: np.ndarray
    f0_codes: np.ndarray
    speaker_id: int
    config: CodecConfig


@dataclass(frozen=True)
class Bitrate:
    content_bps: Fraction
    f0_bps: Fraction

    @property
    def total(self) -> Fraction:
        return self.content_bps + self.f0_bps


def bitrate(config: CodecConfig) -> Bitrate:
    """Bits per second of the content and F0 code streams.

    The F0 rate is rounded up to whole codes per second (12.5 Hz counts as
    13); the speaker id is sent once and does not count.
    """
    content = bits_per_code(config.content_vocab) * config.content_frame_rate
    f0 = bits_per_code(config.f0_vocab) * ceil(config.f0_frame_rate)
    return Bitrate(Fraction(content), Fraction(f0))


def _check_codes(codes, vocab, what):
    codes = np.asarray(codes)
    if codes.ndim != 1:
        raise ValueError(f"{what} codes must be 1-D")
    if codes.size and not np.issubdtype(codes.dtype, np.integer):
        if not np.all(codes == np.round(codes)):
            raise ValueError(f"{what} codes must be integers")
    codes = codes.astype(np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= vocab):
        bad = codes[(codes < 0) | (codes >= vocab)][0]
        raise ValueError(f"{what} code {bad} outside vocabulary of {vocab}")
    return codes


def encode_stream(content_codes, f0_codes, speaker_id: int, config: CodecConfig) -> Bitstream:
    zc = _check_codes(content_codes, config.content_vocab, "content")
    zf = _check_codes(f0_codes, config.f0_vocab, "F0")
    if len(zc) == 0:
        raise ValueError("empty content code sequence")
    if len(zc) > 0xFFFFFFFF:
        raise ValueError("too many content frames for the header")
    if len(zf) != config.num_f0_codes(len(zc)):
        raise ValueError(
            f"{len(zf)} F0 codes for {len(zc)} content frames; expected "
            f"ceil({len(zc)}/{config.f0_group}) = {config.num_f0_codes(len(zc))}"
        )
    if not 0 <= int(speaker_id) <= 0xFFFF:
        raise ValueError(f"speaker id {speaker_id} does not fit in 16 bits")
    header = StreamHeader(config, int(speaker_id), len(zc))
    payload = (kernels.pack_codes(zc, bits_per_code(config.content_vocab))
               + kernels.pack_codes(zf, bits_per_code(config.f0_vocab)))
    return Bitstream(header, payload)


def decode_stream(stream) -> DecodedStream:
    """Inverse of :func:`encode_stream`; accepts a :class:`Bitstream` or raw bytes."""
    if not isinstance(stream, Bitstream):
        stream = Bitstream.from_bytes(bytes(stream))
    header = stream.header
    cfg = header.config
    n_content, n_f0 = header.section_sizes()
    if len(stream.payload) != n_content + n_f0:
        raise FormatError(
            f"payload is {len(stream.payload)} bytes, header implies {n_content + n_f0}"
        )
    zc = kernels.unpack_codes(stream.payload[:n_content], bits_per_code(cfg.content_vocab),
                              header.num_content_frames)
    zf = kernels.unpack_codes(stream.payload[n_content:], bits_per_code(cfg.f0_vocab),
                              header.num_f0_codes)
    if zc.size and zc.max() >= cfg.content_vocab:
        raise FormatError(f"content code {zc.max()} exceeds vocabulary {cfg.content_vocab}")
    if zf.size and zf.max() >= cfg.f0_vocab:
        raise FormatError(f"F0 code {zf.max()} exceeds vocabulary {cfg.f0_vocab}")
    return DecodedStream(zc, zf, header.speaker_id, cfg)


def write_stream(path, stream: Bitstream) -> None:
    Path(path).write_bytes(stream.to_bytes())


def read_stream(path) -> Bitstream:
    stream = Bitstream.from_bytes(Path(path).read_bytes())
    decode_stream(stream)
    return stream


def packetize(stream: Bitstream, frames_per_packet: int) -> list:
    """Split ``stream`` into a header packet plus one packet per frame range."""
    cfg = stream.header.config
    if frames_per_packet < 1 or frames_per_packet % cfg.f0_group:
        raise ValueError(
            f"frames_per_packet must be a positive multiple of f0_group={cfg.f0_group}"
        )
    dec = decode_stream(stream)
    bc = bits_per_code(cfg.content_vocab)
    bf = bits_per_code(cfg.f0_vocab)
    gpp = frames_per_packet // cfg.f0_group
    packets = [_SEQ.pack(0) + stream.header.pack() + _SEQ.pack(frames_per_packet)]
    nframes = stream.header.num_content_frames
    for i, lo in enumerate(range(0, nframes, frames_per_packet), start=1):
        fc = dec.content_codes[lo:lo + frames_per_packet]
        ff = dec.f0_codes[(i - 1) * gpp:i * gpp]
        packets.append(_SEQ.pack(i) + kernels.pack_codes(fc, bc) + kernels.pack_codes(ff, bf))
    return packets


def depacketize(packets) -> Bitstream:
    """Reassemble a stream from packets in any order.

    Raises :class:`PacketError` for duplicate or missing sequence numbers
    (including a missing header packet).
    """
    by_seq = {}
    dups = set()
    for pkt in packets:
        pkt = bytes(pkt)
        if len(pkt) < _SEQ.size:
            raise PacketError("packet shorter than its sequence number")
        (seq,) = _SEQ.unpack_from(pkt)
        if seq in by_seq:
            dups.add(seq)
        by_seq[seq] = pkt[_SEQ.size:]
    if dups:
        raise PacketError(f"duplicate sequence numbers {sorted(dups)}", duplicates=dups)
    if 0 not in by_seq:
        raise PacketError("header packet (sequence 0) missing", missing={0})
    head = by_seq[0]
    if len(head) != _HEAD.size + _SEQ.size:
        raise PacketError(f"header packet has {len(head)} bytes, expected {_HEAD.size + _SEQ.size}")
    header = StreamHeader.unpack(head)
    (fpp,) = _SEQ.unpack_from(head, _HEAD.size)
    cfg = header.config
    if fpp < 1 or fpp % cfg.f0_group:
        raise PacketError(f"invalid frames_per_packet {fpp} in header packet")
    nframes = header.num_content_frames
    npackets = -(-nframes // fpp)
    expected = set(range(1, npackets + 1))
    missing = expected - set(by_seq)
    if missing:
        raise PacketError(f"missing packets {sorted(missing)}", missing=missing)
    extra = set(by_seq) - expected - {0}
    if extra:
        raise PacketError(f"unexpected sequence numbers {sorted(extra)}")
    bc = bits_per_code(cfg.content_vocab)
    bf = bits_per_code(cfg.f0_vocab)
    zc, zf = [], []
    for i in range(1, npackets + 1):
        n = min(fpp, nframes - (i - 1) * fpp)
        m = cfg.num_f0_codes(n)
        clen = ceil(n * bc / 8)
        body = by_seq[i]
        if len(body) != clen + ceil(m * bf / 8):
            raise PacketError(f"packet {i} has {len(body)} bytes, expected {clen + ceil(m * bf / 8)}")
        zc.append(kernels.unpack_codes(body[:clen], bc, n))
        zf.append(kernels.unpack_codes(body[clen:], bf, m))
    return encode_stream(np.concatenate(zc), np.concatenate(zf), header.speaker_id, cfg)
