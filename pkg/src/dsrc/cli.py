"""``dsrc`` command line: train quantizers, encode, decode, convert, flatten F0, analyze.

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 missing file,
4 configuration / codebook mismatch, 5 malformed input file.
"""

import argparse
import logging
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .codec import bitrate, decode_stream, encode_stream, read_stream, write_stream
from .errors import ConfigError, FormatError
from .features import baseline_features, load_features
from .losses import LossWeights, total_losses
from .metrics import ffe, vde
from .pipeline import (
    build_generator,
    conform_rate,
    decode_to_audio,
    encode_clip,
    load_run_config,
)
from .pitch import extract_f0, read_f0track, speaker_mean_f0
from .quantize import kmeans_fit, load_codebook, save_codebook, train_f0_codebook
from .signal import load_audio, write_audio
from .vocoder import Discriminators, SpeakerTable

log = logging.getLogger("dsrc")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_MISMATCH = 4
EXIT_FORMAT = 5


def _run_config(args):
    run = load_run_config(
        args.config,
        content_vocab=args.content_vocab,
        f0_vocab=args.f0_vocab,
        content_hop=args.content_hop,
        f0_group=args.f0_group,
        sample_rate=args.sample_rate,
        content_codebook=args.content_codebook,
        f0_codebook=args.f0_codebook,
        generator=args.generator,
        speakers=args.speakers,
        seed=args.seed,
    )
    run.check_files()
    return run


def _require(path, what):
    if path is None:
        raise ConfigError(f"no {what} given (set it in [paths] or pass the flag)")
    return path


def _speakers(run):
    return SpeakerTable.load(run.speakers) if run.speakers is not None else None


def _load_clip(path, run):
    return conform_rate(load_audio(path), run.codec.sample_rate)


def cmd_train_kmeans(args):
    run = _run_config(args)
    k = args.k or run.codec.content_vocab
    feats = []
    for p in args.inputs:
        if Path(p).suffix == ".ftrs":
            feats.append(load_features(p))
        else:
            feats.append(baseline_features(_load_clip(p, run), run.codec.content_hop, run.mel))
    dims = {f.dim for f in feats}
    if len(dims) != 1:
        raise ConfigError(f"inputs disagree on feature dimension: {sorted(dims)}")
    cb = kmeans_fit(feats, k, max_iters=args.max_iters, tol=args.tol, seed=run.seed)
    save_codebook(args.out, cb)
    print(f"k-means codebook: K={cb.size} dim={cb.dim} from {sum(len(f) for f in feats)} frames -> {args.out}")


def cmd_train_f0vq(args):
    run = _run_config(args)
    k = args.k or run.codec.f0_vocab
    tracks = []
    for p in args.inputs:
        if Path(p).suffix == ".f0tk":
            tracks.append(read_f0track(p))
        else:
            tracks.append(extract_f0(_load_clip(p, run), run.pitch))
    cb = train_f0_codebook(tracks, k, epochs=args.epochs, batch_size=args.batch_size, seed=run.seed)
    save_codebook(args.out, cb)
    print(f"F0 codebook: K={cb.size} dim={cb.dim} from {len(tracks)} tracks -> {args.out}")


def _encode(args, flatten_mean=None):
    run = _run_config(args)
    content_cb = load_codebook(_require(run.content_codebook, "content codebook"))
    f0_cb = load_codebook(_require(run.f0_codebook, "F0 codebook"))
    clip = _load_clip(args.input, run)
    if flatten_mean == "auto":
        flatten_mean = speaker_mean_f0(extract_f0(clip, run.pitch))
    res = encode_clip(clip, content_cb, f0_cb, run.codec, args.speaker_id, run.pitch,
                      flatten_mean=flatten_mean, mel=run.mel)
    out = args.out or str(Path(args.input).with_suffix(".dsrc"))
    write_stream(out, res.stream)
    return res, out


def cmd_encode(args):
    res, out = _encode(args)
    print(f"{args.input} -> {out}: {res.stream.header.num_content_frames} frames, "
          f"{len(res.stream.to_bytes())} bytes")


def cmd_flatten_f0(args):
    mean = args.mean
    if mean is None and args.reference:
        run = _run_config(args)
        mean = speaker_mean_f0([extract_f0(_load_clip(p, run), run.pitch) for p in args.reference])
    res, out = _encode(args, flatten_mean=mean if mean is not None else "auto")
    voiced = res.track.f0[res.track.voiced]
    target = f"{voiced[0]:.2f} Hz" if voiced.size else "n/a (no voiced frames)"
    print(f"{args.input} -> {out}: voiced F0 flattened to {target}")


def cmd_decode(args):
    run = _run_config(args)
    stream = read_stream(args.input)
    cfg = stream.header.config
    gen = build_generator(run, cfg)
    clip = decode_to_audio(stream, gen, _speakers(run), run.seed)
    out = args.out or str(Path(args.input).with_suffix(".wav"))
    write_audio(out, clip)
    print(f"{args.input} -> {out}: {len(clip)} samples @ {clip.sample_rate} Hz")


def cmd_convert(args):
    run = _run_config(args)
    stream = read_stream(args.input)
    dec = decode_stream(stream)
    table = _speakers(run)
    if args.target:
        targets = list(args.target)
    else:
        pool = table.ids() if table is not None else list(range(args.speaker_pool))
        pool = [s for s in pool if s != dec.speaker_id]
        if len(pool) < args.num_targets:
            raise ConfigError(f"only {len(pool)} candidate target speakers, need {args.num_targets}")
        rng = np.random.default_rng(run.seed)
        targets = sorted(int(s) for s in rng.choice(pool, size=args.num_targets, replace=False))
    gen = build_generator(run, dec.config)
    outdir = Path(args.out_dir or Path(args.input).parent)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    for spk in targets:
        conv = encode_stream(dec.content_codes, dec.f0_codes, spk, dec.config)
        write_stream(outdir / f"{stem}_spk{spk}.dsrc", conv)
        clip = decode_to_audio(conv, gen, table, run.seed)
        write_audio(outdir / f"{stem}_spk{spk}.wav", clip)
        print(f"speaker {dec.speaker_id} -> {spk}: {outdir / f'{stem}_spk{spk}.wav'}")


def cmd_analyze(args):
    run = _run_config(args)
    rate = bitrate(run.codec)
    c = run.codec
    print(f"content_vocab\t{c.content_vocab}")
    print(f"content_frame_rate_hz\t{float(c.content_frame_rate):g}")
    print(f"f0_vocab\t{c.f0_vocab}")
    print(f"f0_frame_rate_hz\t{float(c.f0_frame_rate):g}")
    print(f"content_bps\t{rate.content_bps}")
    print(f"f0_bps\t{rate.f0_bps}")
    print(f"total_bps\t{rate.total}")
    if args.stream:
        stream = read_stream(args.stream)
        hdr = stream.header
        seconds = hdr.num_content_frames * hdr.config.content_hop / hdr.config.sample_rate
        print(f"stream_payload_bits\t{stream.payload_bits}")
        print(f"stream_payload_bytes\t{len(stream.payload)}")
        print(f"stream_measured_bps\t{8 * len(stream.payload) / seconds:.3f}")
    if args.reference and args.hypothesis:
        ref = _load_clip(args.reference, run)
        hyp = _load_clip(args.hypothesis, run)
        n = min(len(ref), len(hyp))
        ref = type(ref)(ref.samples[:n], ref.sample_rate)
        hyp = type(hyp)(hyp.samples[:n], hyp.sample_rate)
        tr_ref = extract_f0(ref, run.pitch)
        tr_hyp = extract_f0(hyp, run.pitch)
        print(f"vde\t{vde(tr_ref, tr_hyp):.6f}")
        print(f"ffe\t{ffe(tr_ref, tr_hyp):.6f}")
        disc = Discriminators.random(seed=run.seed)
        report = total_losses(ref, hyp, disc(ref), disc(hyp), LossWeights(), run.mel)
        sys.stdout.write(report.to_text())
    elif args.reference or args.hypothesis:
        raise ConfigError("--reference and --hypothesis must be given together")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--content-vocab", type=int)
    p.add_argument("--f0-vocab", type=int)
    p.add_argument("--content-hop", type=int)
    p.add_argument("--f0-group", type=int)
    p.add_argument("--sample-rate", type=int)
    p.add_argument("--content-codebook")
    p.add_argument("--f0-codebook")
    p.add_argument("--generator", help="WGTS generator weights; seeded random weights if omitted")
    p.add_argument("--speakers", help="WGTS speaker table; seeded random embeddings if omitted")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="dsrc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dsrc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train-kmeans", parents=[common], help="fit content units with k-means")
    p.add_argument("inputs", nargs="+", help="WAV files or .ftrs feature files")
    p.add_argument("--k", type=int)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_kmeans)

    p = sub.add_parser("train-f0vq", parents=[common], help="train the EMA F0 codebook")
    p.add_argument("inputs", nargs="+", help="WAV files or .f0tk track files")
    p.add_argument("--k", type=int)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_f0vq)

    p = sub.add_parser("encode", parents=[common], help="WAV -> .dsrc")
    p.add_argument("input")
    p.add_argument("--out")
    p.add_argument("--speaker-id", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help=".dsrc -> WAV through the generator")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("convert", parents=[common], help="swap the speaker and resynthesize")
    p.add_argument("input")
    p.add_argument("--target", type=int, action="append", help="target speaker id (repeatable)")
    p.add_argument("--num-targets", type=int, default=5)
    p.add_argument("--speaker-pool", type=int, default=100,
                   help="candidate ids 0..N-1 when no speaker table is given")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("flatten-f0", parents=[common], help="encode with F0 set to the speaker mean")
    p.add_argument("input")
    p.add_argument("--out")
    p.add_argument("--speaker-id", type=int, default=0)
    p.add_argument("--mean", type=float, help="target F0 in Hz")
    p.add_argument("--reference", nargs="+", help="WAVs of the speaker for the mean F0")
    p.set_defaults(func=cmd_flatten_f0)

    p = sub.add_parser("analyze", parents=[common], help="bitrate breakdown, VDE/FFE, losses")
    p.add_argument("--stream", help="measure an encoded .dsrc file")
    p.add_argument("--reference", help="reference WAV")
    p.add_argument("--hypothesis", help="resynthesized WAV")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"dsrc: error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"dsrc: error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except FormatError as exc:
        print(f"dsrc: error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, KeyError) as exc:
        print(f"dsrc: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
