from pathlib import Path
import shutil

import pytest

from dsrc.cli import main
from dsrc.codec import read_stream
from dsrc.signal import load_audio, write_audio

from conftest import speechlike

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    for i in range(3):
        write_audio(d / f"train{i}.wav", speechlike(2.0, seed=i))
    write_audio(d / "x.wav", speechlike(1.0, seed=9))
    assert main(["train-kmeans", str(d / "train0.wav"), str(d / "train1.wav"),
                 "--k", "50", "--out", str(d / "units.cdbk")]) == 0
    assert main(["train-f0vq", *(str(d / f"train{i}.wav") for i in range(3)),
                 "--k", "20", "--epochs", "5", "--out", str(d / "f0.cdbk")]) == 0
    return d


def books(d):
    return ["--content-codebook", str(d / "units.cdbk"), "--f0-codebook", str(d / "f0.cdbk")]


def test_analyze_prints_default_bitrate(capsys):
    assert main(["analyze", "--config", str(CONFIGS / "hubert50.toml")]) == 0
    table = dict(line.split("\t") for line in capsys.readouterr().out.strip().splitlines())
    assert table["content_bps"] == "300"
    assert table["f0_bps"] == "65"
    assert table["total_bps"] == "365"


@pytest.mark.parametrize("name, total", [("hubert100", 350 + 65), ("cpc100", 700 + 65),
                                         ("vqvae256", 800 + 65)])
def test_shipped_configs(name, total, capsys):
    assert main(["analyze", "--config", str(CONFIGS / f"{name}.toml")]) == 0
    assert f"total_bps\t{total}\n" in capsys.readouterr().out


def test_flags_override_config(capsys):
    assert main(["analyze", "--config", str(CONFIGS / "hubert50.toml"), "--content-vocab", "100"]) == 0
    assert "content_bps\t350\n" in capsys.readouterr().out


def test_encode_decode_length_law(work, capsys):
    out = work / "x.dsrc"
    assert main(["encode", str(work / "x.wav"), "--out", str(out), "--speaker-id", "3", *books(work)]) == 0
    stream = read_stream(out)
    assert stream.header.speaker_id == 3
    # decode must not need the source audio
    moved = work / "moved"
    moved.mkdir(exist_ok=True)
    shutil.copy(out, moved / "x.dsrc")
    assert main(["decode", str(moved / "x.dsrc"), "--out", str(moved / "y.wav")]) == 0
    clip = load_audio(moved / "y.wav")
    assert len(clip) == stream.header.num_content_frames * 320
    assert main(["analyze", "--stream", str(out)]) == 0
    assert "stream_payload_bits" in capsys.readouterr().out


def test_runs_are_byte_identical(work):
    for tag in ("a", "b"):
        assert main(["encode", str(work / "x.wav"), "--out", str(work / f"{tag}.dsrc"), *books(work)]) == 0
        assert main(["decode", str(work / f"{tag}.dsrc"), "--out", str(work / f"{tag}.wav"),
                     "--seed", "7"]) == 0
    assert (work / "a.dsrc").read_bytes() == (work / "b.dsrc").read_bytes()
    assert (work / "a.wav").read_bytes() == (work / "b.wav").read_bytes()


def test_convert_five_targets(work):
    src = work / "c.dsrc"
    assert main(["encode", str(work / "x.wav"), "--out", str(src), *books(work)]) == 0
    outdir = work / "conv"
    assert main(["convert", str(src), "--out-dir", str(outdir), "--seed", "1"]) == 0
    made = sorted(outdir.glob("*.dsrc"))
    assert len(made) == 5
    base = read_stream(src)
    for p in made:
        s = read_stream(p)
        assert s.payload == base.payload
        assert s.header.speaker_id != base.header.speaker_id
    again = work / "conv2"
    assert main(["convert", str(src), "--out-dir", str(again), "--seed", "1"]) == 0
    assert [p.name for p in made] == sorted(p.name for p in again.glob("*.dsrc"))


def test_flatten_f0(work, capsys):
    out = work / "flat.dsrc"
    assert main(["flatten-f0", str(work / "x.wav"), "--out", str(out), "--mean", "150", *books(work)]) == 0
    assert "150.00 Hz" in capsys.readouterr().out
    assert main(["flatten-f0", str(work / "x.wav"), "--out", str(out),
                 "--reference", str(work / "train0.wav"), *books(work)]) == 0


def test_unknown_subcommand(capsys):
    code = main(["bogus"])
    assert code == 2
    assert "usage" in capsys.readouterr().err


def test_exit_codes(work, tmp_path, capsys):
    assert main(["encode", str(tmp_path / "nope.wav"), *books(work)]) == 3
    assert main(["encode", str(work / "x.wav"), "--content-codebook", str(tmp_path / "no.cdbk"),
                 "--f0-codebook", str(work / "f0.cdbk")]) == 3
    # codebook size disagrees with the configured vocabulary
    assert main(["encode", str(work / "x.wav"), "--content-vocab", "64", *books(work),
                 "--out", str(tmp_path / "z.dsrc")]) == 4
    assert main(["encode", str(work / "x.wav")]) == 4
    bad = tmp_path / "bad.dsrc"
    bad.write_bytes(b"NOPE" + bytes(30))
    assert main(["decode", str(bad)]) == 5
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[codec]\nbogus = 1\n")
    assert main(["analyze", "--config", str(cfg)]) == 4
    assert main(["analyze", "--reference", str(work / "x.wav")]) == 4
    err = capsys.readouterr().err
    assert err.count("dsrc: error:") == 5 + 2


def test_analyze_reference_hypothesis(work, capsys):
    assert main(["analyze", "--reference", str(work / "x.wav"), "--hypothesis", str(work / "x.wav")]) == 0
    table = dict(line.split("\t") for line in capsys.readouterr().out.strip().splitlines())
    assert float(table["vde"]) == 0.0 and float(table["ffe"]) == 0.0
    assert float(table["recon"]) == 0.0
    assert float(table["generator_total"]) == pytest.approx(
        sum(float(v) for k, v in table.items() if k.startswith("adv.")))
