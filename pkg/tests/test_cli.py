import json

import pytest

from occ.cli import main

from .conftest import ENGLISH


@pytest.fixture
def sample(tmp_path):
    p = tmp_path / "in.txt"
    p.write_bytes(ENGLISH.read_bytes()[130_000:130_800])
    return p


@pytest.fixture
def prime(tmp_path):
    p = tmp_path / "prime.txt"
    p.write_bytes(ENGLISH.read_bytes()[:40_000])
    return p


@pytest.mark.parametrize("mode", ["sync", "async"])
def test_encode_decode_roundtrip(tmp_path, sample, prime, capsys, mode):
    c, out, m = tmp_path / "x.occ", tmp_path / "out.txt", tmp_path / "m.json"
    rc = main(["encode", str(sample), "--out", str(c), "--mode", mode, "--alpha", "0.2",
               "--eta1", "0.05", "--prime", str(prime), "--order", "2", "--metrics", str(m)])
    assert rc == 0
    enc = json.loads(m.read_text())
    assert enc["T"] == 800 and enc["distortion"] <= enc["distortion_limit"]
    assert enc["uncompressed_bits_per_symbol"] == 8
    capsys.readouterr()
    rc = main(["decode", str(c), "--out", str(out), "--prime", str(prime), "--order", "2",
               "--original", str(sample)])
    assert rc == 0
    dec = json.loads(capsys.readouterr().out)
    assert dec["total_bits"] == enc["total_bits"]
    assert dec["outages"] == enc["outages"]
    recon = out.read_bytes()
    assert len(recon) == 800
    assert sum(a != b for a, b in zip(recon, sample.read_bytes())) == enc["outages"]


def test_flags_override_config_file(tmp_path, sample, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 0.3, "mode": "async", "order": 1}))
    rc = main(["encode", str(sample), "--out", str(tmp_path / "x.occ"), "--config", str(cfg),
               "--alpha", "0.15"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["alpha"] == 0.15 and doc["mode"] == "async"


def test_exit_codes(tmp_path, sample, prime):
    c = tmp_path / "x.occ"
    # async with alpha = 0 is a configuration error
    assert main(["encode", str(sample), "--out", str(c), "--mode", "async", "--alpha", "0"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["encode", str(sample), "--out", str(c), "--config", str(bad)]) == 2
    assert main(["encode", str(tmp_path / "missing"), "--out", str(c)]) == 3
    assert main(["encode", str(sample), "--out", str(c), "--prime", str(prime)]) == 0
    # decoding with a different predictor is refused
    assert main(["decode", str(c), "--out", str(tmp_path / "o")]) == 4
    data = bytearray(c.read_bytes())
    data[60] ^= 0xFF
    c.write_bytes(bytes(data))
    assert main(["decode", str(c), "--out", str(tmp_path / "o"), "--prime", str(prime)]) == 4


def test_integer_symbols(tmp_path, capsys):
    src = tmp_path / "s.txt"
    src.write_text(" ".join(str(i % 7) for i in range(300)))
    c = tmp_path / "s.occ"
    assert main(["encode", str(src), "--out", str(c), "--alphabet-size", "7",
                 "--alpha", "0.1", "--eta1", "0.1"]) == 0
    assert main(["decode", str(c), "--out", str(tmp_path / "d.txt"), "--alphabet-size", "7",
                 "--original", str(src)]) == 0
    assert main(["encode", str(src), "--out", str(c), "--alphabet-size", "5"]) == 2


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "sweep"
    rc = main(["sweep", "--corpus", str(ENGLISH), "--schemes", "occ,dropout", "--alphas", "0.1,0.3",
               "--sequences", "1", "--length", "200", "--eta1", "0.05", "--out", str(out)])
    assert rc == 0
    assert (out / "results.csv").exists() and (out / "config.json").exists()
    assert main(["sweep", "--corpus", str(ENGLISH), "--schemes", "zip", "--out", str(out)]) == 2
