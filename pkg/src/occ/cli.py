"""Command line interface: ``occ encode``, ``occ decode`` and ``occ sweep``.

Settings come from built-in defaults, then an optional JSON ``--config``
file, then explicit flags (later sources win).  Exit codes: 0 success,
2 configuration error, 3 I/O error, 4 desync or integrity error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .codec import CodecConfig, Decoder, DesyncError, Encoder, run_metrics, write_trace_csv
from .coder import CodingError
from .conformal import ConformalConfig
from .experiments import ExperimentConfig, occ_rows_violating_bound, run_sweep, write_sweep
from .predictor import PredictorError, PredictorSpec
from .transport import ContainerError, read_container, wire_overhead_bits, write_container

log = logging.getLogger("occ")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INTEGRITY = 0, 2, 3, 4

CODEC_DEFAULTS = {
    "mode": "sync",
    "alpha": 0.1,
    "eta1": 0.001,
    "beta": 0.0,
    "gamma1": None,
    "coder": "shannon",
    "predictor": "context_model",
    "order": 3,
    "alphabet_size": 256,
    "prime": None,
    "replay": None,
    "format": "auto",
}


class ConfigError(Exception):
    pass


class IntegrityError(Exception):
    pass


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def _settings(args, defaults: dict, keys) -> dict:
    cfg = _load_config(args.config)
    merged = dict(defaults)
    merged.update({k: v for k, v in cfg.items() if k in keys})
    unknown = set(cfg) - set(keys)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged.update({k: v for k, v in vars(args).items() if k in keys and v is not None})
    return merged


def _predictor_spec(s: dict) -> PredictorSpec:
    return PredictorSpec(kind=s["predictor"], alphabet_size=s["alphabet_size"], order=s["order"],
                         source_path=s["replay"], prime_path=s["prime"])


def _codec_config(s: dict, spec: PredictorSpec) -> CodecConfig:
    conf = ConformalConfig(alpha=s["alpha"], gamma1=s["gamma1"], eta1=s["eta1"], beta=s["beta"])
    return CodecConfig(s["mode"], conf, spec, s["coder"])


def _read_symbols(path, alphabet_size: int, fmt: str) -> list[int]:
    data = Path(path).read_bytes()
    if fmt == "auto":
        fmt = "bytes" if alphabet_size == 256 else "ints"
    if fmt == "bytes":
        if alphabet_size < 256:
            raise ConfigError("byte input needs alphabet_size 256")
        return list(data)
    syms = [int(tok) for tok in data.split()]
    bad = [s for s in syms if not 0 <= s < alphabet_size]
    if bad:
        raise ConfigError(f"symbol {bad[0]} outside alphabet of size {alphabet_size}")
    return syms


def _write_symbols(path, syms, alphabet_size: int, fmt: str) -> None:
    if fmt == "auto":
        fmt = "bytes" if alphabet_size == 256 else "ints"
    if fmt == "bytes":
        Path(path).write_bytes(bytes(syms))
    else:
        Path(path).write_text(" ".join(map(str, syms)) + "\n")


def _emit_json(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    print(text)


def cmd_encode(args) -> int:
    s = _settings(args, CODEC_DEFAULTS, CODEC_DEFAULTS.keys())
    try:
        spec = _predictor_spec(s)
        config = _codec_config(s, spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    symbols = _read_symbols(args.input, spec.alphabet_size, s["format"])
    enc = Encoder(config)
    trace = enc.encode(symbols)
    total = sum(o.bits for o in trace)
    data = write_container(config.header(len(trace), total), [o.message for o in trace])
    Path(args.out).write_bytes(data)
    if args.trace:
        write_trace_csv(trace, args.trace)
    doc = {"container": str(args.out), "mode": config.mode,
           "uncompressed_bits_per_symbol": math.ceil(math.log2(spec.alphabet_size)),
           "wire_overhead_bits": wire_overhead_bits(data, config.header(len(trace), total))}
    if trace:
        doc.update(run_metrics(trace, config.conformal).as_dict())
    else:
        doc.update({"T": 0, "total_bits": 0})
    _emit_json(doc, args.metrics)
    return EXIT_OK


def cmd_decode(args) -> int:
    s = _settings(args, CODEC_DEFAULTS, CODEC_DEFAULTS.keys())
    container = read_container(Path(args.input).read_bytes())
    h = container.header
    try:
        spec = _predictor_spec({**s, "alphabet_size": h.alphabet_size})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if spec.digest() != h.predictor_digest:
        raise IntegrityError("predictor spec does not match the one used to encode; refusing to decode")
    config = CodecConfig(h.mode, ConformalConfig(alpha=h.alpha, gamma1=h.gamma1, eta1=h.eta1,
                                                 beta=h.beta), spec, h.backend)
    dec = Decoder(config)
    if h.mode == "sync":
        recon = dec.decode_messages(container.messages)
    else:
        recon = dec.decode_bitstream(container.reader(), h.T)
    _write_symbols(args.out, recon, h.alphabet_size, s["format"])
    doc = {"output": str(args.out), "T": h.T, "total_bits": h.payload_bits,
           "B_T": h.payload_bits / h.T if h.T else 0.0, "mode": h.mode}
    if args.original:
        orig = _read_symbols(args.original, h.alphabet_size, s["format"])
        if len(orig) != len(recon):
            raise ConfigError(f"original has {len(orig)} symbols, stream has {len(recon)}")
        outages = sum(a != b for a, b in zip(orig, recon))
        doc["outages"] = outages
        doc["distortion"] = outages / len(recon) if recon else 0.0
    _emit_json(doc, args.metrics)
    return EXIT_OK


SWEEP_KEYS = set(ExperimentConfig.__dataclass_fields__)


def cmd_sweep(args) -> int:
    s = _settings(args, {}, SWEEP_KEYS)
    try:
        cfg = ExperimentConfig.from_dict(s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    result = run_sweep(cfg)
    paths = write_sweep(result, cfg, args.out)
    bad = occ_rows_violating_bound(result["rows"])
    for p in paths:
        print(p)
    if bad:
        log.error("%d OCC rows exceed alpha + bound", len(bad))
        return EXIT_INTEGRITY
    return EXIT_OK


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _words(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_codec_flags(p):
    p.add_argument("--config", help="JSON settings file")
    p.add_argument("--mode", choices=["sync", "async"])
    p.add_argument("--alpha", type=float, help="target outage rate")
    p.add_argument("--eta1", type=float, help="base step size of the quantile update")
    p.add_argument("--beta", type=float, help="step-size decay exponent")
    p.add_argument("--gamma1", type=float, help="initial quantile level (default: alpha)")
    p.add_argument("--predictor", choices=["context_model", "replay", "uniform"])
    p.add_argument("--order", type=int, help="context model order")
    p.add_argument("--alphabet-size", dest="alphabet_size", type=int)
    p.add_argument("--prime", help="file fed to the context model before coding")
    p.add_argument("--replay", help="replay distribution file")
    p.add_argument("--coder", choices=["shannon", "huffman"], help="async prefix code")
    p.add_argument("--format", choices=["auto", "bytes", "ints"], help="symbol file format")
    p.add_argument("--metrics", help="write the metrics JSON here as well as stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occ", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="compress a symbol file into a container")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="per-step trace CSV")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct a symbol file from a container")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--original", help="original file, to report realized distortion")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="run scheme comparisons over an alpha grid")
    p.add_argument("--config", help="JSON experiment file")
    p.add_argument("--corpus", dest="corpora", action="append",
                   help="corpus file; repeat for a shift scenario (segments in order)")
    p.add_argument("--schemes", type=_words, help="comma list of occ,dropout,bcc")
    p.add_argument("--modes", type=_words, help="comma list of sync,async")
    p.add_argument("--alphas", type=_floats, help="comma list of target outage rates")
    p.add_argument("--mode", dest="modes", type=lambda v: [v], help="single mode")
    p.add_argument("--alpha", dest="alphas", type=lambda v: [float(v)], help="single alpha")
    p.add_argument("--eta1", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma1", type=float)
    p.add_argument("--sequences", type=int, help="number of sequence draws")
    p.add_argument("--length", type=int, help="symbols per sequence")
    p.add_argument("--train-bytes", dest="train_bytes", type=int,
                   help="prefix of the first corpus used to prime the predictor")
    p.add_argument("--predictor", choices=["context_model", "uniform"])
    p.add_argument("--order", type=int)
    p.add_argument("--coder", choices=["shannon", "huffman"])
    p.add_argument("--seed", type=int)
    p.add_argument("--bcc-grid", dest="bcc_grid", type=int)
    p.add_argument("--bcc-anytime", dest="bcc_anytime", action="store_true", default=None)
    p.add_argument("--jobs", type=int)
    p.add_argument("--traces", action="store_true", default=None, help="also write per-step traces")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, PredictorError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (DesyncError, ContainerError, IntegrityError, CodingError) as exc:
        log.error("integrity error: %s", exc)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
