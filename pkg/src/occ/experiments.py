"""Experiment orchestration: corpus handling, sequence draws and scheme sweeps.

A sweep runs every (sequence draw, alpha) unit through every requested
scheme and mode.  Units are independent and may run in a process pool; the
output order is fixed, so CSVs are byte-identical across runs and job counts.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .benchmarks import DropoutConfig, SplitMix64, bcc_encoder, bcc_search, dropout_llmzip_run
from .codec import CodecConfig, Encoder
from .conformal import ConformalConfig, coverage_bound
from .predictor import ContextModel, UniformPredictor, prime_context_model

SCHEMES = ("occ", "dropout", "bcc")
MODES = ("sync", "async")

RESULT_COLUMNS = ["scheme", "mode", "alpha", "B_T", "distortion", "bound", "T", "seed",
                  "miscoverage_rate", "status"]


@dataclass
class ExperimentConfig:
    corpora: list[str]
    schemes: list[str] = field(default_factory=lambda: list(SCHEMES))
    modes: list[str] = field(default_factory=lambda: list(MODES))
    alphas: list[float] = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.15, 0.2, 0.25,
                                                         0.3, 0.35, 0.4, 0.45, 0.5])
    eta1: float = 0.001
    beta: float = 0.0
    gamma1: float | None = None  # None: start at alpha
    sequences: int = 10
    seed: int = 0
    length: int = 3500
    train_bytes: int = 0  # prefix of the first corpus used to prime the predictor
    predictor: str = "context_model"
    order: int = 3
    coder: str = "shannon"
    bcc_grid: int = 512
    bcc_anytime: bool = False
    jobs: int = 1
    traces: bool = False

    def __post_init__(self):
        if not self.corpora:
            raise ValueError("at least one corpus is required")
        if not self.schemes or not self.alphas or not self.modes:
            raise ValueError("need at least one scheme, mode and alpha")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")
        for a in self.alphas:
            if not 0.0 <= a < 1.0:
                raise ValueError(f"alpha {a} outside [0, 1)")
        if self.predictor not in ("context_model", "uniform"):
            raise ValueError("sweeps support context_model and uniform predictors")
        if self.length < len(self.corpora):
            raise ValueError("length shorter than the number of corpus segments")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)

    def conformal(self, alpha: float) -> ConformalConfig:
        return ConformalConfig(alpha=alpha, gamma1=self.gamma1, eta1=self.eta1, beta=self.beta)


@lru_cache(maxsize=8)
def _corpus(path: str) -> bytes:
    return Path(path).read_bytes()


@lru_cache(maxsize=4)
def _primed(path: str, train_bytes: int, order: int) -> ContextModel:
    model = ContextModel(256, order)
    if train_bytes:
        prime_context_model(model, _corpus(path)[:train_bytes])
    return model


def base_predictor(cfg: ExperimentConfig):
    if cfg.predictor == "uniform":
        return UniformPredictor(256)
    return _primed(cfg.corpora[0], cfg.train_bytes, cfg.order)


def segment_lengths(total: int, parts: int) -> list[int]:
    base = total // parts
    return [base + (1 if i < total - base * parts else 0) for i in range(parts)]


def draw_sequence(cfg: ExperimentConfig, index: int) -> list[int]:
    """The ``index``-th evaluation sequence.

    Each corpus contributes one contiguous segment, in order, at an offset
    drawn by SplitMix64.  The first corpus's training prefix is never drawn.
    """
    rng = SplitMix64(cfg.seed * 1_000_003 + index)
    seq: list[int] = []
    for i, (path, n) in enumerate(zip(cfg.corpora, segment_lengths(cfg.length, len(cfg.corpora)))):
        data = _corpus(path)
        start = cfg.train_bytes if i == 0 else 0
        room = len(data) - start - n
        if room < 0:
            raise ValueError(f"{path}: too short for a {n}-symbol segment after {start} training bytes")
        off = start + rng.randrange(room + 1)
        seq.extend(data[off:off + n])
    return seq


def _row(scheme, mode, alpha, seed, T, bits=math.nan, distortion=math.nan,
         mis=math.nan, bound=math.nan, status="ok"):
    return {"scheme": scheme, "mode": mode, "alpha": alpha, "B_T": bits / T if T else math.nan,
            "distortion": distortion, "bound": bound, "T": T, "seed": seed,
            "miscoverage_rate": mis, "status": status}


def _segments(outage: np.ndarray, bits: np.ndarray, cfg: ExperimentConfig):
    out = []
    start = 0
    for n in segment_lengths(len(outage), len(cfg.corpora)):
        out.append((float(outage[start:start + n].mean()), float(bits[start:start + n].mean())))
        start += n
    return out


def run_unit(cfg: ExperimentConfig, index: int, alpha: float) -> dict:
    """All schemes and modes for one sequence draw at one alpha."""
    seq = draw_sequence(cfg, index)
    T = len(seq)
    conf = cfg.conformal(alpha)
    bound = coverage_bound(conf, T)
    base = base_predictor(cfg)
    rows, traces, segments = [], [], []

    def record(scheme, mode, outage, covered, bits):
        outage = np.asarray(outage, dtype=bool)
        bits = np.asarray(bits, dtype=np.int64)
        mis = 1.0 - float(np.mean(covered))
        rows.append(_row(scheme, mode, alpha, index, T, int(bits.sum()),
                         float(outage.mean()), mis, bound))
        for k, (d, r) in enumerate(_segments(outage, bits, cfg)):
            segments.append({"scheme": scheme, "mode": mode, "alpha": alpha, "seed": index,
                             "segment": k, "distortion": d, "B_T": r})
        if cfg.traces:
            t = np.arange(1, T + 1)
            traces.append((scheme, mode, alpha, index, np.cumsum(bits) / t, np.cumsum(outage) / t))

    bcc = None
    for scheme in cfg.schemes:
        for mode in cfg.modes:
            if mode == "async" and alpha == 0.0 and scheme in ("occ", "bcc"):
                rows.append(_row(scheme, mode, alpha, index, T,
                                 status="skipped: async needs alpha > 0"))
                continue
            if scheme == "occ":
                trace = Encoder(CodecConfig(mode, conf, coder_backend=cfg.coder), base.fork()).encode(seq)
                record(scheme, mode, [o.outage for o in trace], [o.covered for o in trace],
                       [o.bits for o in trace])
            elif scheme == "dropout":
                trace = dropout_llmzip_run(seq, base.fork(), DropoutConfig(alpha, seed=index),
                                           mode, cfg.coder)
                record(scheme, mode, [o.outage for o in trace], [o.covered for o in trace],
                       [o.bits for o in trace])
            else:
                if bcc is None:
                    bcc = bcc_search(seq, base, alpha, mode, grid=cfg.bcc_grid,
                                     anytime=cfg.bcc_anytime, conformal=conf)
                sim = bcc.sim
                if mode == "async" and cfg.coder != "shannon":
                    # the fast simulator prices async steps with the Shannon code
                    enc = bcc_encoder(CodecConfig(mode, conf, coder_backend=cfg.coder),
                                      base.fork(), bcc.gamma_star)
                    trace = enc.encode(seq)
                    record(scheme, mode, [o.outage for o in trace], [o.covered for o in trace],
                           [o.bits for o in trace])
                else:
                    record(scheme, mode, sim.outage, sim.covered,
                           sim.sync_bits if mode == "sync" else sim.async_bits)
    return {"rows": rows, "traces": traces, "segments": segments}


def run_sweep(cfg: ExperimentConfig) -> dict:
    units = [(i, a) for i in range(cfg.sequences) for a in cfg.alphas]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_unit, [cfg] * len(units), *zip(*units)))
    else:
        results = [run_unit(cfg, i, a) for i, a in units]
    merged = {"rows": [], "traces": [], "segments": []}
    for r in results:
        for k in merged:
            merged[k].extend(r[k])
    return merged


def summarize(rows) -> list[dict]:
    """Mean over sequence draws for each (scheme, mode, alpha)."""
    groups: dict = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        groups.setdefault((r["scheme"], r["mode"], r["alpha"]), []).append(r)
    out = []
    for (scheme, mode, alpha), rs in groups.items():
        out.append({
            "scheme": scheme, "mode": mode, "alpha": alpha, "sequences": len(rs),
            "B_T": float(np.mean([r["B_T"] for r in rs])),
            "distortion": float(np.mean([r["distortion"] for r in rs])),
            "max_distortion": float(np.max([r["distortion"] for r in rs])),
            "bound": rs[0]["bound"],
        })
    return out


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def write_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def write_sweep(result: dict, cfg: ExperimentConfig, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "results.csv", out / "summary.csv", out / "segments.csv", out / "config.json"]
    write_csv(paths[0], result["rows"], RESULT_COLUMNS)
    write_csv(paths[1], summarize(result["rows"]),
              ["scheme", "mode", "alpha", "sequences", "B_T", "distortion", "max_distortion", "bound"])
    write_csv(paths[2], result["segments"],
              ["scheme", "mode", "alpha", "seed", "segment", "distortion", "B_T"])
    with open(paths[3], "w") as f:
        json.dump(asdict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")
    if cfg.traces:
        p = out / "traces.csv"
        with open(p, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["scheme", "mode", "alpha", "seed", "t", "cum_rate", "cum_distortion"])
            for scheme, mode, alpha, seed, rate, dist in result["traces"]:
                for t, (r, d) in enumerate(zip(rate, dist), start=1):
                    w.writerow([scheme, mode, alpha, seed, t, repr(float(r)), repr(float(d))])
        paths.append(p)
    return paths


def occ_rows_violating_bound(rows) -> list[dict]:
    """OCC rows whose distortion exceeds alpha + bound (should always be empty)."""
    return [r for r in rows
            if r["scheme"] == "occ" and r["status"] == "ok"
            and not r["distortion"] <= r["alpha"] + r["bound"]]

