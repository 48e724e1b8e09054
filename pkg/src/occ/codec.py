"""Online conformal compression encoder and decoder.

At each step both ends compute the predictor's distribution over the
reconstructed history and the same conformal prediction set.  A symbol inside
the set is coded losslessly; a symbol outside it is an outage and both ends
reconstruct the most likely symbol outside the set.

* sync: in-set symbols use a one-to-one rank code over the truncated
  distribution; an outage is signalled by sending nothing.
* async: in-set symbols and the outage symbol ``e`` share a prefix-free code
  over the truncated distribution scaled by ``1 - alpha`` plus ``e`` at
  ``alpha``.

The conformal update uses the true symbol's score on covered steps.  On
outage steps the decoder cannot know the true symbol, so both ends record
the score of the reconstructed symbol instead.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .coder import (
    BACKENDS,
    OUTAGE,
    BitReader,
    CodingError,
    build_one_to_one,
    decode_symbol,
)
from .conformal import ConformalConfig, ConformalState, PredictionSet, coverage_bound
from .predictor import Predictor, PredictorSpec
from .transport import ABSENT, ContainerHeader, SlotMessage


class DesyncError(Exception):
    """The decoder could not parse a message; its state no longer mirrors the encoder."""

    def __init__(self, t, msg):
        super().__init__(f"step {t}: {msg}")
        self.t = t


@dataclass(frozen=True)
class CodecConfig:
    mode: str
    conformal: ConformalConfig
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    coder_backend: str = "shannon"

    def __post_init__(self):
        if self.mode not in ("sync", "async"):
            raise ValueError(f"mode must be 'sync' or 'async', got {self.mode!r}")
        if self.coder_backend not in BACKENDS:
            raise ValueError(f"unknown coder backend {self.coder_backend!r}")
        if self.mode == "async" and not 0.0 < self.conformal.alpha < 1.0:
            raise ValueError("async mode needs 0 < alpha < 1 (alpha is the outage symbol's probability)")

    @property
    def alpha(self) -> float:
        return self.conformal.alpha

    def header(self, T: int, payload_bits: int) -> ContainerHeader:
        c = self.conformal
        return ContainerHeader(
            mode=self.mode, alpha=c.alpha, gamma1=c.gamma1, eta1=c.eta1, beta=c.beta,
            predictor_digest=self.predictor.digest(),
            alphabet_size=self.predictor.alphabet_size, T=T,
            payload_bits=payload_bits, backend=self.coder_backend)


def truncate(probs: np.ndarray, pset: PredictionSet) -> dict[int, float]:
    """Predictive distribution restricted to the set and renormalized."""
    members = np.flatnonzero(pset.mask)
    if len(members) == 0:
        raise ValueError("cannot truncate to an empty prediction set")
    vals = probs[members]
    vals = vals / vals.sum()
    return dict(zip(members.tolist(), vals.tolist()))


def augment(truncated: dict, alpha: float) -> dict:
    """Scale by ``1 - alpha`` and add the outage symbol with mass ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    out = {s: p * (1.0 - alpha) for s, p in truncated.items()}
    out[OUTAGE] = alpha
    return out


def outage_reconstruction(probs: np.ndarray, pset: PredictionSet) -> int:
    """Most likely symbol outside the set, lowest id on ties."""
    if pset.mask.all():
        raise ValueError("outage with a full prediction set")
    return int(np.argmax(np.where(pset.mask, -1.0, probs)))


@dataclass(frozen=True)
class StepOutcome:
    t: int
    symbol: int
    reconstructed: int
    covered: bool
    message: SlotMessage
    gamma: float
    threshold: float
    set_size: int
    truncated_prob: float = math.nan  # truncated probability of the true symbol

    @property
    def bits(self) -> int:
        return self.message.bits

    @property
    def outage(self) -> bool:
        return self.reconstructed != self.symbol


class _Endpoint:
    def __init__(self, config: CodecConfig, predictor: Predictor | None = None,
                 state: ConformalState | None = None):
        self.config = config
        self.predictor = predictor if predictor is not None else config.predictor.build()
        if self.predictor.alphabet_size != config.predictor.alphabet_size:
            raise ValueError("predictor alphabet differs from config")
        self.conformal = state if state is not None else ConformalState(config.conformal)
        self.reconstruction: list[int] = []

    @property
    def t(self) -> int:
        return self.conformal.t

    def _prepare(self):
        probs = self.predictor.predict()
        return probs, self.conformal.build_set(probs)

    def _table(self, probs, pset):
        if self.config.mode == "sync":
            return build_one_to_one(truncate(probs, pset))
        if not pset.mask.any():
            return BACKENDS[self.config.coder_backend]({OUTAGE: 1.0})
        dist = augment(truncate(probs, pset), self.config.alpha)
        return BACKENDS[self.config.coder_backend](dist)

    def _commit(self, probs, recon: int, covered: bool) -> None:
        self.conformal.update(float(probs[recon]), covered)
        self.predictor.feed(recon)
        self.reconstruction.append(recon)

    def snapshot(self) -> tuple:
        """Cheap state fingerprint; equal per step implies equal full state."""
        p = self.predictor
        return (self.conformal.snapshot(), len(p.history), p.history[-1] if p.history else None)

    def full_state(self) -> tuple:
        return (self.conformal.full_state(), tuple(self.predictor.history), tuple(self.reconstruction))


class Encoder(_Endpoint):
    def encode_step(self, x: int) -> StepOutcome:
        x = int(x)
        probs, pset = self._prepare()
        t, gamma = self.conformal.t, self.conformal.gamma
        covered = bool(pset.mask[x])
        mu_bar = math.nan
        if covered:
            recon = x
            table = self._table(probs, pset)
            msg = SlotMessage(True, table.codewords[x])
            mu_bar = float(probs[x] / probs[pset.mask].sum())
        else:
            recon = outage_reconstruction(probs, pset)
            if self.config.mode == "sync":
                msg = ABSENT
            else:
                msg = SlotMessage(True, self._table(probs, pset).codewords[OUTAGE])
        self._commit(probs, recon, covered)
        return StepOutcome(t, x, recon, covered, msg, gamma, pset.threshold,
                           int(pset.mask.sum()), mu_bar)

    def encode(self, symbols) -> list[StepOutcome]:
        return [self.encode_step(x) for x in symbols]


class Decoder(_Endpoint):
    def decode_step(self, source) -> int:
        """Decode one slot.

        ``source`` is a ``SlotMessage`` or, in async mode, a ``BitReader``
        positioned at the next codeword.
        """
        probs, pset = self._prepare()
        t = self.conformal.t
        try:
            if self.config.mode == "sync":
                sym = self._decode_sync(probs, pset, source)
            else:
                sym = self._decode_async(probs, pset, source)
            covered = sym != OUTAGE
            recon = sym if covered else outage_reconstruction(probs, pset)
        except (CodingError, ValueError) as exc:
            raise DesyncError(t, str(exc)) from exc
        self._commit(probs, recon, covered)
        return recon

    def _decode_sync(self, probs, pset, msg):
        if not isinstance(msg, SlotMessage):
            raise ValueError("sync decoding needs a SlotMessage")
        if not msg.present:
            return OUTAGE
        if not pset.mask.any():
            raise ValueError("message present although the prediction set is empty")
        table = self._table(probs, pset)
        return decode_symbol(table, BitReader.from_bits(msg.payload), msg.bits)

    def _decode_async(self, probs, pset, source):
        table = self._table(probs, pset)
        if isinstance(source, SlotMessage):
            reader = BitReader.from_bits(source.payload)
            sym = decode_symbol(table, reader)
            if reader.remaining:
                raise ValueError(f"{reader.remaining} unread bits in slot message")
            return sym
        return decode_symbol(table, source)

    def decode_messages(self, messages) -> list[int]:
        return [self.decode_step(m) for m in messages]

    def decode_bitstream(self, reader: BitReader, T: int) -> list[int]:
        out = [self.decode_step(reader) for _ in range(T)]
        if reader.remaining:
            raise DesyncError(self.t, f"{reader.remaining} trailing bits after last slot")
        return out


@dataclass(frozen=True)
class RunMetrics:
    T: int
    total_bits: int
    rate: float  # B_T, bits per symbol
    outages: int
    distortion: float
    miscoverages: int
    alpha: float
    bound: float  # coverage bound at T

    @property
    def miscoverage_rate(self) -> float:
        return self.miscoverages / self.T

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["miscoverage_rate"] = self.miscoverage_rate
        d["distortion_limit"] = self.alpha + self.bound
        return d


def run_metrics(trace, config: ConformalConfig) -> RunMetrics:
    trace = list(trace)
    if not trace:
        raise ValueError("empty trace")
    T = len(trace)
    bits = sum(o.bits for o in trace)
    outages = sum(o.outage for o in trace)
    mis = sum(not o.covered for o in trace)
    return RunMetrics(T, bits, bits / T, outages, outages / T, mis,
                      config.alpha, coverage_bound(config, T))


def prefix_metrics(trace, config: ConformalConfig) -> dict[str, np.ndarray]:
    """Cumulative metrics after every prefix ``T = 1..len(trace)``."""
    T = np.arange(1, len(trace) + 1)
    bits = np.cumsum([o.bits for o in trace])
    outages = np.cumsum([o.outage for o in trace])
    mis = np.cumsum([not o.covered for o in trace])
    bound = (1.0 + config.eta1) / (config.eta1 * T ** (1.0 - config.beta))
    return {
        "T": T,
        "bits": bits,
        "rate": bits / T,
        "outages": outages,
        "distortion": outages / T,
        "miscoverages": mis,
        "miscoverage_rate": mis / T,
        "bound": bound,
    }


def guarantee_violations(trace, config: ConformalConfig) -> list[str]:
    """Prefixes breaking the coverage band, the distortion bound or outages <= misses."""
    m = prefix_metrics(trace, config)
    alpha = config.alpha
    problems = []
    for name, bad in (
        ("coverage", np.abs(m["miscoverage_rate"] - alpha) > m["bound"]),
        ("distortion", m["distortion"] > alpha + m["bound"]),
        ("outages>misses", m["outages"] > m["miscoverages"]),
    ):
        idx = np.flatnonzero(bad)
        if len(idx):
            problems.append(f"{name} violated at {len(idx)} prefixes, first T={int(m['T'][idx[0]])}")
    return problems


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "gamma", "threshold", "set_size", "covered", "bits", "symbol", "reconstructed"])
        for o in trace:
            w.writerow([o.t, repr(o.gamma), repr(o.threshold), o.set_size, int(o.covered),
                        o.bits, o.symbol, o.reconstructed])


def encode_sequence(config: CodecConfig, symbols, predictor: Predictor | None = None):
    """Encode a whole sequence; returns ``(trace, encoder)``."""
    enc = Encoder(config, predictor)
    return enc.encode(symbols), enc
