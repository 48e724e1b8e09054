"""Baselines and bound checks that share the codec's predictor and coder plumbing.

* Dropout-LLMZip: lossless coding under the full predictive distribution,
  except that a common-randomness coin drops each symbol with probability
  alpha; dropped symbols are reconstructed as the global argmax.
* Block conformal compression (BCC): hindsight search for the largest
  constant quantile level whose run meets the distortion target.
* Epsilon sweep: the asynchronous rate upper bound evaluated for a range of
  outage-symbol probabilities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coder import BACKENDS, OUTAGE, BitReader, build_one_to_one, decode_symbol, shannon_length
from .codec import Encoder, CodecConfig, StepOutcome, outage_reconstruction
from .conformal import ConformalConfig, FixedLevelState, PredictionSet, coverage_bound
from .predictor import Predictor
from .transport import ABSENT, SlotMessage

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 (Steele, Lea, Flood 2014).

    state += 0x9E3779B97F4A7C15; z = state;
    z = (z ^ z >> 30) * 0xBF58476D1CE4E5B9; z = (z ^ z >> 27) * 0x94D049BB133111EB;
    return z ^ z >> 31   (all mod 2**64).
    ``random()`` uses the top 53 bits: ``(next() >> 11) * 2**-53``.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next() >> 11) * 2.0 ** -53

    def randrange(self, n: int) -> int:
        # Rejection sampling keeps the draw exactly uniform.
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - (1 << 64) % n
        while True:
            v = self.next()
            if v < limit:
                return v % n


# -- Dropout-LLMZip -----------------------------------------------------------

@dataclass(frozen=True)
class DropoutConfig:
    alpha: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


def _full_table(probs: np.ndarray, alpha: float, mode: str, backend: str):
    dist = dict(enumerate(probs.tolist()))
    if mode == "sync":
        return build_one_to_one(dist)
    if alpha >= 1.0:
        return BACKENDS[backend]({OUTAGE: 1.0})
    if alpha > 0.0:
        dist = {s: p * (1.0 - alpha) for s, p in dist.items()}
        dist[OUTAGE] = alpha
    return BACKENDS[backend](dist)


def dropout_llmzip_run(sequence, predictor: Predictor, config: DropoutConfig,
                       mode: str = "sync", backend: str = "shannon") -> list[StepOutcome]:
    """Encode ``sequence``; ``covered`` in the returned trace means "not dropped"."""
    rng = SplitMix64(config.seed)
    alpha = config.alpha
    trace = []
    for t, x in enumerate(sequence, start=1):
        x = int(x)
        probs = predictor.predict()
        drop = rng.random() < alpha
        if drop:
            recon = int(np.argmax(probs))
            if mode == "sync":
                msg = ABSENT
            else:
                msg = SlotMessage(True, _full_table(probs, alpha, mode, backend).codewords[OUTAGE])
        else:
            recon = x
            msg = SlotMessage(True, _full_table(probs, alpha, mode, backend).codewords[x])
        predictor.feed(recon)
        trace.append(StepOutcome(t, x, recon, not drop, msg, math.nan, math.nan,
                                 predictor.alphabet_size))
    return trace


def dropout_llmzip_decode(messages, predictor: Predictor, config: DropoutConfig,
                          mode: str = "sync", backend: str = "shannon") -> list[int]:
    """Decoder twin of :func:`dropout_llmzip_run`, drawing the same coins.

    ``messages`` is a list of ``SlotMessage`` (sync) or ``(BitReader, T)`` (async).
    """
    rng = SplitMix64(config.seed)
    if mode == "async":
        reader, T = messages
        slots = [reader] * T
    else:
        slots = messages
    out = []
    for src in slots:
        probs = predictor.predict()
        drop = rng.random() < config.alpha
        if mode == "sync":
            if drop != (not src.present):
                raise ValueError("presence flag disagrees with the shared coin")
            if drop:
                sym = OUTAGE
            else:
                sym = decode_symbol(_full_table(probs, config.alpha, mode, backend),
                                    BitReader.from_bits(src.payload), src.bits)
        else:
            sym = decode_symbol(_full_table(probs, config.alpha, mode, backend), src)
            if (sym == OUTAGE) != drop:
                raise ValueError("outage symbol disagrees with the shared coin")
        recon = int(np.argmax(probs)) if sym == OUTAGE else sym
        predictor.feed(recon)
        out.append(recon)
    return out


# -- fast rate-only OCC simulation ---------------------------------------------

@dataclass
class SimResult:
    covered: np.ndarray
    outage: np.ndarray
    sync_bits: np.ndarray
    async_bits: np.ndarray
    truncated_prob: np.ndarray
    completed: bool = True

    @property
    def T(self) -> int:
        return len(self.covered)

    def rate(self, mode: str) -> float:
        bits = self.sync_bits if mode == "sync" else self.async_bits
        return float(bits.sum()) / self.T

    @property
    def distortion(self) -> float:
        return float(self.outage.sum()) / self.T


def simulate_occ(sequence, predictor: Predictor, state, alpha: float,
                 stop=None) -> SimResult:
    """Run the OCC set/reconstruction dynamics without building code tables.

    Reports both sync (one-to-one) and async (Shannon) payload lengths,
    which equal what :class:`~occ.codec.Encoder` emits for the same inputs.
    ``stop(t, outages)`` may return True to abandon the run early.
    """
    T = len(sequence)
    covered = np.zeros(T, dtype=bool)
    outage = np.zeros(T, dtype=bool)
    sync_bits = np.zeros(T, dtype=np.int64)
    async_bits = np.zeros(T, dtype=np.int64)
    mu_bar = np.full(T, math.nan)
    outage_len = shannon_length(alpha) if 0.0 < alpha < 1.0 else 0
    n_out = 0
    for i, x in enumerate(sequence):
        x = int(x)
        probs = predictor.predict()
        pset = PredictionSet.from_threshold(probs, state.threshold())
        mask = pset.mask
        if mask[x]:
            px = probs[x]
            rank = int(np.count_nonzero(probs > px) + np.count_nonzero(probs[:x] == px)) + 1
            sync_bits[i] = rank.bit_length() - 1
            m = float(px / probs[mask].sum())
            mu_bar[i] = m
            if 0.0 < alpha < 1.0:
                async_bits[i] = shannon_length(m * (1.0 - alpha))
            covered[i] = True
            recon = x
        else:
            recon = outage_reconstruction(probs, pset)
            async_bits[i] = outage_len if mask.any() else 0
            if recon != x:
                outage[i] = True
                n_out += 1
        state.update(float(probs[recon]), bool(covered[i]))
        predictor.feed(recon)
        if stop is not None and stop(i + 1, n_out):
            n = i + 1
            return SimResult(covered[:n], outage[:n], sync_bits[:n], async_bits[:n],
                             mu_bar[:n], completed=False)
    return SimResult(covered, outage, sync_bits, async_bits, mu_bar)


# -- block conformal compression -----------------------------------------------

@dataclass
class BccResult:
    gamma_star: float
    rate: float
    distortion: float
    feasible: bool
    sim: SimResult | None = None
    mode: str = "sync"
    evaluated: dict = field(default_factory=dict)  # gamma -> feasible

    def rate_for(self, mode: str) -> float:
        return self.sim.rate(mode) if self.sim is not None else math.nan


def bcc_candidate(sequence, predictor: Predictor, gamma: float, alpha: float,
                  anytime: bool = False, conformal: ConformalConfig | None = None,
                  early_stop: bool = True) -> tuple[bool, SimResult]:
    """Simulate one constant quantile level and test the distortion target.

    The terminal target is ``outages / T <= alpha``.  With ``anytime`` every
    prefix must also satisfy ``outages(t) / t <= alpha + bound(t)`` where the
    bound comes from ``conformal``.
    """
    T = len(sequence)
    if anytime and conformal is None:
        raise ValueError("anytime feasibility needs a conformal config for the bound")
    budget = alpha * T

    def violated(t, n_out):
        if n_out > budget:
            return True
        return anytime and n_out / t > alpha + coverage_bound(conformal, t)

    state = FixedLevelState(ConformalConfig(alpha=alpha, gamma1=gamma))
    sim = simulate_occ(sequence, predictor, state, alpha, stop=violated if early_stop else None)
    if not sim.completed:
        return False, sim
    if sim.outage.sum() > budget:
        return False, sim
    if anytime:
        t = np.arange(1, T + 1)
        ok = np.cumsum(sim.outage) / t <= alpha + np.array([coverage_bound(conformal, k) for k in t])
        if not ok.all():
            return False, sim
    return True, sim


def bcc_search(sequence, predictor: Predictor, alpha: float, mode: str = "sync",
               grid: int | np.ndarray = 512, anytime: bool = False,
               conformal: ConformalConfig | None = None) -> BccResult:
    """Largest grid level gamma whose constant-level run meets the target.

    Candidates are simulated from the largest down and the first feasible one
    is returned; every larger candidate has been simulated and rejected, so no
    monotonicity of feasibility in gamma is assumed.  ``predictor`` is forked
    for each candidate and left untouched.
    """
    gammas = np.linspace(0.0, 1.0, grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    evaluated = {}
    for g in sorted(gammas.tolist(), reverse=True):
        ok, sim = bcc_candidate(sequence, predictor.fork(), g, alpha, anytime, conformal)
        evaluated[g] = ok
        if ok:
            return BccResult(g, sim.rate(mode), sim.distortion, True, sim, mode, evaluated)
    g = float(min(gammas))
    _, sim = bcc_candidate(sequence, predictor.fork(), g, alpha, anytime, conformal,
                           early_stop=False)
    return BccResult(g, sim.rate(mode), sim.distortion, False, sim, mode, evaluated)


def bcc_encoder(config: CodecConfig, predictor: Predictor, gamma: float) -> Encoder:
    """Full codec encoder running at a constant quantile level."""
    state = FixedLevelState(ConformalConfig(alpha=config.alpha, gamma1=gamma))
    return Encoder(config, predictor, state)


# -- epsilon sweep -----------------------------------------------------------------

def async_rate_bound(covered, truncated_prob, eps: float) -> float:
    """Per-symbol upper bound on the async rate when ``e`` has probability ``eps``.

    ``1 - mean(log2 mu_bar on covered) - mean(log2(1-eps) on covered
    + log2(eps) on misses)``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    covered = np.asarray(covered, dtype=bool)
    T = len(covered)
    mu = np.asarray(truncated_prob, dtype=float)[covered]
    n_cov = int(covered.sum())
    total = np.log2(mu).sum() + n_cov * math.log2(1.0 - eps) + (T - n_cov) * math.log2(eps)
    return 1.0 - total / T


def epsilon_sweep(trace, grid) -> dict[float, float]:
    """Rate bound for each outage-symbol probability in ``grid``.

    ``trace`` is a list of :class:`StepOutcome` or a :class:`SimResult`.
    """
    if isinstance(trace, SimResult):
        covered, mu = trace.covered, trace.truncated_prob
    else:
        covered = np.array([o.covered for o in trace])
        mu = np.array([o.truncated_prob for o in trace])
    return {float(e): async_rate_bound(covered, mu, float(e)) for e in grid}
