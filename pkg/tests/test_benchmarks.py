import numpy as np
import pytest

from occ.benchmarks import (
    DropoutConfig,
    SplitMix64,
    async_rate_bound,
    bcc_candidate,
    bcc_encoder,
    bcc_search,
    dropout_llmzip_decode,
    dropout_llmzip_run,
    epsilon_sweep,
    simulate_occ,
)
from occ.coder import BitReader, BitWriter
from occ.codec import CodecConfig, Encoder
from occ.conformal import ConformalConfig, ConformalState, FixedLevelState
from occ.predictor import PredictorSpec, ReplayPredictor


def test_splitmix64_reference_outputs():
    r = SplitMix64(0)
    assert [r.next() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4,
                                           0x06C45D188009454F]
    r = SplitMix64(1234567)
    assert [r.next() for _ in range(3)] == [6457827717110365317, 3203168211198807973,
                                           9817491932198370423]


def test_splitmix64_helpers():
    r = SplitMix64(5)
    xs = [r.random() for _ in range(1000)]
    assert all(0.0 <= x < 1.0 for x in xs)
    assert abs(np.mean(xs) - 0.5) < 0.05
    assert sorted({SplitMix64(i).randrange(3) for i in range(50)}) == [0, 1, 2]
    with pytest.raises(ValueError):
        r.randrange(0)


def _text(heldout, n=600):
    return list(heldout[:n])


def test_dropout_alpha_zero_is_lossless(primed_model, heldout):
    seq = _text(heldout)
    for mode in ("sync", "async"):
        trace = dropout_llmzip_run(seq, primed_model.fork(), DropoutConfig(0.0), mode)
        assert all(o.covered and not o.outage for o in trace)
    lossless = Encoder(CodecConfig("sync", ConformalConfig(alpha=0.0)), primed_model.fork())
    # alpha = 0 keeps the full set forever, so OCC sync is the same rank code
    sync = dropout_llmzip_run(seq, primed_model.fork(), DropoutConfig(0.0), "sync")
    assert [o.bits for o in sync] == [o.bits for o in lossless.encode(seq)]


def test_dropout_alpha_one_sends_nothing(primed_model, heldout):
    seq = _text(heldout, 200)
    for mode in ("sync", "async"):
        trace = dropout_llmzip_run(seq, primed_model.fork(), DropoutConfig(1.0), mode)
        assert sum(o.bits for o in trace) == 0
        assert not any(o.covered for o in trace)


def test_dropout_is_deterministic_and_decodes(primed_model, heldout):
    seq = _text(heldout)
    cfg = DropoutConfig(0.25, seed=9)
    for mode in ("sync", "async"):
        a = dropout_llmzip_run(seq, primed_model.fork(), cfg, mode)
        b = dropout_llmzip_run(seq, primed_model.fork(), cfg, mode)
        assert a == b
        drops = sum(not o.covered for o in a)
        assert 0.15 < drops / len(seq) < 0.35
        if mode == "sync":
            src = [o.message for o in a]
        else:
            w = BitWriter()
            for o in a:
                w.write(o.message.payload)
            src = (BitReader(w.getvalue(), w.bit_length), len(seq))
        out = dropout_llmzip_decode(src, primed_model.fork(), cfg, mode)
        assert out == [o.reconstructed for o in a]
    other = dropout_llmzip_run(seq, primed_model.fork(), DropoutConfig(0.25, seed=10))
    assert [o.covered for o in other] != [o.covered for o in a]


@pytest.mark.parametrize("gamma", [0.05, 0.2, 0.45])
def test_fast_simulation_matches_encoder(primed_model, heldout, gamma):
    seq = list(heldout[5000:6500])
    alpha = 0.2
    for adaptive in (False, True):
        conf = ConformalConfig(alpha=alpha, gamma1=gamma, eta1=0.01)
        make = ConformalState if adaptive else FixedLevelState
        sim = simulate_occ(seq, primed_model.fork(), make(conf), alpha)
        for mode, bits in (("sync", sim.sync_bits), ("async", sim.async_bits)):
            enc = Encoder(CodecConfig(mode, conf), primed_model.fork(), make(conf))
            trace = enc.encode(seq)
            assert [o.bits for o in trace] == bits.tolist()
            assert [o.outage for o in trace] == sim.outage.tolist()
            assert [o.covered for o in trace] == sim.covered.tolist()


def _brute_bcc(seq, model, alpha, grid, mode):
    """Every candidate through the full encoder, no early stop."""
    best = None
    for g in grid:
        conf = ConformalConfig(alpha=alpha)
        trace = bcc_encoder(CodecConfig(mode, conf), model.fork(), g).encode(seq)
        d = sum(o.outage for o in trace) / len(seq)
        if d <= alpha and (best is None or g > best[0]):
            best = (g, sum(o.bits for o in trace) / len(seq))
    return best


@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.4])
def test_bcc_search_matches_exhaustive_oracle(primed_model, heldout, alpha):
    seq = list(heldout[8000:8300])
    grid = np.linspace(0, 1, 21)
    for mode in ("sync", "async"):
        res = bcc_search(seq, primed_model, alpha, mode, grid=grid)
        g, rate = _brute_bcc(seq, primed_model, alpha, grid, mode)
        assert res.feasible and res.gamma_star == g
        assert res.rate == pytest.approx(rate)
        assert res.distortion <= alpha
        assert all(not ok for gg, ok in res.evaluated.items() if gg > g)


def test_bcc_alpha_one_takes_the_top_level(primed_model, heldout):
    res = bcc_search(_text(heldout, 100), primed_model, 1.0, "sync", grid=11)
    assert res.feasible and res.gamma_star == 1.0
    # only the cold-start step (no scores yet, full set) is coded
    assert res.sim.covered.sum() == 1


def test_bcc_perfect_predictor_pays_nothing():
    seq = [i % 5 for i in range(60)]
    rows = np.full((60, 5), 1e-9)
    rows[np.arange(60), seq] = 1.0
    rows /= rows.sum(1, keepdims=True)
    pred = ReplayPredictor(rows)
    res = bcc_search(seq, pred, 0.1, "sync", grid=11)
    assert res.gamma_star == 1.0 and res.distortion == 0.0 and res.rate == 0.0


def test_bcc_candidate_anytime_is_stricter(primed_model, heldout):
    seq = list(heldout[9000:9400])
    conf = ConformalConfig(alpha=0.1, eta1=0.05)
    ok_terminal, sim = bcc_candidate(seq, primed_model.fork(), 0.12, 0.1, early_stop=False)
    ok_any, _ = bcc_candidate(seq, primed_model.fork(), 0.12, 0.1, anytime=True, conformal=conf)
    assert ok_any <= ok_terminal
    with pytest.raises(ValueError):
        bcc_candidate(seq, primed_model.fork(), 0.1, 0.1, anytime=True)


def test_bcc_infeasible_reports_lowest_level():
    # level 0 empties the set; the uniform predictor's argmax 0 then misses every 1
    seq = [0, 1] * 30
    pred = PredictorSpec("uniform", alphabet_size=2).build()
    res = bcc_search(seq, pred, 0.0, "sync", grid=np.array([1.0]))
    assert not res.feasible and res.gamma_star == 1.0
    assert res.distortion == 0.5 and res.sim.completed


def test_epsilon_sweep_minimizer_and_bound(primed_model, heldout):
    seq = list(heldout[10000:12000])
    alpha = 0.2
    conf = ConformalConfig(alpha=alpha, eta1=0.01)
    trace = Encoder(CodecConfig("async", conf), primed_model.fork()).encode(seq)
    miss = 1 - np.mean([o.covered for o in trace])
    grid = np.round(np.arange(0.01, 0.6, 0.01), 10)
    sweep = epsilon_sweep(trace, grid)
    best = min(sweep, key=sweep.get)
    # for fixed coverage the bound is a binary cross-entropy, minimized at the miss rate
    assert abs(best - miss) <= 0.01
    rate = sum(o.bits for o in trace) / len(seq)
    assert rate <= sweep[alpha]
    sim = simulate_occ(seq, primed_model.fork(), ConformalState(conf), alpha)
    assert epsilon_sweep(sim, [alpha])[alpha] == pytest.approx(sweep[alpha])
    with pytest.raises(ValueError):
        async_rate_bound([True], [1.0], 0.0)
