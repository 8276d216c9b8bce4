import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eselection.errors import ParameterError
from eselection.fusion import (
    CODE_SOURCES,
    SOURCE_CODES,
    Source,
    Strategy,
    blend,
    decide,
    decide_batch,
    fuse,
    initial_decision,
    weights,
)
from eselection.savi import TestVerdict
from eselection.scores import ForecastTriple

NEUTRAL = TestVerdict(False, False, 1.0, 1.0)
FAVOUR_P = TestVerdict(False, True, 1.0, 0.01)
FAVOUR_Q = TestVerdict(True, False, 0.01, 1.0)


def test_weights_hand_value():
    assert weights(1.0, 0.025) == pytest.approx((0.9875, 0.0125), abs=1e-15)
    assert weights(1.0, 1.0) == (0.5, 0.5)


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.5, float("nan")])
def test_weights_reject_invalid_p_values(bad):
    with pytest.raises(ParameterError):
        weights(bad, 1.0)


@given(st.floats(1e-300, 1.0), st.floats(1e-300, 1.0))
def test_weights_are_complementary_and_swap(p, ps):
    wp, wq = weights(p, ps)
    assert 0.0 <= wp <= 1.0 and wp + wq == pytest.approx(1.0)
    assert weights(ps, p)[0] == pytest.approx(wq)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_rejections_override_strategy(strategy):
    prev = initial_decision(strategy, Source.Q)
    rng = np.random.default_rng(0)
    d = decide(FAVOUR_P, prev, strategy, rng, t=200)
    assert (d.source, d.w_p, d.basis_step) == (Source.P, 1.0, 104)
    d = decide(FAVOUR_Q, prev, strategy, rng, t=200)
    assert (d.source, d.w_q) == (Source.Q, 1.0)


def test_persistence_keeps_previous_arm():
    prev = decide(FAVOUR_Q, initial_decision("persistence"), "persistence", t=10, lag=1)
    d = decide(NEUTRAL, prev, "persistence", t=11, lag=1)
    assert d.source is Source.Q


def test_missing_verdict_is_warmup_with_previous_arm():
    prev = initial_decision("wavg", Source.Q)
    d = decide(None, prev, "wavg", t=5, lag=96)
    assert d.source is Source.WARMUP and d.w_q == 1.0 and d.basis_step == -91


def test_wavg_balanced_evidence_blends_evenly():
    d = decide(NEUTRAL, initial_decision("wavg"), "wavg", t=1, lag=0)
    assert d.source is Source.FUSED and d.w_p == 0.5
    tr = ForecastTriple(1, np.array([2.0]), np.array([4.0]), np.array([0.0]))
    np.testing.assert_array_equal(fuse(tr, d).value, [3.0])


def test_sampling_needs_generator_and_draws_once():
    with pytest.raises(ParameterError):
        decide(NEUTRAL, initial_decision("sampling"), "sampling", None, t=1)
    a, b = np.random.default_rng(4), np.random.default_rng(4)
    decide(FAVOUR_P, initial_decision("sampling"), "sampling", a, t=1)
    b.random()
    assert a.random() == b.random()


def test_double_rejection_picks_stronger_side(caplog):
    v = TestVerdict(True, True, 0.02, 0.001)
    with caplog.at_level(logging.WARNING):
        d = decide(v, initial_decision("wavg"), "wavg", t=100)
    assert d.source is Source.P and d.anomaly
    assert "both hypotheses rejected" in caplog.text


def test_fuse_rejects_step_mismatch():
    tr = ForecastTriple(2, np.zeros(1), np.zeros(1), np.zeros(1))
    with pytest.raises(ParameterError):
        fuse(tr, initial_decision("wavg", t=1))


def test_fused_selection_copies_forecast():
    tr = ForecastTriple(1, np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.zeros(2))
    d = decide(FAVOUR_P, initial_decision("persistence"), "persistence", t=1)
    out = fuse(tr, d).value
    np.testing.assert_array_equal(out, tr.p)
    out[0] = 99.0
    assert tr.p[0] == 1.0


vec = st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6)


@given(vec.flatmap(lambda p: st.tuples(st.just(p), st.lists(st.floats(-1e6, 1e6), min_size=len(p), max_size=len(p)))),
       st.floats(0.0, 1.0))
def test_blend_is_convex(pq, w):
    p, q = (np.array(v) for v in pq)
    out = blend(p, q, w)
    assert np.all(out >= np.minimum(p, q)) and np.all(out <= np.maximum(p, q))


def random_verdicts(rng, n):
    log_e = rng.normal(0, 3, n)
    log_e_star = rng.normal(0, 3, n)
    thr = np.log(40.0)
    p = np.exp(-np.maximum(log_e, 0))
    ps = np.exp(-np.maximum(log_e_star, 0))
    available = np.arange(n) >= rng.integers(0, n // 4)
    return log_e >= thr, log_e_star >= thr, p, ps, available


@pytest.mark.parametrize("strategy", list(Strategy))
@pytest.mark.parametrize("initial", [Source.P, Source.Q])
def test_batch_matches_sequential(strategy, initial):
    rng = np.random.default_rng(11)
    n = 400
    r_pq, r_qp, p, ps, avail = random_verdicts(rng, n)
    uniforms = np.random.default_rng(5).random(n)
    codes, w_p, both = decide_batch(r_pq, r_qp, p, ps, avail, strategy, uniforms, initial)

    seq_rng = np.random.default_rng(5)
    prev = initial_decision(strategy, initial, t=0, lag=0)
    for k in range(n):
        v = TestVerdict(bool(r_pq[k]), bool(r_qp[k]), float(p[k]), float(ps[k])) if avail[k] else None
        d = decide(v, prev, strategy, seq_rng if strategy is Strategy.SAMPLING else None, t=k, lag=0)
        assert CODE_SOURCES[int(codes[k])] is d.source, k
        assert w_p[k] == pytest.approx(d.w_p, abs=0), k
        assert both[k] == d.anomaly
        prev = d


def test_source_codes_round_trip():
    assert all(CODE_SOURCES[SOURCE_CODES[s]] is s for s in Source)
