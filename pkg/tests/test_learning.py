import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpb.learning import (
    VARIANCE_FLOOR,
    InsufficientData,
    LearningState,
    UninitializedPair,
    VarianceMode,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def known(lam, ys=(), batch=1):
    s = LearningState(1, 1, VarianceMode.KNOWN, lam=lam, batch_size=batch)
    s.record_many(0, 0, ys)
    return s


def ng(ys=(), batch=1):
    s = LearningState(1, 1, VarianceMode.NORMAL_GAMMA, batch_size=batch)
    s.record_many(0, 0, ys)
    return s


def test_known_variance_example():
    s = known(2.0, [3.0, 5.0])
    assert s.posterior_mean(0, 0) == 4.0
    assert s.posterior_variance(0, 0) == 2.0
    assert s.variance_estimate(0, 0) == 4.0


def test_normal_gamma_example():
    s = ng([1.0, 3.0])
    assert s.posterior_mean(0, 0) == 2.0
    assert s.variance_estimate(0, 0) == 1.0


def test_empty_state_errors():
    with pytest.raises(UninitializedPair):
        known(1.0).posterior_mean(0, 0)
    with pytest.raises(UninitializedPair):
        known(1.0).posterior_variance(0, 0)
    with pytest.raises(InsufficientData):
        ng([1.0]).variance_estimate(0, 0)


def test_single_observation():
    assert known(1.0, [7.0]).posterior_mean(0, 0) == 7.0


def test_batch_effective_variance():
    assert known(5.0, batch=10).variance_estimate(0, 0) == pytest.approx(2.5)


def test_constant_data_hits_floor():
    assert ng([2.0, 2.0, 2.0]).variance_estimate(0, 0) == VARIANCE_FLOOR


def test_batching_averages_raw_outputs():
    s = known(1.0, batch=2)
    s.record(0, 0, 1.0)
    assert s.counts[0, 0] == 0
    s.record(0, 0, 4.0)
    assert s.counts[0, 0] == 1
    assert s.posterior_mean(0, 0) == 2.5


def test_degenerate_posterior_draw():
    s = known(0.0, [3.0, 3.5])
    draw = s.sample_posterior_mean(0, 0, np.random.default_rng(0))
    assert abs(draw - 3.25) <= 6 * np.sqrt(VARIANCE_FLOOR)


def test_posterior_draw_distribution():
    s = known(2.0, [3.0, 5.0, 4.0, 4.0])
    draws = s.sample_posterior_mean(0, 0, np.random.default_rng(3), size=1_000_000)
    assert abs(draws.mean() - 4.0) <= 0.01
    assert abs(draws.var() - 1.0) <= 0.01


def test_posterior_draw_determinism():
    s = known(2.0, [3.0, 5.0])
    a = s.sample_posterior_mean(0, 0, np.random.default_rng(77))
    b = s.sample_posterior_mean(0, 0, np.random.default_rng(77))
    assert a == b


def test_ng_consistency():
    lam = 3.0
    s = ng(np.random.default_rng(8).normal(1.0, lam, size=100_000))
    assert abs(s.variance_estimate(0, 0) - lam**2) / lam**2 < 0.05


def test_known_mode_needs_lam_and_rejects_bad_batch():
    with pytest.raises(ValueError):
        LearningState(2, 2, VarianceMode.KNOWN)
    with pytest.raises(ValueError):
        LearningState(2, 2, VarianceMode.KNOWN, lam=1.0, batch_size=0)


def test_mode_parse():
    assert VarianceMode.parse("known") is VarianceMode.KNOWN
    assert VarianceMode.parse("ng") is VarianceMode.NORMAL_GAMMA
    with pytest.raises(ValueError):
        VarianceMode.parse("bogus")


def test_ready_and_copy():
    s = LearningState(2, 1, VarianceMode.NORMAL_GAMMA)
    s.record_many(0, 0, [1.0, 2.0])
    s.record(1, 0, 1.0)
    assert not s.ready()
    c = s.copy()
    s.record(1, 0, 3.0)
    assert s.ready() and not c.ready()
    assert c.counts[1, 0] == 1


def test_variance_matrix_matches_pointwise():
    rng = np.random.default_rng(4)
    s = LearningState(3, 2, VarianceMode.NORMAL_GAMMA)
    for i in range(3):
        for b in range(2):
            s.record_many(i, b, rng.normal(size=5))
    V = s.variance_matrix()
    for i in range(3):
        for b in range(2):
            assert V[i, b] == s.variance_estimate(i, b)


@settings(max_examples=80, deadline=None)
@given(st.lists(finite, min_size=2, max_size=60))
def test_sequential_equals_one_shot(ys):
    s = ng(ys)
    arr = np.array(ys)
    assert s.posterior_mean(0, 0) == pytest.approx(arr.mean(), rel=1e-10, abs=1e-10)
    expected = max(arr.var(), VARIANCE_FLOOR)
    assert s.variance_estimate(0, 0) == pytest.approx(expected, rel=1e-8, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=2, max_size=40), st.randoms(use_true_random=False))
def test_order_invariance(ys, rnd):
    shuffled = list(ys)
    rnd.shuffle(shuffled)
    a, b = ng(ys), ng(shuffled)
    assert a.posterior_mean(0, 0) == pytest.approx(b.posterior_mean(0, 0), rel=1e-9, abs=1e-9)
    assert a.variance_estimate(0, 0) == pytest.approx(b.variance_estimate(0, 0), rel=1e-7, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 30))
def test_recorded_count(batch, n):
    s = known(1.0, np.arange(batch * n, dtype=float), batch=batch)
    assert s.total == n
