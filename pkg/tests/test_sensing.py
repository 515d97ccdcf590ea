import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from silkstage import silk
from silkstage.errors import AttributionError, InvalidWindowError, OutOfOrderError
from silkstage.sensing import (REST_ESTIMATE, FirstMover, HeightMeasurement, RecordTracker, Relation,
                               TimingEstimate, classify_timing, cross_correlation, first_mover, lift_onset,
                               measure, update_record)

TICK = 0.02
T = np.arange(50) * TICK + 3.0


def sine(delay=0.0, freq=1.0):
    return np.sin(2 * math.pi * freq * (T - delay))


def m(t, h):
    return HeightMeasurement(t, h, h)


# ---------------------------------------------------------------- measure


@pytest.fixture(scope="module")
def rest_state():
    p = silk.SilkParams()
    return silk.init_rest(p, (-0.6, 1.0), (0.6, 1.0))


def test_measure_noiseless(rest_state):
    h = measure(rest_state, 0.0, np.random.default_rng(0))
    assert h.center_height == silk.center_height(rest_state)
    assert h.peak_height == silk.peak_height(rest_state)
    assert h.time == rest_state.time


def test_measure_noise_statistics(rest_state):
    rng = np.random.default_rng(11)
    draws = np.array([measure(rest_state, 0.002, rng).peak_height for _ in range(100_000)])
    assert np.std(draws) == pytest.approx(0.002, rel=0.05)
    assert np.mean(draws) == pytest.approx(silk.peak_height(rest_state), abs=1e-4)


def test_measure_deterministic(rest_state):
    a = [measure(rest_state, 0.002, r) for r in [np.random.default_rng(3)] for _ in range(5)]
    b = [measure(rest_state, 0.002, r) for r in [np.random.default_rng(3)] for _ in range(5)]
    assert a == b


# ---------------------------------------------------------------- records


def test_first_sample_is_record():
    _, broken, _ = update_record(RecordTracker(), m(0.0, 1.1))
    assert broken


def test_lower_sample_is_not_record():
    tr = RecordTracker()
    update_record(tr, m(0.0, 1.1))
    _, broken, margin = update_record(tr, m(1.0, 1.05))
    assert not broken and margin == 0.0


def test_record_margin():
    tr = RecordTracker()
    update_record(tr, m(0.0, 1.1))
    _, broken, margin = update_record(tr, m(1.0, 1.15))
    assert broken and margin == pytest.approx(0.05)


def test_record_expires_after_window():
    tr = RecordTracker()
    update_record(tr, m(0.0, 1.1))
    _, broken, _ = update_record(tr, m(180.0, 1.05))
    assert not broken
    _, broken, _ = update_record(tr, m(181.0, 1.07))
    assert broken


def test_equal_height_is_not_record():
    tr = RecordTracker()
    update_record(tr, m(0.0, 1.1))
    assert not update_record(tr, m(1.0, 1.1))[1]


def test_floor_blocks_noise_records():
    tr = RecordTracker(floor=0.97)
    assert not update_record(tr, m(0.0, 0.965))[1]
    assert update_record(tr, m(0.1, 0.98))[1]


def test_out_of_order():
    tr = RecordTracker()
    update_record(tr, m(2.0, 1.0))
    with pytest.raises(OutOfOrderError):
        update_record(tr, m(1.0, 1.0))


heights = st.lists(st.tuples(st.floats(0.0, 60.0), st.floats(0.5, 1.5)), min_size=1, max_size=60)


@given(heights, st.floats(1.0, 30.0))
def test_record_matches_brute_force_window(samples, window):
    samples = sorted(samples)
    tr = RecordTracker(window=window)
    seen = []
    for t, h in samples:
        prior = [x for s, x in seen if s >= t - window]
        _, broken, _ = update_record(tr, m(t, h))
        assert broken == (not prior or h > max(prior))
        seen.append((t, h))
        assert tr.current_record == max(x for s, x in seen if s >= t - window)


# ---------------------------------------------------------------- onset and first mover


def series(values, t0=0.0):
    return [(t0 + i * TICK, v) for i, v in enumerate(values)]


def test_onset_none_for_zero():
    assert lift_onset(series([0.0] * 100)) is None


def test_onset_step():
    vals = [0.0] * 100 + [0.2] * 50
    assert lift_onset(series(vals)) == pytest.approx(2.0, abs=TICK)


def test_onset_ignores_single_spike():
    vals = [0.0] * 20 + [1.0] + [0.0] * 20
    assert lift_onset(series(vals)) is None


@given(st.lists(st.floats(-0.5, 0.5), min_size=5, max_size=80), st.integers(0, 79), st.floats(0.06, 5.0))
def test_onset_invariant_to_isolated_spike(vals, where, spike):
    where = where % len(vals)
    # an isolated spike: both neighbours below threshold
    assume(all(vals[i] <= 0.05 for i in (where - 1, where + 1) if 0 <= i < len(vals)))
    spiked = list(vals)
    spiked[where] = spike
    assert lift_onset(series(spiked)) == lift_onset(series(vals[:where] + [0.0] + vals[where + 1:]))


@pytest.mark.parametrize("a, b, expected", [
    (2.00, 2.04, FirstMover.SHARED),
    (2.0, 2.5, FirstMover.ARM_A),
    (2.5, 2.0, FirstMover.ARM_B),
    (None, 2.0, FirstMover.ARM_B),
    (1.0, None, FirstMover.ARM_A),
    (2.0, 2.1, FirstMover.SHARED),
])
def test_first_mover(a, b, expected):
    assert first_mover(a, b, 0.1) is expected


def test_first_mover_needs_an_onset():
    with pytest.raises(AttributionError):
        first_mover(None, None)


# ---------------------------------------------------------------- timing


def reference_xcorr(a, b, max_lag):
    # independent route: slice pairs explicitly and use numpy dot products
    out = []
    for lag in range(-max_lag, max_lag + 1):
        x, y = (a[:len(a) - lag], b[lag:]) if lag >= 0 else (a[-lag:], b[:len(b) + lag])
        den = math.sqrt(np.dot(x, x) * np.dot(y, y))
        out.append(np.dot(x, y) / den if den > 0 else 0.0)
    return np.array(out)


@given(st.lists(st.floats(-2, 2), min_size=30, max_size=60), st.integers(0, 10_000))
def test_cross_correlation_matches_reference(a, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).standard_normal(a.size)
    assert np.allclose(cross_correlation(a, b, 25), reference_xcorr(a, b, 25), atol=1e-12)


def test_identical_windows_in_step():
    est = classify_timing(sine(), sine())
    assert est.relation is Relation.IN_STEP and est.lag == 0.0
    assert est.correlation == pytest.approx(1.0)


@pytest.mark.parametrize("delay, relation", [
    (0.0, Relation.IN_STEP),
    (0.08, Relation.SMALL_LAG),
    (0.2, Relation.GROWING_LAG),
])
def test_delayed_sines(delay, relation):
    est = classify_timing(sine(), sine(delay))
    assert est.relation is relation
    assert est.lag == pytest.approx(delay, abs=TICK)


def test_large_delay_is_split():
    # a 0.4 s delay of a 1 Hz sine is also a 0.1 s lead in anti-phase; the shorter lag wins the tie
    est = classify_timing(sine(), sine(0.4))
    assert est.relation is Relation.SPLIT
    assert est.lag == pytest.approx(-0.1, abs=TICK) and est.correlation < -0.9


def test_anti_phase_is_split():
    est = classify_timing(sine(), -sine())
    assert est.relation is Relation.SPLIT and est.correlation <= -0.9


def test_silence_is_rest():
    assert classify_timing(np.zeros(50), 0.001 * sine()) == REST_ESTIMATE


def test_growth_streak_promotes_to_growing_lag():
    prev = None
    lags = [0.0, 0.04, 0.08, 0.12]
    for lag in lags:
        prev = classify_timing(sine(), sine(lag), prev)
    # three consecutive increases of more than 0.02 s, none past the GrowingLag edge
    assert prev.growth_streak == 3 and prev.relation is Relation.GROWING_LAG


def test_window_mismatch():
    with pytest.raises(InvalidWindowError):
        classify_timing(np.ones(50), np.ones(49))


windows = st.tuples(st.integers(0, 10_000), st.floats(0.0, 0.45), st.floats(0.3, 3.0))


def noisy(seed, delay, freq):
    rng = np.random.default_rng(seed)
    return sine(0.0, freq) + 0.3 * rng.standard_normal(50), sine(delay, freq) + 0.3 * rng.standard_normal(50)


@given(windows)
def test_classifier_symmetry(w):
    a, b = noisy(*w)
    ab, ba = classify_timing(a, b), classify_timing(b, a)
    assert ba.lag == -ab.lag and ba.correlation == ab.correlation
    assert ba.relation is ab.relation


@given(windows, st.floats(0.05, 50.0))
def test_classifier_scale_invariance(w, scale):
    a, b = noisy(*w)
    base, scaled = classify_timing(a, b), classify_timing(scale * a, scale * b)
    assert (scaled.relation, scaled.lag) == (base.relation, base.lag)
    assert scaled.correlation == pytest.approx(base.correlation, abs=1e-9)


@given(windows)
def test_estimate_consistent_with_thresholds(w):
    est = classify_timing(*noisy(*w))
    lag = abs(est.lag)
    if est.relation is Relation.IN_STEP:
        assert lag <= 0.06 + 1e-9 and est.correlation >= 0.6
    elif est.relation is Relation.SPLIT:
        assert est.correlation < 0 or lag > 0.25
    elif est.relation is Relation.GROWING_LAG:
        assert 0.12 < lag <= 0.25 + 1e-9 or est.growth_streak >= 3
    else:
        assert lag <= 0.12 + 1e-9 and est.correlation >= 0
    assert -1 - 1e-12 <= est.correlation <= 1 + 1e-12
