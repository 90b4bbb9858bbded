import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adasiam.changedetect import CusumParams, CusumState, Signal, accumulate, classify, cusum_update, run_cusum


def straight_line(stream, nu, beta_high):
    """Independent transcription of the recursion: returns the first abrupt frame (1-based)."""
    g = 0.0
    total = 0.0
    n = 0
    for i, y in enumerate(stream, start=1):
        if n == 0:
            theta_prev = y
        else:
            theta_prev = total / n
        g = max(g - (y - theta_prev) - nu, 0.0)
        total += y
        n += 1
        if g > beta_high:
            return i
    return None


def step_stream(before=50, after=50, hi=0.9, lo=0.2):
    return [hi] * before + [lo] * after


def test_constant_stream_never_alarms():
    gs, sig = run_cusum([0.8] * 1000, CusumParams())
    assert max(gs) == 0.0
    assert set(sig) == {Signal.NONE}


def test_first_sample_sets_mean():
    st_ = accumulate(CusumState.reset(), CusumParams(nu=0.05), 0.37)
    assert st_.theta_hat == 0.37 and st_.g == 0.0 and st_.count == 1


@pytest.mark.parametrize("beta_high", [2.0, 3.0])
def test_step_alarm_matches_straight_line(beta_high):
    stream = step_stream()
    params = CusumParams(nu=0.05, beta_low=1.0, beta_high=beta_high)
    _, sig = run_cusum(stream, params)
    first = sig.index(Signal.ABRUPT) + 1
    assert first == straight_line(stream, 0.05, beta_high)


def test_step_alarm_value_by_hand():
    # after 50 samples at 0.9 the mean is 0.9; increments shrink as the mean falls
    stream = step_stream()
    params = CusumParams(nu=0.05, beta_low=1.0, beta_high=2.0)
    gs, sig = run_cusum(stream, params)
    g, total, n = 0.0, 45.0, 50
    for k in range(51, 60):
        g = max(g - (0.2 - total / n) - 0.05, 0.0)
        total += 0.2
        n += 1
        if g > 2.0:
            break
    assert sig[k - 1] is Signal.ABRUPT
    assert gs[k - 1] == pytest.approx(g, abs=1e-12)


def test_abrupt_resets_state():
    params = CusumParams(nu=0.0, beta_low=0.1, beta_high=0.5)
    state = CusumState.reset(0)
    for i, y in enumerate([0.9, 0.9, 0.2], start=1):
        state, sig = cusum_update(state, params, y, i)
    assert sig is Signal.ABRUPT
    assert state == CusumState(i0=3)


def test_gradual_keeps_statistic_by_default():
    params = CusumParams(nu=0.0, beta_low=0.5, beta_high=5.0)
    state = CusumState.reset()
    for y in [0.9, 0.9, 0.3]:
        state, sig = cusum_update(state, params, y)
    assert sig is Signal.GRADUAL and state.g == pytest.approx(0.6)
    reset = CusumParams(nu=0.0, beta_low=0.5, beta_high=5.0, reset_on_gradual=True)
    state = CusumState.reset()
    for y in [0.9, 0.9, 0.3]:
        state, sig = cusum_update(state, reset, y)
    assert sig is Signal.GRADUAL and state.g == 0.0 and state.theta_hat == pytest.approx(0.7)


def test_param_validation():
    with pytest.raises(ValueError):
        CusumParams(nu=-0.1)
    with pytest.raises(ValueError):
        CusumParams(beta_low=2.0, beta_high=1.0)
    with pytest.raises(ValueError):
        CusumParams(beta_low=0.0)
    CusumParams(beta_low=math.inf, beta_high=math.inf)


def test_infinite_thresholds_never_alarm():
    _, sig = run_cusum(step_stream(), CusumParams(beta_low=math.inf, beta_high=math.inf))
    assert set(sig) == {Signal.NONE}


def test_classify_levels():
    p = CusumParams(beta_low=1.0, beta_high=3.0)
    assert classify(1.0, p) is Signal.NONE
    assert classify(1.01, p) is Signal.GRADUAL
    assert classify(3.0, p) is Signal.GRADUAL
    assert classify(3.01, p) is Signal.ABRUPT


unit = st.floats(0.0, 1.0)


@given(st.lists(unit, min_size=1, max_size=200), st.floats(0, 0.2))
def test_g_never_negative_and_mean_tracks(stream, nu):
    params = CusumParams(nu=nu, beta_low=1.0, beta_high=3.0)
    state = CusumState.reset()
    since = []
    for i, y in enumerate(stream):
        prev = state
        state, sig = cusum_update(state, params, y, i)
        assert state.g >= 0.0
        if sig is Signal.ABRUPT:
            since = []
            assert state.g == 0.0 and state.count == 0
        else:
            since.append(y)
            assert state.theta_hat == pytest.approx(sum(since) / len(since), abs=1e-9)
        if prev.count and y > prev.theta_hat:
            assert state.g <= prev.g or sig is Signal.ABRUPT


@given(st.lists(unit, min_size=2, max_size=200), st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_threshold_monotonicity(stream, lo_a, lo_b):
    lo1, lo2 = sorted((lo_a, lo_b))
    hi = 3.0
    _, s1 = run_cusum(stream, CusumParams(beta_low=lo1, beta_high=hi))
    _, s2 = run_cusum(stream, CusumParams(beta_low=lo2, beta_high=hi))
    assert s1.count(Signal.GRADUAL) >= s2.count(Signal.GRADUAL)
    _, h1 = run_cusum(stream, CusumParams(beta_low=0.1, beta_high=2.1 + lo1))
    _, h2 = run_cusum(stream, CusumParams(beta_low=0.1, beta_high=2.1 + lo2))
    first = lambda s: s.index(Signal.ABRUPT) if Signal.ABRUPT in s else len(s)  # noqa: E731
    assert first(h1) <= first(h2)


def _alternating(n, dev, mean, down_first):
    d = min(dev, mean, 1.0 - mean)
    pair = [mean - d, mean + d] if down_first else [mean + d, mean - d]
    return d, [mean] + pair * n


@given(st.integers(1, 50), st.floats(0.0, 0.5), st.floats(0.0, 1.0))
def test_symmetric_alternation_is_bounded(n, dev, mean):
    # each downward step sits exactly d below the running mean, so g never exceeds d
    d, stream = _alternating(n, dev, mean, down_first=True)
    gs, _ = run_cusum(stream, CusumParams(nu=0.0, beta_low=10, beta_high=20))
    assert max(gs) <= d + 1e-9


@given(st.integers(1, 50), st.floats(0.01, 0.5), st.floats(0.0, 1.0))
def test_up_first_alternation_grows_harmonically(n, dev, mean):
    # starting upward, each down step overshoots the mean by d/(2k+2): g_max = d (1 + H_n / 2)
    d, stream = _alternating(n, dev, mean, down_first=False)
    gs, _ = run_cusum(stream, CusumParams(nu=0.0, beta_low=10, beta_high=20))
    harmonic = math.fsum(1.0 / k for k in range(1, n + 1))
    assert max(gs) == pytest.approx(d * (1 + harmonic / 2), abs=1e-9)


def test_determinism():
    rng = np.random.default_rng(0)
    stream = rng.random(500).tolist()
    assert run_cusum(stream, CusumParams()) == run_cusum(stream, CusumParams())
