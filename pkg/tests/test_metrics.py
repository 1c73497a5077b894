import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from circbayes.errors import InvalidDimensionError, InvalidParameterError, UndefinedMetricError
from circbayes.metrics import (MetricReport, Stopwatch, correlation, mean_square_error,
                               reconstruction_error, score, stopwatch)
from circbayes.signals import generate_spikes


def raw_moment_pearson(s, h):
    n = len(s)
    num = n * np.sum(s * h) - np.sum(s) * np.sum(h)
    den = np.sqrt(n * np.sum(s * s) - np.sum(s) ** 2) * np.sqrt(n * np.sum(h * h) - np.sum(h) ** 2)
    return num / den


def test_re_examples():
    s = np.array([3.0, 4.0])
    assert reconstruction_error(s, s) == 0.0
    assert reconstruction_error(s, [0.0, 0.0]) == 1.0
    assert reconstruction_error(s, [3.0, 0.0]) == 0.8


def test_re_zero_reference():
    with pytest.raises(UndefinedMetricError):
        reconstruction_error([0.0, 0.0], [1.0, 0.0])


def test_mse_examples():
    assert mean_square_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mean_square_error([0.0, 0.0], [1.0, 1.0]) == 1.0
    assert mean_square_error([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == 2 / 3


def test_length_mismatch():
    for f in (reconstruction_error, mean_square_error, correlation):
        with pytest.raises(InvalidDimensionError):
            f([1.0, 2.0, 3.0], [1.0, 2.0])


def test_correlation_examples():
    s = np.array([0.0, 1.0, -1.0, 0.0, 2.0])
    assert correlation(s, s) == 1.0
    assert correlation(s, -s) == -1.0
    assert correlation(s, 2 * s + 3) == 1.0


def test_correlation_undefined():
    assert correlation([1.0, 1.0, 1.0], [0.0, 1.0, 2.0]) is None
    assert correlation([0.0, 1.0, 2.0], [5.0, 5.0, 5.0]) is None
    with pytest.raises(InvalidDimensionError):
        correlation([1.0], [1.0])


def test_correlation_matches_raw_moment_formula(rng):
    for _ in range(200):
        s, h = rng.standard_normal(30), rng.standard_normal(30)
        assert correlation(s, h) == pytest.approx(raw_moment_pearson(s, h), abs=1e-12)


def test_metrics_accept_signal_objects():
    s = generate_spikes(0, 20, 3)
    assert reconstruction_error(s, s.values) == 0.0
    assert correlation(s, s) == 1.0


# magnitudes below 1e-100 would underflow the squared norms themselves
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False).filter(lambda x: x == 0 or abs(x) > 1e-100)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 50), elements=finite), st.data())
def test_re_mse_identity(s, data):
    h = data.draw(arrays(np.float64, s.shape, elements=finite))
    if not np.any(s):
        return
    lhs = reconstruction_error(s, h) ** 2 * (s @ s) / s.size
    rhs = mean_square_error(s, h)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-100, 100))
def test_correlation_affine(seed, alpha, beta):
    g = np.random.default_rng(seed)
    s, h = g.standard_normal(40), g.standard_normal(40)
    c = correlation(s, h)
    assert abs(correlation(s, alpha * h + beta) - c) <= 1e-12
    assert abs(correlation(s, -alpha * h + beta) + c) <= 1e-12
    assert -1.0 <= c <= 1.0


def test_stopwatch_nesting():
    with Stopwatch("total") as tp:
        with Stopwatch("sampling") as ts:
            sum(range(1000))
        with Stopwatch("recovery") as tr:
            sum(range(5000))
    assert tp.elapsed >= ts.elapsed and tp.elapsed >= tr.elapsed
    with stopwatch("recovery") as empty:
        pass
    assert empty.elapsed >= 0
    with pytest.raises(InvalidParameterError):
        Stopwatch("decoding")


def test_stopwatch_stability():
    def busy():
        x = 0
        for i in range(200_000):
            x += i
        return x

    busy()
    times = []
    for _ in range(20):
        with Stopwatch() as sw:
            busy()
        times.append(sw.elapsed)
    times = np.array(times)
    assert times.std() / times.mean() <= 0.5


def test_metric_report():
    s = np.array([0.0, 1.0, -1.0, 0.0])
    rep = score(s, s, 2, 0.001, 0.002, 0.004)
    assert (rep.re, rep.mse, rep.cc, rep.support_size) == (0.0, 0.0, 1.0, 2)
    with pytest.raises(InvalidParameterError):
        MetricReport(0.1, 0.1, None, 1, 0.01, 0.05, 0.02)
    with pytest.raises(InvalidParameterError):
        MetricReport(-0.1, 0.1, None, 1, 0.0, 0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        MetricReport(0.1, 0.1, 1.5, 1, 0.0, 0.0, 0.0)
