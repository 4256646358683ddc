import math

import numpy as np
import pytest
from scipy import stats

from hawkscan import (
    ChangeScenario,
    ConfigurationError,
    EventStream,
    HawkesModel,
    OrderingError,
    intensity,
    log_likelihood,
    make_rng,
    simulate,
    simulate_with_change,
)
from hawkscan.model import TIE_EPSILON, spectral_norm, spectral_radius
from hawkscan.simulate import HawkesSampler


def brute_loglik(model, stream):
    ll = 0.0
    for t, v in zip(stream.times, stream.nodes):
        ll += math.log(intensity(model, stream, int(v), float(t)))
    T = stream.horizon
    comp = model.mu.sum() * T
    for t, v in zip(stream.times, stream.nodes):
        comp += model.A[v].sum() * (1 - math.exp(-model.beta * (T - t))) / model.beta
    return ll - comp


def test_model_validation():
    with pytest.raises(ConfigurationError):
        HawkesModel([1.0, 0.0], np.zeros((2, 2)), 1.0)
    with pytest.raises(ConfigurationError):
        HawkesModel([1.0], [[-0.1]], 1.0)
    with pytest.raises(ConfigurationError):
        HawkesModel([1.0], [[0.1]], 0.0)
    with pytest.raises(ConfigurationError):
        HawkesModel([1.0, 1.0], np.zeros((3, 3)), 1.0)


def test_model_arrays_are_read_only():
    m = HawkesModel.poisson(3)
    with pytest.raises(ValueError):
        m.A[0, 0] = 1.0


def test_stationarity_uses_spectral_radius():
    # nilpotent: norm above one, radius zero
    A = np.array([[0.0, 1.5], [0.0, 0.0]])
    assert spectral_norm(A) == pytest.approx(1.5, rel=1e-6)
    assert spectral_radius(A) == 0.0
    HawkesModel([1.0, 1.0], A, 1.0).check_stationary()
    with pytest.raises(ConfigurationError):
        HawkesModel([1.0], [[1.0]], 1.0).check_stationary()


def test_model_round_trip():
    m = HawkesModel([0.5, 1.5], [[0.1, 0.2], [0.0, 0.3]], 2.0)
    m2 = HawkesModel.from_dict(m.to_dict())
    assert np.array_equal(m.mu, m2.mu) and np.array_equal(m.A, m2.A) and m.beta == m2.beta
    with pytest.raises(ConfigurationError):
        HawkesModel.from_dict({"mu": [1.0]})


def test_stream_validation():
    with pytest.raises(OrderingError):
        EventStream([1.0, 1.0], [0, 0], 2.0, 1)
    with pytest.raises(ConfigurationError):
        EventStream([1.0], [3], 2.0, 2)
    with pytest.raises(ConfigurationError):
        EventStream([3.0], [0], 2.0, 1)


def test_from_unsorted_breaks_ties():
    s = EventStream.from_unsorted([2.0, 1.0, 1.0], [0, 1, 0], 2.0, 2)
    assert s.times[1] - s.times[0] == pytest.approx(TIE_EPSILON)
    assert list(s.nodes) == [0, 1, 0]


def test_between_shifts_times():
    s = EventStream([1.0, 2.0, 3.0], [0, 1, 0], 4.0, 2)
    sub = s.between(1.5, 3.0)
    assert np.allclose(sub.times, [0.5, 1.5]) and sub.horizon == 1.5


def test_intensity_excludes_simultaneous_event():
    m = HawkesModel([1.0], [[0.5]], 1.0)
    s = EventStream([1.0], [0], 2.0, 1)
    assert intensity(m, s, 0, 1.0) == 1.0
    assert intensity(m, s, 0, 2.0) == pytest.approx(1.0 + 0.5 * math.exp(-1.0))


def test_loglik_matches_brute_force():
    m = HawkesModel([0.4, 0.7, 0.3], [[0.2, 0.1, 0.0], [0.0, 0.3, 0.2], [0.1, 0.0, 0.1]], 1.3)
    s = simulate(m, 60.0, 3)
    assert len(s) > 20
    assert log_likelihood(m, s) == pytest.approx(brute_loglik(m, s), rel=1e-10)


def test_loglik_empty_stream():
    m = HawkesModel.poisson(2, mu=0.5)
    assert log_likelihood(m, EventStream([], [], 4.0, 2)) == pytest.approx(-4.0)


def test_simulation_is_reproducible_per_replicate():
    m = HawkesModel.poisson(3)
    a = simulate(m, 50.0, 7, 4)
    b = simulate(m, 50.0, 7, 4)
    c = simulate(m, 50.0, 7, 5)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.nodes, b.nodes)
    assert not np.array_equal(a.times[:5], c.times[:5])
    assert make_rng(1, (2, 3)).random() == make_rng(1, (2, 3)).random()


def test_chunked_sampling_respects_boundaries():
    m = HawkesModel([0.5, 0.5], [[0.3, 0.2], [0.1, 0.3]], 1.0)
    smp = HawkesSampler(m, make_rng(5))
    lo = 0.0
    total = 0
    for hi in (13.0, 77.5, 5000.0):
        t, _ = smp.advance(hi)
        assert np.all((t > lo) & (t <= hi)) and np.all(np.diff(t) > 0)
        total += t.size
        lo = hi
    rate = m.stationary_rates().sum()
    assert abs(total / 5000.0 - rate) < 0.1 * rate


def test_poisson_rate():
    s = simulate(HawkesModel.poisson(4, mu=1.0), 20_000.0, 1)
    rate = len(s) / (4 * 20_000.0)
    assert abs(rate - 1.0) < 0.02


def test_self_exciting_rate():
    # stationary rate mu / (1 - alpha) = 2
    s = simulate(HawkesModel([1.0], [[0.5]], 1.0), 20_000.0, 2)
    assert abs(len(s) / 20_000.0 - 2.0) < 0.06


def test_poisson_interarrivals_are_exponential():
    s = simulate(HawkesModel.poisson(1, mu=2.0), 5000.0, 9)
    gaps = np.diff(np.concatenate([[0.0], s.times]))
    assert stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 1e-3


def test_change_scenario_validation():
    pre = HawkesModel.poisson(2)
    with pytest.raises(ConfigurationError):
        ChangeScenario(pre, HawkesModel.poisson(2, mu=2.0), 1.0)
    with pytest.raises(ConfigurationError):
        simulate_with_change(ChangeScenario(pre, pre, 10.0), 5.0, 0)


def test_change_raises_rate_after_tau():
    pre = HawkesModel.poisson(1)
    scn = ChangeScenario(pre, pre.with_A([[0.5]]), 5000.0)
    s = simulate_with_change(scn, 10_000.0, 3)
    before = np.sum(s.times < 5000.0) / 5000.0
    after = np.sum(s.times >= 5000.0) / 5000.0
    assert abs(before - 1.0) < 0.05 and abs(after - 2.0) < 0.1


def test_change_prefix_matches_pre_change_simulation():
    pre = HawkesModel.poisson(2)
    scn = ChangeScenario(pre, pre.with_A([[0.4, 0.0], [0.0, 0.0]]), 30.0)
    s = simulate_with_change(scn, 60.0, 8)
    base = HawkesSampler(pre, make_rng(8)).advance(30.0)[0]
    assert np.array_equal(s.times[s.times <= 30.0], base)


def test_explosive_model_rejected():
    with pytest.raises(ConfigurationError):
        simulate(HawkesModel([1.0], [[1.2]], 1.0), 10.0, 0)
