import math

import numpy as np
import pytest

from hawkscan import (
    CheckpointError,
    ConfigurationError,
    EdgeSet,
    EventStream,
    FisherInfo,
    HawkesModel,
    OrderingError,
    ScoreState,
    fisher_closed_form,
    fisher_estimate,
    intensity,
    log_likelihood,
    simulate,
)
from hawkscan.fixtures import fig1


def brute_score(model, stream, edges, T):
    """O(K^2) evaluation of the score at ``model`` from its definition."""
    out = np.zeros(len(edges))
    beta = model.beta
    for e, (p, q) in enumerate(edges):
        total = 0.0
        for t, v in zip(stream.times, stream.nodes):
            if t > T:
                break
            if v == q:
                past = stream.times[(stream.times < t) & (stream.nodes == p)]
                total += np.exp(-beta * (t - past)).sum() / intensity(model, stream, q, t)
        src = stream.times[(stream.times <= T) & (stream.nodes == p)]
        total -= np.sum(1 - np.exp(-beta * (T - src))) / beta
        out[e] = total
    return out


def numeric_gradient(model, stream, edges, h=1e-6):
    out = np.zeros(len(edges))
    for e, (p, q) in enumerate(edges):
        up, dn = np.array(model.A), np.array(model.A)
        up[p, q] += h
        dn[p, q] = max(dn[p, q] - h, 0.0)
        step = up[p, q] - dn[p, q]
        out[e] = (log_likelihood(model.with_A(up), stream) - log_likelihood(model.with_A(dn), stream)) / step
    return out


EDGES = EdgeSet(((0, 1), (1, 1), (2, 1), (0, 2), (2, 0)))


@pytest.fixture(scope="module")
def excited():
    m = HawkesModel([0.6, 0.5, 0.8], [[0.1, 0.2, 0.0], [0.0, 0.2, 0.1], [0.1, 0.0, 0.2]], 1.7)
    return m, simulate(m, 80.0, 12)


def test_edge_set_rules():
    with pytest.raises(ConfigurationError):
        EdgeSet(((0, 1), (0, 1)))
    with pytest.raises(ConfigurationError):
        EdgeSet(((0, 5),)).check_nodes(3)
    u = EdgeSet(((0, 1),)).union(EdgeSet(((1, 2), (0, 1))))
    assert u.edges == ((0, 1), (1, 2))
    assert list(u.indices(EdgeSet(((1, 2),)))) == [1]


def test_score_matches_brute_force(excited):
    m, s = excited
    st = ScoreState(m, EDGES).ingest(s)
    assert np.allclose(st.cum_score(), brute_score(m, s, EDGES, s.horizon), rtol=1e-10, atol=1e-10)


def test_score_is_loglik_gradient(excited):
    m, s = excited
    st = ScoreState(m, EDGES).ingest(s)
    assert np.allclose(st.cum_score(), numeric_gradient(m, s, EDGES), rtol=1e-5, atol=1e-5)


def test_streaming_equals_batch(excited):
    m, s = excited
    batch = ScoreState(m, EDGES).ingest(s).cum_score()
    st = ScoreState(m, EDGES)
    for t, v in zip(s.times, s.nodes):
        st.ingest_event(float(t), int(v))
    assert np.allclose(st.cum_score(s.horizon), batch, rtol=0, atol=1e-10)


def test_score_read_between_events(excited):
    m, s = excited
    T = 0.5 * (s.times[10] + s.times[11])
    st = ScoreState(m, EDGES).ingest(s.between(0.0, T))
    assert np.allclose(st.cum_score(), brute_score(m, s, EDGES, T), atol=1e-10)


def test_checkpoints_hold_cumulative_scores(excited):
    m, s = excited
    st = ScoreState(m, EDGES, delta=10.0, window=80.0).ingest(s)
    for t in (10.0, 40.0, 70.0):
        expect = brute_score(m, s, EDGES, t)
        assert np.allclose(st.checkpoint(t), expect, atol=1e-10)
    win = st.window_score(70.0, 30.0)
    assert np.allclose(win, brute_score(m, s, EDGES, 70.0) - brute_score(m, s, EDGES, 40.0), atol=1e-10)


def test_checkpoint_errors(excited):
    m, s = excited
    st = ScoreState(m, EDGES, delta=10.0, window=20.0).ingest(s)
    with pytest.raises(CheckpointError):
        st.checkpoint(15.0)
    with pytest.raises(CheckpointError):
        st.checkpoint(10.0)  # evicted from the ring
    with pytest.raises(ConfigurationError):
        ScoreState(m, EDGES, delta=10.0, window=25.0)


def test_out_of_order_events_rejected():
    m = HawkesModel.poisson(2)
    st = ScoreState(m, EdgeSet(((0, 1),)))
    st.ingest_event(2.0, 0)
    with pytest.raises(OrderingError):
        st.ingest_event(1.0, 1)
    with pytest.raises(OrderingError):
        st.cum_score(1.0)


def test_fisher_closed_form_entries():
    m = HawkesModel([1.0, 2.0, 0.5], np.zeros((3, 3)), 2.0)
    edges = EdgeSet(((1, 1), (0, 1), (2, 1), (0, 2)))
    F = fisher_closed_form(m, edges).matrix
    b = 2.0
    assert F[0, 0] == pytest.approx(1 / (2 * b) + 2.0 / b**2)
    assert F[1, 1] == pytest.approx(1.0 / 2.0 * (1 / (2 * b) + 1.0 / b**2))
    assert F[1, 2] == pytest.approx(1.0 * 0.5 / (2.0 * b**2))
    assert F[0, 1] == pytest.approx(2.0 * 1.0 / (2.0 * b**2))
    assert F[0, 3] == 0.0 and F[1, 3] == 0.0


def test_fisher_block_diagonal_by_target():
    model0, clusters = fig1()
    F = fisher_closed_form(model0, clusters.union_edges)
    tg = clusters.union_edges.targets
    off = F.matrix[tg[:, None] != tg[None, :]]
    assert np.all(off == 0.0)
    est = fisher_estimate(simulate(model0, 200.0, 1), model0, clusters.union_edges)
    assert np.all(est.matrix[tg[:, None] != tg[None, :]] == 0.0)


def test_fisher_psd():
    model0, clusters = fig1()
    F = fisher_closed_form(model0, clusters.union_edges)
    assert np.linalg.eigvalsh(F.matrix).min() > 0
    assert F.min_eigenvalue_ratio() > 0


def test_fisher_estimate_converges_to_closed_form():
    m = HawkesModel.poisson(3, mu=1.0)
    edges = EdgeSet(((0, 1), (1, 1), (2, 1)))
    est = fisher_estimate(simulate(m, 20_000.0, 2), m, edges).matrix
    exact = fisher_closed_form(m, edges).matrix
    assert np.allclose(est, exact, rtol=0.05, atol=0.02)


def test_fisher_estimate_empty_stream_warns():
    m = HawkesModel.poisson(2)
    with pytest.warns(RuntimeWarning):
        F = fisher_estimate(EventStream([], [], 0.0, 2), m, EdgeSet(((0, 1),)))
    assert F.warning and np.all(F.matrix == 0)


def test_fisher_closed_form_needs_zero_A():
    with pytest.raises(ConfigurationError):
        fisher_closed_form(HawkesModel([1.0], [[0.1]], 1.0), EdgeSet(((0, 0),)))


def test_fisher_restrict_and_round_trip():
    model0, clusters = fig1()
    F = fisher_closed_form(model0, clusters.union_edges)
    sub = F.restrict(clusters[0].edges)
    assert sub.matrix.shape == (4, 4)
    back = FisherInfo.from_dict(F.to_dict())
    assert np.array_equal(back.matrix, F.matrix)
    with pytest.raises(ConfigurationError):
        F.restrict(EdgeSet(((0, 0),)))


def test_null_score_variance_per_unit_time():
    # Var[T^{-1/2} S] of a self edge at mu = beta = 1 is 1/2 + 1
    m = HawkesModel.poisson(1)
    edges = EdgeSet(((0, 0),))
    T = 400.0
    vals = [ScoreState(m, edges).ingest(simulate(m, T, 3, r)).cum_score()[0] / math.sqrt(T) for r in range(400)]
    assert abs(np.var(vals) - 1.5) < 0.3
    assert abs(np.mean(vals)) < 0.2


def test_unequal_rate_variance_follows_closed_form():
    # the two candidate formulas give 10 (source rate in the bracket) and 2 (target rate) here
    m = HawkesModel([2.0, 0.5], np.zeros((2, 2)), 1.0)
    edges = EdgeSet(((0, 1),))
    assert fisher_closed_form(m, edges).matrix[0, 0] == pytest.approx(10.0)
    T = 400.0
    vals = [ScoreState(m, edges).ingest(simulate(m, T, 17, r)).cum_score()[0] / math.sqrt(T) for r in range(1500)]
    assert abs(np.var(vals) - 10.0) < 1.2


def test_checkpoint_excludes_event_on_grid_time():
    s = EventStream(np.array([1.0, 2.0]), np.array([0, 0]), 2.0, 1)
    m = HawkesModel([1.0], [[0.0]], 1.0)
    st = ScoreState(m, EdgeSet(((0, 0),)), delta=0.5, window=1.5).ingest(s)
    assert st.checkpoint(2.0)[0] == pytest.approx(np.exp(-1.0) - 1.0)
