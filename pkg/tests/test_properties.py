"""Randomized property checks that need no benchmark runs."""

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from hawkscan import EdgeSet, EventStream, HawkesModel, ScoreState, fisher_closed_form, fisher_estimate
from hawkscan.calibration import CalibrationModel, tail_probability, threshold_for_alpha
from hawkscan.glr import GlrConfig, em_fit, glr_stat
from hawkscan.scan import cluster_stat

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def streams(draw, max_nodes=4, max_events=60):
    M = draw(st.integers(1, max_nodes))
    n = draw(st.integers(0, max_events))
    gaps = draw(st.lists(st.floats(1e-3, 3.0), min_size=n, max_size=n))
    nodes = draw(st.lists(st.integers(0, M - 1), min_size=n, max_size=n))
    times = np.cumsum(gaps) if n else np.zeros(0)
    horizon = float(times[-1] + draw(st.floats(0.0, 5.0))) if n else draw(st.floats(0.1, 10.0))
    return EventStream(times, nodes, horizon, M)


@st.composite
def models_for(draw, M):
    mu = draw(st.lists(st.floats(0.1, 3.0), min_size=M, max_size=M))
    A = np.array(draw(st.lists(st.floats(0.0, 0.5 / M), min_size=M * M, max_size=M * M))).reshape(M, M)
    beta = draw(st.floats(0.2, 5.0))
    return HawkesModel(mu, A, beta)


@st.composite
def stream_model_edges(draw):
    s = draw(streams())
    m = draw(models_for(s.n_nodes))
    pairs = [(p, q) for p in range(s.n_nodes) for q in range(s.n_nodes)]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=len(pairs), unique=True))
    return s, m, EdgeSet(tuple(chosen))


@SETTINGS
@given(stream_model_edges())
def test_streaming_score_equals_batch(data):
    s, m, edges = data
    batch = ScoreState(m, edges).ingest(s).cum_score()
    one = ScoreState(m, edges)
    for t, v in zip(s.times, s.nodes):
        one.ingest_event(float(t), int(v))
    assert np.allclose(one.cum_score(s.horizon), batch, rtol=0, atol=1e-10)


@SETTINGS
@given(stream_model_edges(), st.floats(0.1, 5.0))
def test_checkpoint_differences_equal_window_scores(data, delta):
    s, m, edges = data
    st_ = ScoreState(m, edges, delta=delta, window=delta * 3).ingest(s)
    n = st_.n_checkpoints
    if n >= 4:
        t = (n - 1) * delta
        keep = s.times < t
        past = EventStream(s.times[keep], s.nodes[keep], t, s.n_nodes)
        ref = ScoreState(m, edges).ingest(past).cum_score()
        assert np.allclose(st_.checkpoint(t), ref, atol=1e-9)


@SETTINGS
@given(st.integers(1, 5), st.floats(0.2, 4.0), st.data())
def test_closed_form_fisher_is_psd_and_block_diagonal(M, beta, data):
    mu = data.draw(st.lists(st.floats(0.1, 5.0), min_size=M, max_size=M))
    pairs = [(p, q) for p in range(M) for q in range(M)]
    edges = EdgeSet(tuple(data.draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True))))
    F = fisher_closed_form(HawkesModel(mu, np.zeros((M, M)), beta), edges).matrix
    assert np.linalg.eigvalsh(F).min() > -1e-12 * max(1.0, F.max())
    tg = edges.targets
    assert np.all(F[tg[:, None] != tg[None, :]] == 0.0)


@SETTINGS
@given(stream_model_edges())
def test_fisher_estimate_is_psd_and_block_diagonal(data):
    s, m, edges = data
    if len(s) == 0:
        return
    F = fisher_estimate(s, m, edges).matrix
    assert np.linalg.eigvalsh(F).min() > -1e-10 * max(1.0, np.abs(F).max())
    tg = edges.targets
    assert np.all(F[tg[:, None] != tg[None, :]] == 0.0)


@SETTINGS
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(-5, 5), st.floats(1.0, 500.0), st.data())
def test_cluster_stat_is_linear(score, c, w, data):
    R = len(score)
    X = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=R * R, max_size=R * R))).reshape(R, R)
    F = X @ X.T + np.eye(R)
    base = cluster_stat(score, F, w)
    assert cluster_stat(np.asarray(score) * c, F, w) == pytest.approx(c * base, abs=1e-9 * (1 + abs(c * base)))


@SETTINGS
@given(stream_model_edges())
def test_em_loglik_never_decreases(data):
    s, m, edges = data
    fit = em_fit(s, m.beta, edges, iters=40, base=m.with_A(np.zeros_like(m.A)), free_mu="all", tol=0.0)
    tr = fit.loglik_trace
    assert np.all(np.diff(tr) >= -1e-9 * np.maximum(1.0, np.abs(tr[:-1])))


@SETTINGS
@given(stream_model_edges(), st.sampled_from(["none", "targets", "all"]))
def test_glr_is_nonnegative(data, mode):
    s, m, edges = data
    m0 = m.with_A(np.zeros_like(m.A))
    win = EventStream(s.times, s.nodes, s.horizon, s.n_nodes)
    cfg = GlrConfig(window=s.horizon, eval_interval=s.horizon, edge_scope=edges, free_mu=mode, em_iters=20)
    assert glr_stat(win, m0, cfg) >= 0.0


@st.composite
def correlations(draw):
    L = draw(st.integers(1, 4))
    X = np.array(draw(st.lists(st.floats(-1, 1), min_size=L * (L + 1), max_size=L * (L + 1)))).reshape(L, L + 1)
    S = X @ X.T + 0.3 * np.eye(L)
    d = np.sqrt(np.diag(S))
    return S / np.outer(d, d)


@settings(max_examples=15, deadline=None)
@given(correlations(), st.floats(1.5, 3.5))
def test_tail_decreases_in_threshold(sigma, b):
    cal = CalibrationModel(sigma)
    lo = tail_probability(cal, b, n=2000, seed=1, max_rel_err=None)
    hi = tail_probability(cal, b + 0.3, n=2000, seed=1, max_rel_err=None)
    assert hi.prob < lo.prob


@settings(max_examples=10, deadline=None)
@given(correlations())
def test_threshold_increases_as_alpha_shrinks(sigma):
    cal = CalibrationModel(sigma)
    assert threshold_for_alpha(cal, 0.005, n=2000) > threshold_for_alpha(cal, 0.05, n=2000)
