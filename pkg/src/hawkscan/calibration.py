"""False-alarm calibration through the Gaussian limit of the cluster statistics.

At a fixed time the vector of cluster statistics is approximately
``N(0, Sigma)``; at lags ``e * w`` its autocovariance is ``(1 - e)^+ Sigma``.
The instantaneous tail ``P(max_i Gamma_i >= b)`` is the sum over i of the
probability that ``Gamma_i`` is both the maximum and above ``b``, each term a
Gaussian orthant probability estimated by importance sampling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import ConfigurationError
from .model import HawkesModel
from .scan import Cluster, ClusterSet, inv_sqrt_psd
from .score import EdgeSet, FisherInfo, ScoreState
from .simulate import HawkesSampler, make_rng
from .tail import box_probability

# Off-diagonal correlations this close to 1 make the argmax non-unique.
MAX_CORRELATION = 1.0 - 1e-9
DEFAULT_REL_ERR = 0.05


@dataclass(frozen=True, eq=False)
class CalibrationModel:
    """Spatial correlation ``sigma`` of the cluster statistics and the window resolution ``w / delta``."""

    sigma: np.ndarray
    w_over_delta: int = 20
    two_sided: bool = True

    def __post_init__(self):
        S = np.array(self.sigma, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
            raise ConfigurationError("sigma must be a non-empty square matrix")
        if not np.allclose(S, S.T, atol=1e-10):
            raise ConfigurationError("sigma must be symmetric")
        if not np.allclose(np.diag(S), 1.0, atol=1e-10):
            raise ConfigurationError("sigma must have unit diagonal")
        off = S[~np.eye(S.shape[0], dtype=bool)]
        if off.size and off.max() >= MAX_CORRELATION:
            i, j = np.argwhere((S >= MAX_CORRELATION) & ~np.eye(S.shape[0], dtype=bool))[0]
            raise ConfigurationError(f"clusters {i} and {j} are perfectly correlated; drop the duplicate")
        ev = np.linalg.eigvalsh(S)
        if ev.min() < -1e-10 * max(1.0, ev.max()):
            raise ConfigurationError(f"sigma is not positive semidefinite (eigenvalue {ev.min():.3g})")
        if int(self.w_over_delta) < 1:
            raise ConfigurationError("w_over_delta must be >= 1")
        S = 0.5 * (S + S.T)
        S.flags.writeable = False
        object.__setattr__(self, "sigma", S)
        object.__setattr__(self, "w_over_delta", int(self.w_over_delta))

    @property
    def n_clusters(self) -> int:
        return self.sigma.shape[0]

    def temporal_covariance(self, lag_fraction: float) -> np.ndarray:
        """Covariance between the statistic vectors ``lag_fraction * w`` apart."""
        return max(0.0, 1.0 - abs(lag_fraction)) * self.sigma

    def to_dict(self) -> dict:
        return {"sigma": self.sigma.tolist(), "w_over_delta": self.w_over_delta, "two_sided": self.two_sided}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationModel":
        return cls(np.asarray(d["sigma"], float), int(d.get("w_over_delta", 20)), bool(d.get("two_sided", True)))


@dataclass(frozen=True, eq=False)
class TailEstimate:
    """``prob`` is the one-sided ``P(max_i Gamma_i >= b)``; ``alarm_prob`` applies the two-sided doubling."""

    prob: float
    rel_std_err: float
    n_samples: int
    per_term: np.ndarray
    per_term_se: np.ndarray
    two_sided: bool = True
    low_confidence: bool = False

    @property
    def alarm_prob(self) -> float:
        return min(1.0, 2.0 * self.prob) if self.two_sided else self.prob


def gamma_covariance(fisher: FisherInfo, clusters: ClusterSet, w_over_delta: int = 20, two_sided: bool = True) -> CalibrationModel:
    """Same-time correlation of the cluster statistics implied by the score covariance."""
    for e in clusters.union_edges:
        if e not in fisher.edges._lookup:
            raise ConfigurationError(f"Fisher information does not cover cluster edge {e}")
    L = len(clusters)
    vecs = []
    for c in clusters:
        vecs.append(inv_sqrt_psd(fisher.restrict(c.edges).matrix).sum(axis=0) / math.sqrt(c.size))
    S = np.eye(L)
    for i in range(L):
        for j in range(i + 1, L):
            cross = fisher.cross(clusters[i].edges, clusters[j].edges)
            S[i, j] = S[j, i] = vecs[i] @ cross @ vecs[j]
    return CalibrationModel(S, w_over_delta, two_sided)


def _term_covariances(sigma: np.ndarray) -> list[np.ndarray]:
    """Covariance of ``(Gamma_i, Gamma_i - Gamma_j for j != i)`` for each i."""
    L = sigma.shape[0]
    out = []
    for i in range(L):
        order = [i] + [j for j in range(L) if j != i]
        P = np.eye(L)[order]
        B = np.eye(L)
        B[1:, 0] = 1.0
        B[1:, 1:] *= -1.0
        T = B @ P
        out.append(T @ sigma @ T.T)
    return out


class _TailEngine:
    """Orthant decomposition with fixed uniforms so repeated calls share random numbers."""

    def __init__(self, cal: CalibrationModel, n: int, seed):
        self.cal = cal
        self.n = int(n)
        L = cal.n_clusters
        self.covs = _term_covariances(cal.sigma)
        self.U = [make_rng(seed, i).random((L, self.n)) for i in range(L)] if L > 1 else None

    def __call__(self, b: float, max_rel_err: float | None = DEFAULT_REL_ERR) -> TailEstimate:
        L = self.cal.n_clusters
        if L == 1:
            p = float(special.ndtr(-b))
            return TailEstimate(p, 0.0, 0, np.array([p]), np.zeros(1), self.cal.two_sided)
        lower = np.zeros(L)
        lower[0] = b
        upper = np.full(L, np.inf)
        terms, ses = np.zeros(L), np.zeros(L)
        for i in range(L):
            terms[i], ses[i] = box_probability(self.covs[i], lower, upper, self.U[i])
        prob = float(terms.sum())
        rel = float(np.sqrt(np.sum(ses**2)) / prob) if prob > 0 else 0.0
        low = max_rel_err is not None and rel > max_rel_err
        return TailEstimate(prob, rel, self.n * L, terms, ses, self.cal.two_sided, low)


def tail_probability(cal: CalibrationModel, b: float, n: int = 10_000, seed=0,
                     max_rel_err: float | None = DEFAULT_REL_ERR) -> TailEstimate:
    """Instantaneous tail ``P(max_i Gamma_i >= b)`` under ``N(0, sigma)``.

    The estimate is flagged ``low_confidence`` when its relative standard
    error exceeds ``max_rel_err``.
    """
    if not b > 0:
        raise ConfigurationError("b must be > 0")
    est = _TailEngine(cal, n, seed)(b, max_rel_err)
    if est.low_confidence:
        warnings.warn(f"tail estimate has relative error {est.rel_std_err:.3g}", RuntimeWarning, stacklevel=2)
    return est


def _bisect(f, target: float, lo: float, hi: float, rel_tol: float, max_iter: int = 200) -> float:
    """Root of the decreasing function ``f(b) = target`` on ``[lo, hi]``."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if abs(val - target) <= rel_tol * target or hi - lo < 1e-10:
            return mid
        if val > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def threshold_for_alpha(cal: CalibrationModel, alpha: float, n: int = 10_000, seed=0, rel_tol: float = 1e-3) -> float:
    """Threshold with instantaneous false-alarm probability ``alpha`` (bisection on ``[0, 10]``)."""
    if not 0 < alpha < 1:
        raise ConfigurationError("alpha must lie in (0, 1)")
    engine = _TailEngine(cal, n, seed)

    def alarm(b):
        if b <= 0:
            at_zero = 1.0 - stats.multivariate_normal(cov=cal.sigma, allow_singular=True).cdf(np.zeros(cal.n_clusters)) \
                if cal.n_clusters > 1 else 0.5
            return min(1.0, 2 * at_zero) if cal.two_sided else at_zero
        return engine(b, None).alarm_prob

    if alpha > alarm(0.0):
        raise ConfigurationError(f"alpha={alpha} exceeds the false-alarm probability at b=0")
    return _bisect(alarm, alpha, 0.0, 10.0, rel_tol)


@dataclass(frozen=True)
class ArlEstimate:
    """Per-update alarm rates; the implied average run length is ``delta / rate``."""

    lambda_est1: float
    lambda_est2: float
    se_est1: float
    delta: float
    m: int

    @property
    def arl_est1(self) -> float:
        return self.delta / self.lambda_est1 if self.lambda_est1 > 0 else math.inf

    @property
    def arl_est2(self) -> float:
        return self.delta / self.lambda_est2 if self.lambda_est2 > 0 else math.inf


def block_maxima(cal: CalibrationModel, m: int, n: int, seed, batch: int = 20_000) -> np.ndarray:
    """Per replicate, ``max_{n <= m, i} Gamma_{n, i}`` of the limiting Gaussian sequence.

    Each ``Gamma_n`` is the normalized moving sum of ``w / delta`` consecutive
    i.i.d. ``N(0, sigma)`` increments, which reproduces the triangular
    temporal correlation exactly.
    """
    K = cal.w_over_delta
    L = cal.n_clusters
    chol = np.linalg.cholesky(cal.sigma + 1e-12 * np.eye(L))
    out = np.empty(n)
    done = 0
    part = 0
    while done < n:
        size = min(batch, n - done)
        rng = make_rng(seed, part)
        xi = rng.standard_normal((size, m + K - 1, L)) @ chol.T
        csum = np.concatenate([np.zeros((size, 1, L)), np.cumsum(xi, axis=1)], axis=1)
        gam = (csum[:, K:] - csum[:, :-K]) / math.sqrt(K)
        out[done:done + size] = gam.max(axis=(1, 2))
        done += size
        part += 1
    return out


def _est1_from_maxima(maxima: np.ndarray, b: float, m: int, two_sided: bool) -> tuple[float, float]:
    p = float(np.mean(maxima >= b))
    se = math.sqrt(max(p * (1 - p), 0.0) / maxima.size)
    scale = 2.0 if two_sided else 1.0
    return scale * p / m, scale * se / m


def arl_rate_estimate(cal: CalibrationModel, b: float, m: int, delta: float, n: int = 100_000, seed=0,
                      n_tail: int = 10_000) -> ArlEstimate:
    """Poisson-clumping alarm rates per update.

    ``lambda_est2`` is the instantaneous alarm probability; ``lambda_est1``
    is the probability of an alarm within ``m`` consecutive updates divided by
    ``m``, from ``n`` simulated blocks.  For ``m = 1`` both coincide.
    """
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    if not delta > 0:
        raise ConfigurationError("delta must be > 0")
    est2 = tail_probability(cal, b, n_tail, seed, max_rel_err=None).alarm_prob
    if m == 1:
        return ArlEstimate(est2, est2, 0.0, delta, m)
    lam1, se1 = _est1_from_maxima(block_maxima(cal, m, n, seed), b, m, cal.two_sided)
    if lam1 > 0 and se1 / lam1 > DEFAULT_REL_ERR:
        warnings.warn(f"est1 has relative error {se1 / lam1:.3g}; increase n", RuntimeWarning, stacklevel=2)
    return ArlEstimate(lam1, est2, se1, delta, m)


@dataclass(frozen=True)
class ArlThresholds:
    target_arl: float
    b_est1: float
    b_est2: float
    m: int
    delta: float
    lambda_est1: float
    se_est1: float


def threshold_for_arl(cal: CalibrationModel, target_arl: float, m: int, delta: float, n: int = 100_000,
                      seed=0, n_tail: int = 10_000) -> ArlThresholds:
    """Thresholds whose est1 (and, for comparison, est2) rate gives ``delta / rate = target_arl``."""
    if not target_arl > delta:
        raise ConfigurationError("target ARL must exceed delta")
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    rate = delta / target_arl
    b2 = threshold_for_alpha(cal, rate, n_tail, seed)
    if m == 1:
        return ArlThresholds(target_arl, b2, b2, m, delta, rate, 0.0)
    maxima = np.sort(block_maxima(cal, m, n, seed))
    scale = 2.0 if cal.two_sided else 1.0
    # P(max >= b) = scale^{-1} m rate, read off the empirical quantile
    p = m * rate / scale
    if not 0 < p < 1:
        raise ConfigurationError(f"target ARL {target_arl} is unreachable with m={m}")
    k = int(round((1 - p) * n))
    k = min(max(k, 1), n - 1)
    b1 = float(0.5 * (maxima[k - 1] + maxima[k]))
    lam1, se1 = _est1_from_maxima(maxima, b1, m, cal.two_sided)
    return ArlThresholds(target_arl, b1, b2, m, delta, lam1, se1)


def fdr_rho(b: float, L: int) -> float:
    """Expected number of null exceedances ``2 L Phi_bar(b)``."""
    return 2.0 * L * float(special.ndtr(-b))


def fdr_estimate(kappa: int, b: float, L: int) -> float:
    """False discovery rate estimate ``rho / (kappa + 1)`` for ``kappa`` flagged clusters."""
    if kappa < 0:
        raise ConfigurationError("kappa must be >= 0")
    if not b > 0:
        raise ConfigurationError("b must be > 0")
    return fdr_rho(b, L) / (kappa + 1)


def min_window_for_power(pre: HawkesModel, post: HawkesModel, cluster: Cluster, fisher: FisherInfo, b: float,
                         n: int = 200, seed=0, delta: float = 10.0, max_doublings: int = 12) -> float:
    """Smallest multiple of ``delta`` whose post-change mean cluster statistic reaches ``b``.

    Post-change paths start with an empty history.  Windows double from
    ``delta`` until ``|E Gamma| >= b`` and the crossing is then located by
    bisection over the retained checkpoints.  Returns ``inf`` when no window up
    to ``delta * 2**max_doublings`` is long enough, or when nothing changed.
    """
    if pre.n_nodes != post.n_nodes or pre.beta != post.beta:
        raise ConfigurationError("pre and post models must share nodes and decay")
    if np.array_equal(pre.A, post.A) and np.array_equal(pre.mu, post.mu):
        return math.inf
    edges: EdgeSet = cluster.edges
    weights = inv_sqrt_psd(fisher.restrict(edges).matrix).sum(axis=0) / math.sqrt(len(edges))
    w_max = delta * 2**max_doublings
    samplers = [HawkesSampler(post, make_rng(seed, r)) for r in range(n)]
    states = [ScoreState(pre, edges, delta=delta, window=w_max) for _ in range(n)]

    def mean_gamma(w):
        vals = [weights @ s.window_score(w, w) for s in states]
        return abs(float(np.mean(vals))) / math.sqrt(w)

    prev = 0.0
    w = delta
    for _ in range(max_doublings + 1):
        for smp, st in zip(samplers, states):
            times, nodes = smp.advance(w)
            st._advance(times, nodes, w)
        if mean_gamma(w) >= b:
            lo, hi = int(round(prev / delta)), int(round(w / delta))
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if mean_gamma(mid * delta) >= b:
                    hi = mid
                else:
                    lo = mid
            return hi * delta
        prev = w
        w *= 2
    return math.inf
