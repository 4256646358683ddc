"""Exponential-kernel multivariate Hawkes processes: parameters, data, likelihood."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigurationError, NumericalError, OrderingError

# Exact ties are broken by pushing the later event forward by this much.
TIE_EPSILON = 1e-9


def spectral_norm(A: np.ndarray, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """Largest singular value of ``A`` by power iteration on ``A^T A``."""
    A = np.asarray(A, dtype=float)
    if not A.any():
        return 0.0
    AtA = A.T @ A
    v = np.full(A.shape[1], 1.0 / np.sqrt(A.shape[1]))
    sigma2 = 0.0
    for _ in range(max_iter):
        u = AtA @ v
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return 0.0
        v = u / norm
        if abs(norm - sigma2) <= tol * max(norm, 1.0):
            sigma2 = norm
            break
        sigma2 = norm
    return float(np.sqrt(sigma2))


def spectral_radius(A: np.ndarray) -> float:
    """Largest absolute eigenvalue of ``A``; the process is stationary iff it is < 1."""
    A = np.asarray(A, dtype=float)
    if not A.any():
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


@dataclass(frozen=True, eq=False)
class HawkesModel:
    """Base rates ``mu`` (M,), influence matrix ``A`` (M, M) and decay ``beta``.

    ``A[i, j]`` is the jump in node j's intensity caused by an event on node i,
    so node j's intensity is ``mu[j] + sum_{t_k < t} A[u_k, j] exp(-beta (t - t_k))``.
    """

    mu: np.ndarray
    A: np.ndarray
    beta: float

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape != (mu.size, mu.size):
            raise ConfigurationError(f"A must be {mu.size}x{mu.size}, got shape {A.shape}")
        if mu.size == 0:
            raise ConfigurationError("model needs at least one node")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ConfigurationError("base rates mu must be finite and > 0")
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise ConfigurationError("influence matrix A must be finite and >= 0")
        beta = float(self.beta)
        if not np.isfinite(beta) or beta <= 0:
            raise ConfigurationError("decay beta must be > 0")
        mu.flags.writeable = False
        A.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "beta", beta)

    @property
    def n_nodes(self) -> int:
        return self.mu.size

    @classmethod
    def poisson(cls, n_nodes: int, mu: float = 1.0, beta: float = 1.0) -> "HawkesModel":
        return cls(np.full(n_nodes, mu), np.zeros((n_nodes, n_nodes)), beta)

    def with_A(self, A) -> "HawkesModel":
        return HawkesModel(self.mu, A, self.beta)

    def stationary_rates(self) -> np.ndarray:
        """Long-run event rates ``(I - A^T)^{-1} mu``."""
        return np.linalg.solve(np.eye(self.n_nodes) - self.A.T, self.mu)

    def check_stationary(self) -> None:
        rho = spectral_radius(self.A)
        if rho >= 1.0:
            raise ConfigurationError(
                f"influence matrix has spectral radius {rho:.6g} >= 1; the process would explode"
            )

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "beta": self.beta, "A": self.A.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HawkesModel":
        try:
            return cls(np.asarray(d["mu"], float), np.asarray(d["A"], float), float(d["beta"]))
        except KeyError as exc:
            raise ConfigurationError(f"model is missing key {exc}") from None


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events ``(times[k], nodes[k])`` observed on ``[0, horizon]``."""

    times: np.ndarray
    nodes: np.ndarray
    horizon: float
    n_nodes: int

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        nodes = np.array(self.nodes, dtype=np.int64).reshape(-1)
        horizon = float(self.horizon)
        n_nodes = int(self.n_nodes)
        if times.shape != nodes.shape:
            raise ConfigurationError("times and nodes must have the same length")
        if n_nodes < 1:
            raise ConfigurationError("n_nodes must be >= 1")
        if horizon < 0 or not np.isfinite(horizon):
            raise ConfigurationError("horizon must be finite and >= 0")
        if times.size:
            if times[0] < 0:
                raise ConfigurationError("event times must be >= 0")
            if np.any(np.diff(times) <= 0):
                raise OrderingError("event times must be strictly increasing")
            if times[-1] > horizon:
                raise ConfigurationError(f"event at t={times[-1]} lies beyond horizon {horizon}")
            if nodes.min() < 0 or nodes.max() >= n_nodes:
                raise ConfigurationError(f"node indices must lie in [0, {n_nodes})")
        times.flags.writeable = False
        nodes.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "n_nodes", n_nodes)

    def __len__(self) -> int:
        return self.times.size

    @classmethod
    def from_unsorted(cls, times, nodes, horizon, n_nodes) -> "EventStream":
        """Sort events and break exact ties by shifting later copies by ``TIE_EPSILON``."""
        times = np.asarray(times, dtype=float)
        nodes = np.asarray(nodes, dtype=np.int64)
        order = np.lexsort((nodes, times))
        times, nodes = times[order].copy(), nodes[order]
        for k in range(1, times.size):
            if times[k] <= times[k - 1]:
                times[k] = times[k - 1] + TIE_EPSILON
        if times.size:
            horizon = max(float(horizon), float(times[-1]))
        return cls(times, nodes, horizon, n_nodes)

    def counts(self) -> np.ndarray:
        return np.bincount(self.nodes, minlength=self.n_nodes)

    def node_times(self, node: int) -> np.ndarray:
        return self.times[self.nodes == node]

    def between(self, start: float, end: float) -> "EventStream":
        """Events in ``[start, end]`` shifted so that ``start`` becomes time 0."""
        lo = np.searchsorted(self.times, start, side="left")
        hi = np.searchsorted(self.times, end, side="right")
        return EventStream(self.times[lo:hi] - start, self.nodes[lo:hi], end - start, self.n_nodes)


@dataclass(frozen=True, eq=False)
class ChangeScenario:
    """Influence matrix switches from ``pre.A`` to ``post.A`` at ``tau_star``."""

    pre: HawkesModel
    post: HawkesModel
    tau_star: float
    name: str = field(default="")

    def __post_init__(self):
        if self.pre.n_nodes != self.post.n_nodes:
            raise ConfigurationError("pre and post models must have the same number of nodes")
        if not np.array_equal(self.pre.mu, self.post.mu) or self.pre.beta != self.post.beta:
            raise ConfigurationError("only the influence matrix may change (mu and beta must match)")
        if self.tau_star < 0:
            raise ConfigurationError("tau_star must be >= 0")


def intensity(model: HawkesModel, stream: EventStream, node: int, t: float) -> float:
    """Conditional intensity of ``node`` at ``t``; events at exactly ``t`` do not count."""
    if not 0 <= node < model.n_nodes:
        raise ConfigurationError(f"node {node} out of range [0, {model.n_nodes})")
    if t < 0:
        raise ConfigurationError("t must be >= 0")
    k = np.searchsorted(stream.times, t, side="left")
    past_t = stream.times[:k]
    past_n = stream.nodes[:k]
    excitation = model.A[past_n, node] * np.exp(-model.beta * (t - past_t))
    return float(model.mu[node] + excitation.sum())


def _compensator_kernel_term(model: HawkesModel, stream: EventStream) -> float:
    """(1/beta) sum_m sum_k A[u_k, m] (exp(-beta (T - t_k)) - 1)."""
    if len(stream) == 0:
        return 0.0
    out_weight = model.A.sum(axis=1)[stream.nodes]
    return float(np.sum(out_weight * np.expm1(-model.beta * (stream.horizon - stream.times))) / model.beta)


def log_likelihood(model: HawkesModel, stream: EventStream) -> float:
    """Log-likelihood of ``stream`` on ``[0, horizon]``."""
    if model.n_nodes != stream.n_nodes:
        raise ConfigurationError("model and stream disagree on the number of nodes")
    lam = _kernels.event_intensities(stream.times, stream.nodes, model.mu, model.A, model.beta)
    if lam.size and lam.min() <= 0:
        k = int(np.argmin(lam))
        raise NumericalError(f"zero intensity at event {k} (t={stream.times[k]}, node={stream.nodes[k]})")
    return float(
        np.sum(np.log(lam)) - model.mu.sum() * stream.horizon + _compensator_kernel_term(model, stream)
    )
