"""Streaming score statistics and Fisher information for the influence matrix.

The score of edge (p, q) at the pre-change parameter is

    S_T = sum_{k: u_k = q} D_p(t_k) / lambda_q(t_k) + (D_p(T) - N_p(T)) / beta

where ``D_p(t)`` is the exponentially decayed count of p-events strictly before
t.  The first sum is accumulated event by event; the compensator part is
rebuilt from ``D`` and ``N`` whenever a value is read.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CheckpointError, ConfigurationError, OrderingError
from .model import EventStream, HawkesModel

# Relative slack when matching a requested time to the checkpoint grid.
GRID_TOL = 1e-9


@dataclass(frozen=True)
class EdgeSet:
    """Ordered, duplicate-free list of directed pairs ``(p, q)``; the order fixes vector coordinates."""

    edges: tuple

    def __post_init__(self):
        edges = tuple((int(p), int(q)) for p, q in self.edges)
        if len(set(edges)) != len(edges):
            raise ConfigurationError("edge set contains duplicate pairs")
        if any(p < 0 or q < 0 for p, q in edges):
            raise ConfigurationError("edge endpoints must be >= 0")
        object.__setattr__(self, "edges", edges)

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def __getitem__(self, i):
        return self.edges[i]

    @property
    def sources(self) -> np.ndarray:
        return np.array([p for p, _ in self.edges], dtype=np.int64)

    @property
    def targets(self) -> np.ndarray:
        return np.array([q for _, q in self.edges], dtype=np.int64)

    def index(self, edge) -> int:
        try:
            return self._lookup[(int(edge[0]), int(edge[1]))]
        except KeyError:
            raise ConfigurationError(f"edge {tuple(edge)} is not in the edge set") from None

    def indices(self, other: "EdgeSet") -> np.ndarray:
        """Positions of ``other``'s edges inside this set."""
        return np.array([self.index(e) for e in other], dtype=np.int64)

    @property
    def _lookup(self) -> dict:
        cache = self.__dict__.get("_cache")
        if cache is None:
            cache = {e: i for i, e in enumerate(self.edges)}
            object.__setattr__(self, "_cache", cache)
        return cache

    def check_nodes(self, n_nodes: int) -> None:
        for p, q in self.edges:
            if p >= n_nodes or q >= n_nodes:
                raise ConfigurationError(f"edge ({p}, {q}) references a node outside [0, {n_nodes})")

    def union(self, *others: "EdgeSet") -> "EdgeSet":
        seen = dict.fromkeys(self.edges)
        for other in others:
            seen.update(dict.fromkeys(other.edges))
        return EdgeSet(tuple(seen))


def _target_csr(edges: EdgeSet, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Edges grouped by target node: edges into q are ``tgt_edges[tgt_ptr[q]:tgt_ptr[q+1]]``."""
    targets = edges.targets
    order = np.argsort(targets, kind="stable").astype(np.int64)
    counts = np.bincount(targets, minlength=n_nodes) if len(edges) else np.zeros(n_nodes, np.int64)
    ptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, order


@dataclass(frozen=True, eq=False)
class FisherInfo:
    """Per-unit-time asymptotic covariance of ``T^{-1/2} S_T`` over ``edges``."""

    edges: EdgeSet
    matrix: np.ndarray
    warning: str | None = field(default=None)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        n = len(self.edges)
        if mat.shape != (n, n):
            raise ConfigurationError(f"Fisher matrix must be {n}x{n}, got {mat.shape}")
        if not np.allclose(mat, mat.T, rtol=1e-10, atol=1e-12):
            raise ConfigurationError("Fisher matrix must be symmetric")
        mat = 0.5 * (mat + mat.T)
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    def restrict(self, edges: EdgeSet) -> "FisherInfo":
        idx = self._indices(edges)
        return FisherInfo(edges, self.matrix[np.ix_(idx, idx)], self.warning)

    def cross(self, rows: EdgeSet, cols: EdgeSet) -> np.ndarray:
        return self.matrix[np.ix_(self._indices(rows), self._indices(cols))].copy()

    def _indices(self, edges: EdgeSet) -> np.ndarray:
        missing = [e for e in edges if e not in self.edges._lookup]
        if missing:
            raise ConfigurationError(f"Fisher information does not cover edge {missing[0]}")
        return self.edges.indices(edges)

    def min_eigenvalue_ratio(self) -> float:
        """Smallest over largest eigenvalue (0 for the zero matrix)."""
        ev = np.linalg.eigvalsh(self.matrix)
        top = ev.max() if ev.size else 0.0
        return float(ev.min() / top) if top > 0 else 0.0

    def to_dict(self) -> dict:
        return {"edges": [list(e) for e in self.edges], "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FisherInfo":
        try:
            return cls(EdgeSet(tuple(tuple(e) for e in d["edges"])), np.asarray(d["matrix"], float))
        except KeyError as exc:
            raise ConfigurationError(f"Fisher file is missing key {exc}") from None


class ScoreState:
    """Single-writer streaming state for the cumulative scores of ``tracked`` edges.

    Parameters
    ----------
    model0 : HawkesModel
        Pre-change parameters at which the score is evaluated.
    tracked : EdgeSet
        Edges whose scores are accumulated.
    delta : float, optional
        Checkpoint spacing.  Checkpoint ``n`` stores the cumulative scores at
        ``n * delta`` (events at exactly that time are not yet included).
    window : float, optional
        Longest window that will be requested; sets the retention to
        ``ceil(window / delta) + 1`` snapshots.
    track_fisher : bool
        Also accumulate the plug-in Fisher information sums.
    """

    def __init__(
        self,
        model0: HawkesModel,
        tracked: EdgeSet,
        delta: float | None = None,
        window: float | None = None,
        track_fisher: bool = False,
    ):
        tracked.check_nodes(model0.n_nodes)
        self.model0 = model0
        self.tracked = tracked
        M, E = model0.n_nodes, len(tracked)
        self._mu = np.ascontiguousarray(model0.mu)
        self._A = np.ascontiguousarray(model0.A)
        self._has_exc = bool(model0.A.any())
        self._src = tracked.sources
        self._tgt_ptr, self._tgt_edges = _target_csr(tracked, M)
        self.D = np.zeros(M)
        self.N = np.zeros(M)
        self.jump = np.zeros(E)
        self.track_fisher = track_fisher
        self.fisher_sum = np.zeros((E, E) if track_fisher else (1, 1))
        self._clock = np.zeros(1)
        self._floor_hits = np.zeros(1, dtype=np.int64)
        if delta is None:
            if window is not None:
                raise ConfigurationError("a window needs a checkpoint interval delta")
            self.delta = 0.0
            retain = 1
        else:
            if not delta > 0:
                raise ConfigurationError("delta must be > 0")
            self.delta = float(delta)
            retain = 1
            if window is not None:
                steps = window / delta
                if window < delta or abs(steps - round(steps)) > GRID_TOL * max(1.0, steps):
                    raise ConfigurationError(f"window {window} must be a positive multiple of delta {delta}")
                retain = math.ceil(round(steps, 9)) + 1
        self.window = window
        self.ring = np.zeros((retain, E))
        self._ckpt_next = np.zeros(1, dtype=np.int64)
        self._no_weights = np.zeros((0, E))
        self._no_gam = np.zeros((0, 0))
        self._no_pos = np.zeros(1, dtype=np.int64)

    @property
    def last_time(self) -> float:
        return float(self._clock[0])

    @property
    def floor_hits(self) -> int:
        """Number of events whose intensity had to be floored."""
        return int(self._floor_hits[0])

    @property
    def decayed_source(self) -> np.ndarray:
        return self.D.copy()

    @property
    def n_checkpoints(self) -> int:
        return int(self._ckpt_next[0])

    def _advance(self, times, nodes, until, weights=None, window_steps=0, gam_out=None,
                 gam_pos=None, threshold=np.inf, two_sided=True, stop_on_alarm=False):
        if times.size and times[0] < self._clock[0]:
            raise OrderingError(f"event at t={times[0]} precedes state time {self._clock[0]}")
        if until < self._clock[0]:
            raise OrderingError(f"cannot move state back from {self._clock[0]} to {until}")
        if weights is None:
            weights, gam_out, gam_pos = self._no_weights, self._no_gam, self._no_pos
        return _kernels.score_advance(
            times, nodes, float(until),
            self._mu, self._A, self.model0.beta, self._has_exc,
            self._src, self._tgt_ptr, self._tgt_edges,
            self.D, self.N, self.jump, self.fisher_sum, self.track_fisher, self._clock, self._floor_hits,
            self.delta, self.ring, self._ckpt_next,
            weights, int(window_steps), gam_out, gam_pos, float(threshold), bool(two_sided), bool(stop_on_alarm),
        )

    def ingest_event(self, t: float, node: int) -> "ScoreState":
        """Apply one event; checkpoints up to ``t`` are emitted first."""
        if not 0 <= node < self.model0.n_nodes:
            raise ConfigurationError(f"node {node} out of range")
        self._advance(np.array([float(t)]), np.array([int(node)], dtype=np.int64), float(t))
        return self

    def ingest(self, stream: EventStream, until: float | None = None) -> "ScoreState":
        """Apply all events of ``stream`` and move the clock to ``until`` (default: its horizon)."""
        if stream.n_nodes != self.model0.n_nodes:
            raise ConfigurationError("stream and model disagree on the number of nodes")
        self._advance(stream.times, stream.nodes, stream.horizon if until is None else until)
        return self

    def advance_to(self, t: float) -> "ScoreState":
        """Move the clock to ``t`` without events, emitting checkpoints on the way."""
        self._advance(np.zeros(0), np.zeros(0, dtype=np.int64), float(t))
        return self

    def cum_score(self, T: float | None = None) -> np.ndarray:
        """Cumulative scores of the tracked edges at ``T >= last_time`` (default ``last_time``)."""
        T = self.last_time if T is None else float(T)
        if T < self.last_time:
            raise OrderingError(f"cannot read scores at {T} < state time {self.last_time}")
        D = self.D * math.exp(-self.model0.beta * (T - self.last_time))
        return self.jump + (D[self._src] - self.N[self._src]) / self.model0.beta

    def cum_fisher(self) -> np.ndarray:
        """Plug-in Fisher sums accumulated so far (not divided by time)."""
        if not self.track_fisher:
            raise ConfigurationError("state was created with track_fisher=False")
        return self.fisher_sum.copy()

    def _checkpoint_index(self, t: float) -> int:
        if self.delta <= 0:
            raise CheckpointError("state has no checkpoint interval")
        n = round(t / self.delta)
        if abs(n * self.delta - t) > GRID_TOL * max(1.0, abs(t)):
            raise CheckpointError(f"t={t} is not a multiple of delta={self.delta}")
        if n < 0 or n >= self._ckpt_next[0] or n < self._ckpt_next[0] - self.ring.shape[0]:
            raise CheckpointError(
                f"checkpoint at t={t} is not retained (available: "
                f"{max(0, self._ckpt_next[0] - self.ring.shape[0]) * self.delta} .. "
                f"{(self._ckpt_next[0] - 1) * self.delta})"
            )
        return int(n)

    def checkpoint(self, t: float) -> np.ndarray:
        """Cumulative score at grid time ``t`` from events strictly before ``t``."""
        n = self._checkpoint_index(t)
        return self.ring[n % self.ring.shape[0]].copy()

    def window_score(self, t: float, w: float, edges: EdgeSet | None = None) -> np.ndarray:
        """``S_t - S_{t-w}`` from retained checkpoints, ordered as ``edges``."""
        if w > t + GRID_TOL * max(1.0, t):
            raise CheckpointError(f"window {w} is longer than elapsed time {t}")
        diff = self.checkpoint(t) - self.checkpoint(max(t - w, 0.0))
        if edges is None:
            return diff
        return diff[self.tracked.indices(edges)]


def fisher_closed_form(model0: HawkesModel, edges: EdgeSet) -> FisherInfo:
    """Asymptotic score covariance at ``A = 0``.

    Diagonal: ``1/(2 beta) + mu_q / beta^2`` for a self edge (q, q) and
    ``(mu_p / mu_q) (1/(2 beta) + mu_p / beta^2)`` otherwise.  Two distinct
    edges (p, q), (p', q) into the same target have covariance
    ``mu_p mu_p' / (mu_q beta^2)``; edges into different targets are uncorrelated.
    """
    if model0.A.any():
        raise ConfigurationError("closed form requires A = 0; use fisher_estimate instead")
    edges.check_nodes(model0.n_nodes)
    mu, beta = model0.mu, model0.beta
    E = len(edges)
    mat = np.zeros((E, E))
    for a, (p, q) in enumerate(edges):
        for c, (p2, q2) in enumerate(edges):
            if q != q2:
                continue
            if a == c:
                if p == q:
                    mat[a, a] = 1.0 / (2 * beta) + mu[q] / beta**2
                else:
                    mat[a, a] = mu[p] / mu[q] * (1.0 / (2 * beta) + mu[p] / beta**2)
            else:
                mat[a, c] = mu[p] * mu[p2] / (mu[q] * beta**2)
    return FisherInfo(edges, mat)


def fisher_estimate(stream: EventStream, model: HawkesModel, edges: EdgeSet) -> FisherInfo:
    """Plug-in Fisher information from a training stream, divided by its horizon.

    Entry for edges (i, q), (p, q) is ``sum_{k: u_k = q} D_i(t_k) D_p(t_k) / lambda_q(t_k)^2``;
    edges into different targets get exactly zero.  An empty stream gives the
    zero matrix with ``warning`` set.
    """
    if len(stream) == 0 or stream.horizon <= 0:
        msg = "empty training stream; Fisher information is zero"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return FisherInfo(edges, np.zeros((len(edges), len(edges))), warning=msg)
    state = ScoreState(model, edges, track_fisher=True).ingest(stream)
    return FisherInfo(edges, state.cum_fisher() / stream.horizon)
