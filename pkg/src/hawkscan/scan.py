"""Cluster geometry, self-normalized cluster statistics and the scan stopping rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ConfigurationError
from .model import EventStream, HawkesModel
from .score import GRID_TOL, EdgeSet, FisherInfo, ScoreState

# Eigenvalues below EIG_FLOOR * lambda_max are raised to that value.
EIG_FLOOR = 1e-8


@dataclass(frozen=True)
class Cluster:
    name: str
    nodes: tuple
    edges: EdgeSet

    def __post_init__(self):
        nodes = tuple(sorted({int(v) for v in self.nodes}))
        edges = self.edges if isinstance(self.edges, EdgeSet) else EdgeSet(tuple(self.edges))
        if len(edges) == 0:
            raise ConfigurationError(f"cluster {self.name!r} has no edges")
        node_set = set(nodes)
        for p, q in edges:
            if p not in node_set or q not in node_set:
                raise ConfigurationError(f"edge ({p}, {q}) of cluster {self.name!r} leaves its node set")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)

    @property
    def size(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple

    def __post_init__(self):
        clusters = tuple(self.clusters)
        if not clusters:
            raise ConfigurationError("need at least one cluster")
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "union_edges", clusters[0].edges.union(*(c.edges for c in clusters[1:])))

    def __len__(self) -> int:
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def __getitem__(self, i) -> Cluster:
        return self.clusters[i]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.clusters]

    def check_nodes(self, n_nodes: int) -> None:
        self.union_edges.check_nodes(n_nodes)

    def to_dict(self) -> dict:
        return {
            "clusters": [
                {"name": c.name, "nodes": list(c.nodes), "edges": [list(e) for e in c.edges]} for c in self.clusters
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterSet":
        items = d["clusters"] if isinstance(d, dict) else d
        out = []
        for i, c in enumerate(items):
            try:
                out.append(Cluster(str(c["name"]), tuple(c["nodes"]), EdgeSet(tuple(tuple(e) for e in c["edges"]))))
            except KeyError as exc:
                raise ConfigurationError(f"cluster #{i} is missing key {exc}") from None
        return cls(tuple(out))


@dataclass(frozen=True)
class MonitorConfig:
    """Window ``w``, update interval ``delta``, threshold ``b``."""

    w: float
    delta: float
    b: float
    two_sided: bool = True

    def __post_init__(self):
        if not (0 < self.delta <= self.w):
            raise ConfigurationError("need 0 < delta <= w")
        steps = self.w / self.delta
        if abs(steps - round(steps)) > GRID_TOL * max(1.0, steps):
            raise ConfigurationError(f"w={self.w} must be an integer multiple of delta={self.delta}")
        if not self.b > 0:
            raise ConfigurationError("threshold b must be > 0")

    @property
    def window_steps(self) -> int:
        return int(round(self.w / self.delta))


@dataclass(frozen=True, eq=False)
class GammaSnapshot:
    t: float
    per_cluster: np.ndarray
    max_abs: float

    @classmethod
    def from_values(cls, t: float, values) -> "GammaSnapshot":
        values = np.asarray(values, dtype=float)
        return cls(float(t), values, float(np.max(np.abs(values))))


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Outcome of a monitoring pass.

    ``times`` and ``gammas`` hold the trajectory (one row per update);
    ``stop_time`` is ``None`` when the stream ended without an alarm.
    """

    stopped: bool
    stop_time: float | None
    times: np.ndarray
    gammas: np.ndarray
    flagged_clusters: tuple
    b: float
    two_sided: bool = True
    cluster_names: tuple = field(default=())

    @property
    def max_abs(self) -> np.ndarray:
        return np.abs(self.gammas).max(axis=1) if self.gammas.size else np.zeros(0)

    @property
    def max_stat(self) -> np.ndarray:
        """The value compared with ``b`` at each update."""
        if not self.gammas.size:
            return np.zeros(0)
        return self.max_abs if self.two_sided else self.gammas.max(axis=1)

    @property
    def trajectory(self) -> list[GammaSnapshot]:
        return [GammaSnapshot.from_values(t, g) for t, g in zip(self.times, self.gammas)]

    def __len__(self) -> int:
        return self.times.size


def inv_sqrt_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root with the eigenvalue floor."""
    mat = np.asarray(mat, dtype=float)
    ev, vec = np.linalg.eigh(0.5 * (mat + mat.T))
    top = ev.max() if ev.size else 0.0
    if not top > 0:
        raise CalibrationError(f"matrix has no positive eigenvalue (largest = {top:.3g})")
    if ev.min() < -EIG_FLOOR * top:
        raise CalibrationError(f"matrix is not PSD: eigenvalue {ev.min():.3g} vs largest {top:.3g}")
    ev = np.maximum(ev, EIG_FLOOR * top)
    return (vec / np.sqrt(ev)) @ vec.T


def _as_matrix(fisher) -> np.ndarray:
    return fisher.matrix if isinstance(fisher, FisherInfo) else np.asarray(fisher, dtype=float)


def cluster_stat(score, fisher, w: float) -> float:
    """``(w R)^{-1/2} 1' I^{-1/2} score`` for one cluster of ``R`` edges."""
    score = np.asarray(score, dtype=float)
    mat = _as_matrix(fisher)
    if mat.shape != (score.size, score.size):
        raise ConfigurationError(f"score has {score.size} entries but Fisher matrix is {mat.shape}")
    if not w > 0:
        raise ConfigurationError("window must be > 0")
    return float(inv_sqrt_psd(mat).sum(axis=0) @ score / math.sqrt(w * score.size))


def cluster_weights(clusters: ClusterSet, fisher: FisherInfo, w: float) -> np.ndarray:
    """Rows map a window score over ``clusters.union_edges`` to each cluster's statistic."""
    union = clusters.union_edges
    W = np.zeros((len(clusters), len(union)))
    for i, c in enumerate(clusters):
        sub = fisher.restrict(c.edges).matrix
        W[i, union.indices(c.edges)] = inv_sqrt_psd(sub).sum(axis=0) / math.sqrt(w * c.size)
    return W


def localize(snapshot: GammaSnapshot, b: float, two_sided: bool = True) -> tuple:
    """Indices of clusters whose statistic exceeds ``b``."""
    vals = np.abs(snapshot.per_cluster) if two_sided else snapshot.per_cluster
    return tuple(int(i) for i in np.flatnonzero(vals > b))


def scan_snapshot(state: ScoreState, clusters: ClusterSet, cfg: MonitorConfig, t: float, fisher: FisherInfo) -> GammaSnapshot:
    """Cluster statistics of the window ``[t - w, t]`` read from ``state``'s checkpoints."""
    diff = state.window_score(t, cfg.w, clusters.union_edges)
    W = cluster_weights(clusters, fisher, cfg.w)
    return GammaSnapshot.from_values(t, W @ diff)


class ScanMonitor:
    """Incremental scan monitor; feed events in time order, read alarms as they happen.

    Parameters
    ----------
    model0, clusters, fisher, cfg
        Pre-change model, scanning geometry, Fisher information covering the
        union of cluster edges, and window/threshold settings.
    stop_on_alarm : bool
        Stop consuming events at the first alarm.
    """

    def __init__(self, model0: HawkesModel, clusters: ClusterSet, fisher: FisherInfo, cfg: MonitorConfig,
                 stop_on_alarm: bool = True, weights: np.ndarray | None = None):
        clusters.check_nodes(model0.n_nodes)
        self.cfg = cfg
        self.clusters = clusters
        self.state = ScoreState(model0, clusters.union_edges, delta=cfg.delta, window=cfg.w)
        self.weights = np.ascontiguousarray(cluster_weights(clusters, fisher, cfg.w) if weights is None else weights)
        self.stop_on_alarm = stop_on_alarm
        self._times: list[np.ndarray] = []
        self._gams: list[np.ndarray] = []
        self.stopped = False
        self.stop_time: float | None = None

    def feed(self, times: np.ndarray, nodes: np.ndarray, until: float) -> bool:
        """Process events up to ``until``; returns True once an alarm has been raised."""
        if self.stopped and self.stop_on_alarm:
            return True
        times = np.ascontiguousarray(times, dtype=float)
        nodes = np.ascontiguousarray(nodes, dtype=np.int64)
        steps = self.cfg.window_steps
        start = 0
        while True:
            first = self.state.n_checkpoints
            last = int(math.floor(until / self.cfg.delta + GRID_TOL))
            cap = max(1, last - max(first, steps) + 1)
            gam = np.empty((cap, len(self.clusters)))
            pos = np.zeros(1, dtype=np.int64)
            consumed, status = self.state._advance(
                times[start:], nodes[start:], until, self.weights, steps, gam, pos,
                self.cfg.b, self.cfg.two_sided, self.stop_on_alarm,
            )
            n_new = int(pos[0])
            if n_new:
                k_last = self.state.n_checkpoints - 1
                t_grid = (np.arange(k_last - n_new + 1, k_last + 1)) * self.cfg.delta
                self._times.append(t_grid)
                self._gams.append(gam[:n_new])
            start += consumed
            if status == 1:
                self.stopped = True
                self.stop_time = float(self._times[-1][-1])
                return True
            if status == 0:
                return False

    def result(self) -> DetectionResult:
        L = len(self.clusters)
        times = np.concatenate(self._times) if self._times else np.zeros(0)
        gams = np.vstack(self._gams) if self._gams else np.zeros((0, L))
        flagged = ()
        if self.stopped:
            flagged = localize(GammaSnapshot.from_values(times[-1], gams[-1]), self.cfg.b, self.cfg.two_sided)
        return DetectionResult(
            stopped=self.stopped, stop_time=self.stop_time, times=times, gammas=gams,
            flagged_clusters=flagged, b=self.cfg.b, two_sided=self.cfg.two_sided,
            cluster_names=tuple(self.clusters.names),
        )


def run_monitor(stream: EventStream, model0: HawkesModel, clusters: ClusterSet, fisher: FisherInfo,
                cfg: MonitorConfig, stop_on_alarm: bool = True) -> DetectionResult:
    """Single pass over ``stream``; updates every ``delta`` from ``t = w`` on, stopping at ``Gamma_t > b``."""
    if stream.n_nodes != model0.n_nodes:
        raise ConfigurationError("stream and model disagree on the number of nodes")
    mon = ScanMonitor(model0, clusters, fisher, cfg, stop_on_alarm=stop_on_alarm)
    mon.feed(stream.times, stream.nodes, stream.horizon)
    return mon.result()
