"""Synthetic benchmark networks and the change cases used in the experiments.

Node ids are 0-based here; the labels in ``CASES`` use the 1-based numbering
of the 12-node benchmark network (so ``(4, 1)`` is node 3 -> node 0).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .model import ChangeScenario, HawkesModel
from .scan import Cluster, ClusterSet
from .score import EdgeSet

# (center, members) with 1-based labels; every cluster has edges center -> other member.
FIG1_CLUSTERS = (
    (4, (1, 3, 4, 5, 8)),
    (5, (2, 4, 5, 6, 9)),
    (8, (4, 7, 8, 9, 11)),
    (9, (5, 8, 9, 10, 12)),
)

# Post-change influence entries, 1-based (source, target) -> alpha.
CASES = {
    "i": {(4, 1): 0.2, (4, 3): 0.2, (4, 5): 0.2, (4, 8): 0.2},
    "ii": {(4, 1): 0.5, (4, 3): 0.5, (4, 5): 0.5, (4, 8): 0.5},
    "iii": {(4, 1): 0.6, (4, 3): 0.4, (4, 5): 0.5, (4, 8): 0.5},
    "iv": {(4, 1): 0.5, (4, 3): 0.5, (9, 5): 0.5, (9, 8): 0.5},
    "v": {(4, 5): 0.5, (4, 8): 0.5, (9, 8): 0.5, (9, 5): 0.5},
    "vi": {(4, 5): 0.5, (4, 8): 0.5},
    "vii": {(4, 5): 0.5},
}


def _star(name: str, center: int, members) -> Cluster:
    edges = EdgeSet(tuple((center, v) for v in members if v != center))
    return Cluster(name, tuple(members), edges)


def fig1(mu: float = 1.0, beta: float = 1.0) -> tuple[HawkesModel, ClusterSet]:
    """12 nodes, four overlapping 5-node clusters with 4 center-out edges each; ``A0 = 0``."""
    clusters = ClusterSet(
        tuple(_star(f"C{i + 1}", c - 1, [v - 1 for v in members]) for i, (c, members) in enumerate(FIG1_CLUSTERS))
    )
    return HawkesModel.poisson(12, mu=mu, beta=beta), clusters


def line20(n_clusters: int = 20, mu: float = 1.0, beta: float = 1.0) -> tuple[HawkesModel, ClusterSet]:
    """Clusters strung along a line of center nodes.

    Centers are nodes ``0 .. L-1``; each center i also owns two private leaves
    (``L + i`` and ``2L + i``).  Cluster i holds its center, the neighbouring
    centers and its two leaves, with edges from the center to the other
    members, so adjacent clusters share nodes but no edges.
    """
    L = n_clusters
    if L < 2:
        raise ConfigurationError("line network needs at least 2 clusters")
    out = []
    for i in range(L):
        members = [i, L + i, 2 * L + i]
        if i > 0:
            members.append(i - 1)
        if i < L - 1:
            members.append(i + 1)
        out.append(_star(f"C{i + 1}", i, members))
    return HawkesModel.poisson(3 * L, mu=mu, beta=beta), ClusterSet(tuple(out))


def line20_change(model: HawkesModel, clusters: ClusterSet, index: int | None = None, alpha: float = 0.2) -> tuple[HawkesModel, int]:
    """Post-change model with every edge of one cluster (default: the middle one) set to ``alpha``."""
    index = len(clusters) // 2 - 1 if index is None else index
    A = np.array(model.A)
    for p, q in clusters[index].edges:
        A[p, q] = alpha
    return model.with_A(A), index


def case_matrix(case: str, n_nodes: int = 12) -> np.ndarray:
    try:
        entries = CASES[case]
    except KeyError:
        raise ConfigurationError(f"unknown case {case!r}; expected one of {sorted(CASES)}") from None
    A = np.zeros((n_nodes, n_nodes))
    for (p, q), a in entries.items():
        A[p - 1, q - 1] = a
    return A


def case_scenario(case: str, tau_star: float, mu: float = 1.0, beta: float = 1.0) -> ChangeScenario:
    pre, _ = fig1(mu, beta)
    return ChangeScenario(pre, pre.with_A(case_matrix(case)), tau_star, name=case)


FIXTURES = {"fig1": fig1, "line20": line20}


def fixture(name: str) -> tuple[HawkesModel, ClusterSet]:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ConfigurationError(f"unknown fixture {name!r}; expected one of {sorted(FIXTURES)}") from None
