"""File formats.

* events: CSV with header ``time,node``; times strictly increasing, nodes 0-based.
* model: JSON ``{"mu": [...], "beta": b, "A": [[...], ...]}`` (A row-major).
* clusters: JSON ``{"clusters": [{"name": s, "nodes": [...], "edges": [[p, q], ...]}, ...]}``.
* Fisher information: JSON ``{"edges": [[p, q], ...], "matrix": [[...], ...]}``.
* trajectory: CSV ``t,gamma_1,...,gamma_L,max_abs``.
* config and reports: JSON objects.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, OrderingError
from .model import EventStream, HawkesModel
from .scan import ClusterSet, DetectionResult
from .score import FisherInfo

EVENT_HEADER = ["time", "node"]


def read_events(path, n_nodes: int | None = None, horizon: float | None = None) -> EventStream:
    """Parse an event CSV; errors name the offending line."""
    path = Path(path)
    times, nodes = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EVENT_HEADER:
            raise ConfigurationError(f"{path}:1: expected header 'time,node', got {header!r}")
        prev = -math.inf
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ConfigurationError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                t = float(row[0])
                v = int(row[1])
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: cannot parse {row!r}") from None
            if not math.isfinite(t) or t < 0:
                raise ConfigurationError(f"{path}:{lineno}: time must be finite and >= 0")
            if v < 0:
                raise ConfigurationError(f"{path}:{lineno}: node must be >= 0")
            if t <= prev:
                raise OrderingError(f"{path}:{lineno}: time {t} does not exceed previous time {prev}")
            prev = t
            times.append(t)
            nodes.append(v)
    if n_nodes is None:
        n_nodes = max(nodes) + 1 if nodes else 1
    elif nodes and max(nodes) >= n_nodes:
        bad = int(np.argmax(np.asarray(nodes) >= n_nodes))
        raise ConfigurationError(f"{path}:{bad + 2}: node {nodes[bad]} outside [0, {n_nodes})")
    if horizon is None:
        horizon = times[-1] if times else 0.0
    return EventStream(np.array(times), np.array(nodes, dtype=np.int64), horizon, n_nodes)


def write_events(stream: EventStream, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        for t, v in zip(stream.times, stream.nodes):
            w.writerow([repr(float(t)), int(v)])


def read_json(path) -> dict:
    path = Path(path)
    try:
        with path.open() as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def write_json(obj, path) -> None:
    with Path(path).open("w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def load_model(path) -> HawkesModel:
    return HawkesModel.from_dict(read_json(path))


def save_model(model: HawkesModel, path) -> None:
    write_json(model.to_dict(), path)


def load_clusters(path) -> ClusterSet:
    return ClusterSet.from_dict(read_json(path))


def save_clusters(clusters: ClusterSet, path) -> None:
    write_json(clusters.to_dict(), path)


def load_fisher(path) -> FisherInfo:
    return FisherInfo.from_dict(read_json(path))


def save_fisher(fisher: FisherInfo, path) -> None:
    write_json(fisher.to_dict(), path)


def write_trajectory(result: DetectionResult, path) -> None:
    L = result.gammas.shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"gamma_{i + 1}" for i in range(L)] + ["max_abs"])
        for t, g, m in zip(result.times, result.gammas, result.max_abs):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in g] + [repr(float(m))])


def read_trajectory(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:-1]


def write_table(rows: list[dict], path) -> None:
    """CSV with the union of row keys as header, in first-seen order."""
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v
