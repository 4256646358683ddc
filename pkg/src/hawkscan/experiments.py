"""Experiment drivers: run lengths, detection delays, false-alarm and FDR studies, runtime.

Every driver is deterministic given its seed: replicate r always draws from
``make_rng(seed, r)`` (redraws use ``(r, attempt)``).  Result tables hold no
wall-clock values except the runtime study; timings of the other studies are
returned separately so the tables stay byte-identical across runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .calibration import fdr_rho, gamma_covariance, tail_probability, threshold_for_alpha, threshold_for_arl
from .errors import ConfigurationError
from .fixtures import CASES, case_scenario, fixture, line20, line20_change
from .glr import GlrConfig, GlrMonitor, calibrate_glr_threshold, glr_null_trajectory
from .model import ChangeScenario, HawkesModel
from .scan import ClusterSet, MonitorConfig, ScanMonitor, run_monitor
from .score import FisherInfo, fisher_closed_form
from .simulate import HawkesSampler, make_rng, simulate, simulate_with_change

KINDS = ("arl", "edd", "far", "fdr", "runtime")


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run.  ``params`` overrides the per-kind defaults listed in ``DEFAULTS``."""

    kind: str
    network: str = "fig1"
    cases: tuple = ("i", "ii", "iii", "vii")
    replicates: int = 100
    seed: int = 0
    output: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")
        fixture(self.network)
        for c in self.cases:
            if c not in CASES:
                raise ConfigurationError(f"unknown case {c!r}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigurationError(f"unknown parameters for {self.kind}: {sorted(unknown)}")

    def param(self, key):
        return self.params.get(key, DEFAULTS[self.kind][key])


DEFAULTS = {
    "arl": {"w": 200.0, "delta": 10.0, "targets": (10_000.0,), "ms": (50, 100), "n_blocks": 200_000,
            "simulate": True, "max_time": math.inf},
    "edd": {"w": 200.0, "delta": 10.0, "b": 3.4, "tau_star": 500.0, "max_delay": 3000.0, "carry_history": False,
            "methods": ("scan", "glrc"), "glr_threshold": None, "glrc_threshold": None, "target_arl": 10_000.0,
            "glr_null_horizon": 1_000_000.0},
    "far": {"w": 200.0, "delta": 10.0, "bs": (3.0, 2.8), "alpha": 0.01, "horizon": 100_000.0, "far_horizon": 800.0},
    "fdr": {"bs": (2.0, 2.4, 3.0), "T0": 350.0, "T1": 50.0, "w": 400.0, "alpha": 0.2},
    "runtime": {"w": 200.0, "delta": 10.0, "horizon": 50_000.0, "glr_eval": 10.0, "include_glrc": False},
}


def _setup(network: str, w: float, delta: float):
    model0, clusters = fixture(network)
    fisher = fisher_closed_form(model0, clusters.union_edges)
    cal = gamma_covariance(fisher, clusters, int(round(w / delta)))
    return model0, clusters, fisher, cal


def null_run_lengths(model0: HawkesModel, clusters: ClusterSet, fisher: FisherInfo, cfg: MonitorConfig, n_rep: int,
                     seed, max_time: float = math.inf, chunk: float = 2000.0) -> np.ndarray:
    """Stopping times on independent null paths; ``inf`` marks runs censored at ``max_time``."""
    out = np.full(n_rep, math.inf)
    for r in range(n_rep):
        sampler = HawkesSampler(model0, make_rng(seed, r))
        mon = ScanMonitor(model0, clusters, fisher, cfg)
        t = 0.0
        while t < max_time:
            t = min(max_time, t + chunk)
            times, nodes = sampler.advance(t)
            if mon.feed(times, nodes, t):
                out[r] = mon.stop_time
                break
    return out


def _first_alarm(method: str, stream, model0, clusters, fisher, cfg: MonitorConfig, glr_cfg: GlrConfig | None):
    if method == "scan":
        return run_monitor(stream, model0, clusters, fisher, cfg)
    if method == "glr":
        return GlrMonitor(model0, replace(glr_cfg, edge_scope=clusters.union_edges)).run(stream)
    if method == "glrc":
        return GlrMonitor(model0, glr_cfg, clusters).run(stream)
    raise ConfigurationError(f"unknown method {method!r}")


@dataclass(frozen=True)
class DelayStudy:
    delays: np.ndarray
    discarded: int
    censored: int

    @property
    def edd(self) -> float:
        finite = self.delays[np.isfinite(self.delays)]
        return float(finite.mean()) if finite.size else math.inf

    @property
    def se(self) -> float:
        finite = self.delays[np.isfinite(self.delays)]
        return float(finite.std(ddof=1) / math.sqrt(finite.size)) if finite.size > 1 else math.nan


def detection_delays(scn: ChangeScenario, clusters: ClusterSet, fisher: FisherInfo, cfg: MonitorConfig, n_rep: int,
                     seed, method: str = "scan", glr_cfg: GlrConfig | None = None, max_delay: float = 3000.0,
                     carry_history: bool = False, max_redraws: int = 1000) -> DelayStudy:
    """Delays ``T_b - tau*`` given no alarm up to ``tau*``; paths with an earlier alarm are redrawn."""
    delays = np.full(n_rep, math.inf)
    discarded = 0
    censored = 0
    horizon = scn.tau_star + max_delay
    for r in range(n_rep):
        for attempt in range(max_redraws):
            stream = simulate_with_change(scn, horizon, seed, (r, attempt), carry_history)
            res = _first_alarm(method, stream, scn.pre, clusters, fisher, cfg, glr_cfg)
            if res.stopped and res.stop_time <= scn.tau_star:
                discarded += 1
                continue
            if res.stopped:
                delays[r] = res.stop_time - scn.tau_star
            else:
                censored += 1
            break
        else:
            raise ConfigurationError(f"replicate {r}: every path alarmed before the change")
    return DelayStudy(delays, discarded, censored)


def exceedance_frequencies(model0, clusters, fisher, w: float, delta: float, bs, horizon: float, n_paths: int, seed):
    """Fraction of null updates with ``Gamma_t > b`` for each b, pooled over ``n_paths`` paths."""
    cfg = MonitorConfig(w, delta, 1e300)
    maxima = []
    for r in range(n_paths):
        stream = simulate(model0, horizon, seed, r)
        maxima.append(run_monitor(stream, model0, clusters, fisher, cfg).max_abs)
    maxima = np.concatenate(maxima)
    return {float(b): float(np.mean(maxima > b)) for b in bs}, maxima.size


def conditional_alarm_rates(model0, clusters, fisher, cfg: MonitorConfig, n_rep: int, seed, horizon: float):
    """Per update index: paths still running, paths alarming there, and their ratio."""
    n_updates = int(math.floor(horizon / cfg.delta + 1e-9)) - cfg.window_steps + 1
    alarms = np.zeros(n_updates, dtype=np.int64)
    for r in range(n_rep):
        res = run_monitor(simulate(model0, horizon, seed, r), model0, clusters, fisher, cfg)
        if res.stopped:
            alarms[int(round(res.stop_time / cfg.delta)) - cfg.window_steps] += 1
    at_risk = n_rep - np.concatenate([[0], np.cumsum(alarms)[:-1]])
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(at_risk > 0, alarms / at_risk, 0.0)
    return at_risk, alarms, rate


@dataclass(frozen=True)
class FdrStudy:
    b: float
    mean_false: float
    se_false: float
    mean_true: float
    fdr: float
    rho: float
    replicates: int


def fdr_study(bs, n_rep: int, seed, T0: float = 350.0, T1: float = 50.0, w: float = 400.0, alpha: float = 0.2,
              n_clusters: int = 20) -> list[FdrStudy]:
    """One scan at ``t = T0 + T1`` on the line network with a change on one cluster at ``T0``."""
    if abs(T0 + T1 - w) > 1e-9:
        raise ConfigurationError("the scan time T0 + T1 must equal the window w")
    model0, clusters = line20(n_clusters)
    post, changed = line20_change(model0, clusters, alpha=alpha)
    fisher = fisher_closed_form(model0, clusters.union_edges)
    scn = ChangeScenario(model0, post, T0)
    cfg = MonitorConfig(w, w, 1e300)
    gammas = np.empty((n_rep, n_clusters))
    for r in range(n_rep):
        res = run_monitor(simulate_with_change(scn, T0 + T1, seed, r), model0, clusters, fisher, cfg)
        gammas[r] = res.gammas[-1]
    out = []
    for b in bs:
        flagged = np.abs(gammas) > b
        true = flagged[:, changed].astype(float)
        false = flagged.sum(axis=1) - true
        kappa = flagged.sum(axis=1)
        fdp = np.where(kappa > 0, false / np.maximum(kappa, 1), 0.0)
        out.append(FdrStudy(float(b), float(false.mean()), float(false.std(ddof=1) / math.sqrt(n_rep)),
                            float(true.mean()), float(fdp.mean()), fdr_rho(b, n_clusters), n_rep))
    return out


def glr_threshold(model0, clusters, target_arl: float, horizon: float, seed, cluster_mode: bool,
                  w: float = 200.0, eval_interval: float = 10.0) -> tuple[float, int]:
    """GLR (or GLR-C) threshold from the renewal ARL along one long null path."""
    cfg = GlrConfig(window=w, eval_interval=eval_interval, edge_scope=clusters.union_edges)
    times, values = glr_null_trajectory(model0, cfg, clusters if cluster_mode else None, horizon, seed)
    return calibrate_glr_threshold(times, values, target_arl, w)


def runtime_benchmark(model0, clusters, horizon: float = 50_000.0, seed=0, w: float = 200.0, delta: float = 10.0,
                      glr_eval: float = 10.0, include_glrc: bool = False) -> dict:
    """Seconds spent computing statistics (simulation excluded) on one shared null path."""
    warm = simulate(model0, 2 * w, seed, 10**6)
    cfg = MonitorConfig(w, delta, 1e300)
    gcfg = GlrConfig(window=w, eval_interval=glr_eval, edge_scope=clusters.union_edges)
    fisher = fisher_closed_form(model0, clusters.union_edges)
    run_monitor(warm, model0, clusters, fisher, cfg)
    GlrMonitor(model0, gcfg).run(warm)
    stream = simulate(model0, horizon, seed)
    t0 = time.perf_counter()
    fisher = fisher_closed_form(model0, clusters.union_edges)
    run_monitor(stream, model0, clusters, fisher, cfg)
    scan_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    GlrMonitor(model0, gcfg).run(stream)
    glr_s = time.perf_counter() - t0
    out = {"horizon": horizon, "events": len(stream), "scan_seconds": scan_s, "glr_seconds": glr_s,
           "speedup": glr_s / scan_s}
    if include_glrc:
        t0 = time.perf_counter()
        GlrMonitor(model0, gcfg, clusters).run(stream)
        out["glrc_seconds"] = time.perf_counter() - t0
    return out


def ks_exponential(samples: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance to the exponential law with the sample mean."""
    samples = np.asarray(samples, float)
    return float(stats.kstest(samples, "expon", args=(0, samples.mean())).statistic)


def run_experiment(spec: ExperimentSpec) -> tuple[list[dict], dict]:
    """Run ``spec`` and return ``(table rows, timings)``."""
    start = time.perf_counter()
    rows = _RUNNERS[spec.kind](spec)
    return rows, {"kind": spec.kind, "seconds": time.perf_counter() - start}


def _run_arl(spec: ExperimentSpec) -> list[dict]:
    w, delta = spec.param("w"), spec.param("delta")
    model0, clusters, fisher, cal = _setup(spec.network, w, delta)
    rows = []
    for target in spec.param("targets"):
        variants = []
        for m in spec.param("ms"):
            th = threshold_for_arl(cal, target, m, delta, n=spec.param("n_blocks"), seed=spec.seed)
            variants.append((f"est1 m={m}", th.b_est1))
        variants.append(("est2", th.b_est2))
        for name, b in variants:
            row = {"method": name, "target_arl": target, "b": b}
            if spec.param("simulate"):
                rl = null_run_lengths(model0, clusters, fisher, MonitorConfig(w, delta, b), spec.replicates,
                                      spec.seed, spec.param("max_time"))
                finite = rl[np.isfinite(rl)]
                row.update(simulated_arl=float(finite.mean()), se=float(finite.std(ddof=1) / math.sqrt(finite.size)),
                           ks_distance=ks_exponential(finite), censored=int(np.sum(~np.isfinite(rl))))
            row["replicates"] = spec.replicates
            rows.append(row)
    return rows


def _run_edd(spec: ExperimentSpec) -> list[dict]:
    w, delta = spec.param("w"), spec.param("delta")
    model0, clusters, fisher, _ = _setup(spec.network, w, delta)
    if spec.network != "fig1":
        raise ConfigurationError("change cases are defined on the fig1 network")
    cfg = MonitorConfig(w, delta, spec.param("b"))
    thresholds = {"scan": spec.param("b")}
    for method, key in (("glr", "glr_threshold"), ("glrc", "glrc_threshold")):
        if method in spec.param("methods"):
            c = spec.param(key)
            if c is None:
                c, _ = glr_threshold(model0, clusters, spec.param("target_arl"), spec.param("glr_null_horizon"),
                                     spec.seed + 1, method == "glrc", w, delta)
            thresholds[method] = c
    rows = []
    for case in spec.cases:
        scn = case_scenario(case, spec.param("tau_star"))
        for method in spec.param("methods"):
            gcfg = GlrConfig(window=w, eval_interval=delta, threshold=thresholds.get(method, math.inf),
                             edge_scope=clusters.union_edges)
            study = detection_delays(scn, clusters, fisher, cfg, spec.replicates, spec.seed, method, gcfg,
                                     spec.param("max_delay"), spec.param("carry_history"))
            rows.append({"case": case, "method": method, "threshold": thresholds[method], "edd": study.edd,
                         "se": study.se, "replicates": spec.replicates, "discarded": study.discarded,
                         "censored": study.censored})
    return rows


def _run_far(spec: ExperimentSpec) -> list[dict]:
    w, delta = spec.param("w"), spec.param("delta")
    model0, clusters, fisher, cal = _setup(spec.network, w, delta)
    freq, n_snap = exceedance_frequencies(model0, clusters, fisher, w, delta, spec.param("bs"),
                                          spec.param("horizon"), spec.replicates, spec.seed)
    rows = []
    for b, f in freq.items():
        pred = tail_probability(cal, b, seed=spec.seed).alarm_prob
        rows.append({"quantity": "instantaneous", "b": b, "predicted": pred, "empirical": f,
                     "se": math.sqrt(f * (1 - f) / n_snap), "snapshots": n_snap, "replicates": spec.replicates})
    b = threshold_for_alpha(cal, spec.param("alpha"), seed=spec.seed)
    at_risk, alarms, rate = conditional_alarm_rates(model0, clusters, fisher, MonitorConfig(w, delta, b),
                                                    spec.replicates, spec.seed + 1, spec.param("far_horizon"))
    k = int(np.argmax(rate))
    rows.append({"quantity": "max_conditional", "b": b, "predicted": spec.param("alpha"), "empirical": float(rate[k]),
                 "se": math.sqrt(rate[k] * (1 - rate[k]) / max(at_risk[k], 1)), "snapshots": int(at_risk.size),
                 "replicates": spec.replicates})
    return rows


def _run_fdr(spec: ExperimentSpec) -> list[dict]:
    res = fdr_study(spec.param("bs"), spec.replicates, spec.seed, spec.param("T0"), spec.param("T1"),
                    spec.param("w"), spec.param("alpha"))
    return [{"b": s.b, "mean_false": s.mean_false, "se_false": s.se_false, "mean_true": s.mean_true,
             "fdr": s.fdr, "rho": s.rho, "replicates": s.replicates} for s in res]


def _run_runtime(spec: ExperimentSpec) -> list[dict]:
    model0, clusters = fixture(spec.network)
    out = runtime_benchmark(model0, clusters, spec.param("horizon"), spec.seed, spec.param("w"),
                            spec.param("delta"), spec.param("glr_eval"), spec.param("include_glrc"))
    return [out]


_RUNNERS = {"arl": _run_arl, "edd": _run_edd, "far": _run_far, "fdr": _run_fdr, "runtime": _run_runtime}
