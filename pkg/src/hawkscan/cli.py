"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Options may also come from a JSON ``--config`` file whose keys use the long
option names with underscores; explicit flags win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .calibration import (
    fdr_estimate,
    gamma_covariance,
    tail_probability,
    threshold_for_alpha,
    threshold_for_arl,
)
from .errors import CheckpointError, ConfigurationError, NumericalError
from .experiments import DEFAULTS, ExperimentSpec, run_experiment
from .fit import FitOptions, fit_mle
from .fixtures import case_matrix, fixture
from .model import ChangeScenario, HawkesModel
from .scan import GammaSnapshot, MonitorConfig, localize, run_monitor
from .score import fisher_closed_form, fisher_estimate
from .simulate import simulate, simulate_with_change

log = logging.getLogger("hawkscan")


def _fisher_for(model: HawkesModel, clusters, fisher_path, training_path):
    if fisher_path:
        return io.load_fisher(fisher_path)
    if not model.A.any():
        return fisher_closed_form(model, clusters.union_edges)
    if training_path:
        return fisher_estimate(io.read_events(training_path, model.n_nodes), model, clusters.union_edges)
    raise ConfigurationError("model has A != 0: supply --fisher or --training events for the plug-in estimate")


def cmd_fixture(args) -> int:
    model, clusters = fixture(args.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_model(model, out / "model.json")
    io.save_clusters(clusters, out / "clusters.json")
    io.save_fisher(fisher_closed_form(model, clusters.union_edges), out / "fisher.json")
    print(f"wrote {args.name}: {model.n_nodes} nodes, {len(clusters)} clusters -> {out}")
    return 0


def cmd_simulate(args) -> int:
    model = io.load_model(args.model)
    if args.case or args.post_model:
        post = model.with_A(case_matrix(args.case, model.n_nodes)) if args.case else io.load_model(args.post_model)
        tau = args.tau_star if args.tau_star is not None else 0.5 * args.horizon
        stream = simulate_with_change(ChangeScenario(model, post, tau), args.horizon, args.seed,
                                      carry_history=args.carry_history)
    else:
        stream = simulate(model, args.horizon, args.seed)
    io.write_events(stream, args.out)
    print(f"wrote {len(stream)} events on [0, {args.horizon}] -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    stream = io.read_events(args.events, args.n_nodes, args.horizon)
    if args.init:
        init = io.load_model(args.init)
    else:
        rate = stream.counts() / max(stream.horizon, 1e-12)
        init = HawkesModel(np.maximum(rate, 1e-3), np.full((stream.n_nodes,) * 2, 0.01), args.beta)
    res = fit_mle(stream, args.beta, init, FitOptions(max_iter=args.max_iter))
    io.save_model(res.model, args.out)
    status = "converged" if res.converged else "NOT converged"
    print(f"{status} after {res.iterations} iterations, loglik {res.loglik:.6f}, grad norm {res.grad_norm:.3g}")
    return 0


def cmd_calibrate(args) -> int:
    model = io.load_model(args.model)
    clusters = io.load_clusters(args.clusters)
    fisher = _fisher_for(model, clusters, args.fisher, args.training)
    wd = args.w / args.delta
    if abs(wd - round(wd)) > 1e-9:
        raise ConfigurationError("w must be a multiple of delta")
    cal = gamma_covariance(fisher, clusters, int(round(wd)), not args.one_sided)
    report = {"sigma": cal.sigma, "w": args.w, "delta": args.delta, "two_sided": cal.two_sided,
              "seed": args.seed, "tail_samples": args.samples}
    if args.alpha is not None:
        b = threshold_for_alpha(cal, args.alpha, args.samples, args.seed)
        est = tail_probability(cal, b, args.samples, args.seed, max_rel_err=None)
        report.update(target_alpha=args.alpha, b=b, alarm_prob=est.alarm_prob, rel_std_err=est.rel_std_err,
                      per_term=est.per_term)
    if args.arl is not None:
        th = threshold_for_arl(cal, args.arl, args.m, args.delta, args.blocks, args.seed, args.samples)
        report.update(target_arl=args.arl, m=args.m, b_est1=th.b_est1, b_est2=th.b_est2,
                      lambda_est1=th.lambda_est1, se_est1=th.se_est1, blocks=args.blocks)
        report.setdefault("b", th.b_est1)
    if args.alpha is None and args.arl is None:
        raise ConfigurationError("give --alpha or --arl")
    io.write_json(report, args.out)
    print(f"b = {report['b']:.4f} -> {args.out}")
    return 0


def cmd_detect(args) -> int:
    model = io.load_model(args.model)
    clusters = io.load_clusters(args.clusters)
    clusters.check_nodes(model.n_nodes)
    stream = io.read_events(args.events, model.n_nodes, args.horizon)
    fisher = _fisher_for(model, clusters, args.fisher, args.training)
    if args.b is None:
        if args.alpha is None:
            raise ConfigurationError("give --b or --alpha")
        b = threshold_for_alpha(gamma_covariance(fisher, clusters, int(round(args.w / args.delta))), args.alpha,
                                seed=args.seed)
    else:
        b = args.b
    cfg = MonitorConfig(args.w, args.delta, b, not args.one_sided)
    res = run_monitor(stream, model, clusters, fisher, cfg, stop_on_alarm=args.stop_on_alarm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(res, out / "trajectory.csv")
    alarms = []
    for t, g in zip(res.times, res.gammas):
        snap = GammaSnapshot.from_values(t, g)
        flagged = localize(snap, b, cfg.two_sided)
        if flagged:
            alarms.append({"t": t, "flagged": [clusters[i].name for i in flagged],
                           "fdr_estimate": fdr_estimate(len(flagged), b, len(clusters))})
    summary = {"b": b, "w": args.w, "delta": args.delta, "n_updates": len(res),
               "first_alarm": alarms[0]["t"] if alarms else None, "alarms": alarms,
               "status": "ok" if len(res) else "insufficient data: stream shorter than one window"}
    io.write_json(summary, out / "alarms.json")
    if not len(res):
        print("insufficient data: stream shorter than one window; no updates")
    else:
        first = summary["first_alarm"]
        print(f"{len(res)} updates, {len(alarms)} above b={b:.4f}; first alarm at {first}")
    return 0


def cmd_bench(args) -> int:
    params = dict(args.params or {})
    spec = ExperimentSpec(kind=args.kind, network=args.fixture, cases=tuple(args.cases), replicates=args.replicates,
                          seed=args.seed, output=args.out, params=params)
    rows, timing = run_experiment(spec)
    io.write_table(rows, args.out)
    io.write_json(timing, str(args.out) + ".timing.json")
    print(f"{spec.kind}: {len(rows)} rows -> {args.out} ({timing['seconds']:.1f} s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hawkscan", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--config", help="JSON file with option defaults")

    sp = sub.add_parser("fixture", help="write a benchmark network (model, clusters, Fisher information)")
    sp.add_argument("name", choices=["fig1", "line20"])
    common(sp)
    sp.set_defaults(func=cmd_fixture)

    sp = sub.add_parser("simulate", help="simulate events, optionally with a change")
    sp.add_argument("--model", required=True)
    sp.add_argument("--horizon", type=float, required=True)
    sp.add_argument("--case", help="named change case on the fig1 network")
    sp.add_argument("--post-model", help="post-change model file")
    sp.add_argument("--tau-star", type=float)
    sp.add_argument("--carry-history", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="maximum-likelihood fit with fixed decay")
    sp.add_argument("--events", required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--init")
    sp.add_argument("--n-nodes", type=int)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--max-iter", type=int, default=500)
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("calibrate", help="threshold for a false-alarm probability or ARL")
    sp.add_argument("--model", required=True)
    sp.add_argument("--clusters", required=True)
    sp.add_argument("--fisher")
    sp.add_argument("--training")
    sp.add_argument("--w", type=float, default=200.0)
    sp.add_argument("--delta", type=float, default=10.0)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--arl", type=float)
    sp.add_argument("--m", type=int, default=50)
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--blocks", type=int, default=200_000)
    sp.add_argument("--one-sided", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("detect", help="scan an event file")
    sp.add_argument("--events", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--clusters", required=True)
    sp.add_argument("--fisher")
    sp.add_argument("--training")
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--w", type=float, default=200.0)
    sp.add_argument("--delta", type=float, default=10.0)
    sp.add_argument("--b", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--one-sided", action="store_true")
    sp.add_argument("--stop-on-alarm", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("bench", help="run an experiment and write a CSV table")
    sp.add_argument("kind", choices=sorted(DEFAULTS))
    sp.add_argument("--fixture", default="fig1")
    sp.add_argument("--cases", nargs="+", default=["i", "ii", "iii", "vii"])
    sp.add_argument("--replicates", type=int, default=100)
    common(sp)
    sp.set_defaults(func=cmd_bench, params=None)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = io.read_json(args.config)
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{args.config}: config must be a JSON object")
    explicit = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
    params = cfg.pop("params", None)
    for key, value in cfg.items():
        if key in explicit:
            continue
        if not hasattr(args, key):
            raise ConfigurationError(f"{args.config}: unknown option {key!r}")
        setattr(args, key, value)
    if params is not None:
        if args.command != "bench":
            raise ConfigurationError(f"{args.config}: 'params' only applies to bench")
        args.params = params
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        return args.func(args)
    except (ConfigurationError, CheckpointError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
