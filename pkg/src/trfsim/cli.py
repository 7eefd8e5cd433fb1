"""Batch experiment runner.

Pipeline subcommands: simulate -> observe -> detect -> estimate -> fit ->
logit, plus the structural analyses (scc, sample, closure) and figure
rendering (report).  Outputs are CSV/JSONL files with fixed headers; every run
drops a manifest.json that pins inputs, seed and parameters, so identical
invocations produce byte-identical artifacts.

Exit status: 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from . import detect as dt
from . import events as ev
from . import report as rp
from . import simulate as sim
from .config import describe_sim_config, load_sim_config, write_manifest
from .errors import EmptyInput, TrfsimError
from .graph import read_graph_csv, write_graph_csv
from .inference import FitRow, fit_pq, logistic_fit, odds_ratios
from .structure import is_trf_equilibrium, scc_fraction_curve, tarjan_scc, trf_closure

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the toolkit contract is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _manifest(args: argparse.Namespace, out: str, extra: dict | None = None) -> None:
    payload = {
        "toolkit_version": __version__,
        "command": args.command,
        "arguments": {
            k: v for k, v in sorted(vars(args).items())
            if k not in ("command", "func") and v is not None
        },
    }
    if extra:
        payload.update(extra)
    write_manifest(out, payload)


# -- simulate ---------------------------------------------------------------------

def _write_sim_outputs(out: str, result: sim.SimResult) -> dict:
    ev.save_log(result.events, os.path.join(out, "events.jsonl"))
    sim.write_ground_truth_csv(result.trf_events, os.path.join(out, "ground_truth.csv"))
    write_graph_csv(result.final_graph, os.path.join(out, "final_graph.csv"))
    return {"events": len(result.events), "trf_events": len(result.trf_events)}


def _run_one_rep(payload: tuple) -> tuple[int, dict]:
    config_path, overrides, seed, out = payload
    overrides = dict(overrides)
    overrides["seed"] = str(seed)
    cfg = load_sim_config(config_path, overrides)
    result = sim.run_simulation(cfg)
    counts = _write_sim_outputs(_out_dir(out), result)
    return seed, counts


def cmd_simulate(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    overrides: dict[str, str] = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.delta is not None:
        overrides["delta"] = str(args.delta)
    cfg = load_sim_config(args.config, overrides)
    if args.repetitions <= 1:
        result = sim.run_simulation(cfg)
        counts = _write_sim_outputs(out, result)
        _manifest(args, out, {"config": describe_sim_config(cfg, args.config), **counts})
        return 0
    # independent seeded runs; aggregation sorted by seed is deterministic
    seeds = [cfg.seed + i for i in range(args.repetitions)]
    jobs = [(args.config, tuple(overrides.items()), s, os.path.join(out, f"rep-{s}"))
            for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one_rep, jobs))
    else:
        results = [_run_one_rep(j) for j in jobs]
    results.sort()
    with open(os.path.join(out, "runs.csv"), "w") as fp:
        fp.write("seed,events,trf_events\n")
        for seed, counts in results:
            fp.write(f"{seed},{counts['events']},{counts['trf_events']}\n")
    _manifest(args, out, {"config": describe_sim_config(cfg, args.config),
                          "repetitions": args.repetitions, "seeds": seeds})
    return 0


# -- observe ----------------------------------------------------------------------

def cmd_observe(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    graph = read_graph_csv(args.graph)
    log = ev.load_log(args.log)
    if args.users == "all":
        users = graph.users()
    else:
        users = sorted({int(u) for u in args.users.split(",") if u.strip()})
    snaps = sim.snapshot_observer(log, graph, users, args.poll_interval,
                                  duration=args.duration)
    ev.save_snapshots(snaps, os.path.join(out, "snapshots.jsonl"))
    _manifest(args, out, {"snapshots": len(snaps), "monitored_users": len(users)})
    return 0


# -- detect -----------------------------------------------------------------------

def cmd_detect(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    graph = read_graph_csv(args.graph)
    log = ev.load_log(args.log)
    if args.snapshots:
        deliveries = dt.extract_tr_events(log, graph, args.delta)
        snaps = ev.load_snapshots(args.snapshots)
        detections = dt.detect_from_snapshots(snaps, deliveries, args.delta)
        source = "snapshots"
    else:
        detections = dt.detect_trf(log, graph, args.delta)
        source = "log"
    dt.write_detections_csv(detections, os.path.join(out, "detections.csv"))
    retweets = [e for e in log if e.kind == ev.RETWEET]
    wrote_latency = False
    if detections and retweets:
        trf_cdf, rt_cdf = dt.latency_histograms(detections, retweets)
        with open(os.path.join(out, "latency.csv"), "w") as fp:
            fp.write("kind,edge_seconds,cdf\n")
            for edge, value in zip(rt_cdf.edges, rt_cdf.values):
                fp.write(f"retweet,{edge!r},{value!r}\n")
            for edge, value in zip(trf_cdf.edges, trf_cdf.values):
                fp.write(f"follow,{edge!r},{value!r}\n")
        wrote_latency = True
    _manifest(args, out, {"detections": len(detections), "source": source,
                          "latency_csv": wrote_latency})
    return 0


# -- estimate ---------------------------------------------------------------------

def cmd_estimate(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    graph = read_graph_csv(args.graph)
    log = ev.load_log(args.log)
    trs = dt.extract_tr_events(log, graph, args.delta)
    follow_time = dt.follow_times_from_log(log)
    groups = dt.group_retweets(trs, follow_time, args.delta)
    if not groups:
        raise EmptyInput("the log yields no retweet groups")
    rows = []
    for stratum in ("all", "reciprocal", "nonreciprocal"):
        try:
            rows.extend(dt.estimate_p_trf(groups, stratum, by_n=False))
            rows.extend(dt.estimate_p_trf(groups, stratum, by_n=True))
        except EmptyInput:
            continue
    dt.write_estimate_csv(rows, os.path.join(out, "ptrf.csv"))

    with open(os.path.join(out, "exo_endo.csv"), "w") as fp:
        fp.write("metric,probability,samples\n")
        rates = {}
        try:
            p_exo, n_exo = dt.estimate_p_exo(log, graph, args.delta)
            fp.write(f"p_exo,{p_exo!r},{n_exo}\n")
            rates["p_exo"] = p_exo
        except EmptyInput:
            pass
        try:
            p_endo, n_endo = dt.estimate_p_endo(log, graph, args.delta)
            fp.write(f"p_endo,{p_endo!r},{n_endo}\n")
            rates["p_endo"] = p_endo
        except EmptyInput:
            pass

    xs, ys = dt.group_feature_table(groups)
    with open(os.path.join(out, "features.csv"), "w") as fp:
        fp.write("label," + ",".join(dt.GROUP_FEATURE_NAMES) + "\n")
        for row, label in zip(xs, ys):
            fp.write(f"{label}," + ",".join(repr(v) for v in row) + "\n")
    _manifest(args, out, {"groups": len(groups), "estimate_rows": len(rows), **rates})
    return 0


# -- fit ---------------------------------------------------------------------------

def cmd_fit(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    rows = dt.read_estimate_csv(args.estimate)
    fitted = {}
    with open(os.path.join(out, "fit.csv"), "w") as fp:
        fp.write("class,delta,p,pq,q,nll\n")
        for stratum in ("all", "reciprocal", "nonreciprocal"):
            strata = [FitRow(n=r.n, groups=r.groups, follows=r.followers)
                      for r in rows if r.stratum == stratum and r.n >= 1]
            if len({r.n for r in strata}) < 2:
                continue
            try:
                fit = fit_pq(strata, truncated=(args.model == "grouped"))
            except TrfsimError as exc:
                print(f"fit: skipping stratum {stratum!r}: {exc}", file=sys.stderr)
                continue
            p, q = fit.params.p, fit.params.q
            fp.write(f"{stratum},{args.delta!r},{p!r},{p * q!r},{q!r},{fit.nll!r}\n")
            fitted[stratum] = (p, q)
    if not fitted:
        raise EmptyInput(f"{args.estimate}: no stratum with enough data to fit")
    _manifest(args, out, {"model": args.model,
                          "classes": {k: {"p": v[0], "q": v[1]} for k, v in fitted.items()}})
    return 0


# -- logit -------------------------------------------------------------------------

def cmd_logit(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    with open(args.features) as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if not header or header[0] != "label":
            raise TrfsimError(f"{args.features}: first column must be 'label'")
        names = header[1:]
        labels, matrix = [], []
        for line in reader:
            if not line:
                continue
            labels.append(int(line[0]))
            matrix.append([float(v) for v in line[1:]])
    if not matrix:
        raise EmptyInput(f"{args.features}: no rows")
    # constant columns carry no information and break the fit; drop them
    keep = [j for j in range(len(names))
            if len({row[j] for row in matrix}) > 1]
    if not keep:
        raise TrfsimError(f"{args.features}: every feature is constant")
    dropped = [names[j] for j in range(len(names)) if j not in keep]
    x = [[row[j] for j in keep] for row in matrix]
    kept_names = [names[j] for j in keep]
    model = logistic_fit(x, labels, feature_names=kept_names)
    table = odds_ratios(model, confidence=args.confidence)
    with open(os.path.join(out, "odds.csv"), "w") as fp:
        fp.write("factor,odds_ratio,ci_low,ci_high,p_value\n")
        for row in table:
            fp.write(f"{row.factor},{row.odds_ratio!r},{row.ci_low!r},"
                     f"{row.ci_high!r},{row.p_value!r}\n")
    _manifest(args, out, {"rows": len(labels), "features": kept_names,
                          "dropped_constant": dropped, "converged": model.converged})
    return 0


# -- structural subcommands -----------------------------------------------------------

def cmd_scc(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    graph = read_graph_csv(args.graph)
    result = tarjan_scc(graph)
    with open(os.path.join(out, "scc.csv"), "w") as fp:
        fp.write("node,component\n")
        for node in sorted(result.component):
            fp.write(f"{node},{result.component[node]}\n")
    with open(os.path.join(out, "scc_summary.csv"), "w") as fp:
        fp.write("nodes,components,largest_size,largest_fraction\n")
        largest = max(result.sizes) if result.sizes else 0
        fp.write(f"{len(result.component)},{result.n_components},"
                 f"{largest},{result.largest_fraction!r}\n")
    _manifest(args, out, {"components": result.n_components,
                          "largest_fraction": result.largest_fraction})
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    graph = read_graph_csv(args.graph)
    sizes = sorted(int(s) for s in args.sizes.split(",") if s.strip())
    points = scc_fraction_curve(
        graph, args.method, sizes, args.repetitions,
        seed=args.seed, restart_prob=args.restart_prob,
    )
    with open(os.path.join(out, "scc_curve.csv"), "w") as fp:
        fp.write("size,mean_fraction,ci_low,ci_high,repetitions\n")
        for pt in points:
            fp.write(f"{pt.size},{pt.mean_fraction!r},{pt.ci_low!r},"
                     f"{pt.ci_high!r},{pt.repetitions}\n")
    _manifest(args, out, {"sizes": sizes, "method": args.method})
    return 0


def cmd_closure(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    graph = read_graph_csv(args.graph)
    closed = trf_closure(graph)
    write_graph_csv(closed, os.path.join(out, "closure.csv"))
    _manifest(args, out, {
        "input_edges": graph.n_edges,
        "closure_edges": closed.n_edges,
        "was_equilibrium": is_trf_equilibrium(graph),
    })
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    made = rp.render_report(args.out)
    for path in made:
        print(path)
    return 0


# -- wiring -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trfsim", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a seeded simulation from a config file")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--delta", type=float, help="override the config window")
    p.add_argument("--out", required=True)
    p.add_argument("--repetitions", type=int, default=1,
                   help="run this many consecutive seeds (one subdir each)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for repetitions")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("observe", help="poll follower sets from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--users", default="all", help="comma list of user ids, or 'all'")
    p.add_argument("--poll-interval", type=float, default=300.0)
    p.add_argument("--duration", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_observe)

    p = sub.add_parser("detect", help="reconstruct retweet-driven follows")
    p.add_argument("--log", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--delta", type=float, default=86400.0)
    p.add_argument("--snapshots", help="detect from follower polls instead of follow events")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("estimate", help="probability tables and feature rows from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--delta", type=float, default=86400.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit", help="fit (p, q) to an estimate table")
    p.add_argument("--estimate", required=True, help="ptrf.csv from the estimate step")
    p.add_argument("--delta", type=float, default=86400.0)
    p.add_argument("--model", choices=("grouped", "binomial"), default="grouped",
                   help="grouped: follow-truncated at-risk strata (pipeline default)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("logit", help="logistic regression over a feature table")
    p.add_argument("--features", required=True)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_logit)

    p = sub.add_parser("scc", help="strongly connected components of a graph CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scc)

    p = sub.add_parser("sample", help="largest-SCC fraction vs sample size")
    p.add_argument("--graph", required=True)
    p.add_argument("--method", choices=("random_walk", "snowball"), default="random_walk")
    p.add_argument("--sizes", required=True, help="comma list of sample sizes")
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--restart-prob", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("closure", help="fixed point of retweet-driven link addition")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_closure)

    p = sub.add_parser("report", help="render figures from the CSVs in an output dir")
    p.add_argument("--out", required=True, help="directory holding the CSV outputs")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    try:
        return args.func(args)
    except TrfsimError as exc:
        print(f"trfsim {args.command}: {exc}", file=sys.stderr)
        return DATA_EXIT
    except OSError as exc:
        print(f"trfsim {args.command}: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
