"""Command-line experiment runner.

Exit codes: 0 success, 1 configuration error, 2 verification failure,
3 numerical divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from . import __version__
from . import graphs as G
from . import metrics
from . import problems as P
from . import verify as V
from .algorithms import (DivergenceError, ParameterError, Stopping, dgpda_params, dgpda_run,
                         dsg_run, xfilter_params, xfilter_run)
from .config import ConfigError, ExperimentConfig, load

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_DIVERGED = 0, 1, 2, 3

SUMMARY_FIELDS = ("run_id", "algo", "graph_kind", "M", "setting", "complete", "target",
                  "outer_iter", "comm_rounds", "grad_evals", "h_star", "e_val")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def write_rows(path, header, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def record_rows(records, timing: bool):
    for rec in records:
        row = rec.row()
        if not timing:
            row[-1] = 0.0
        yield row


# ---------------------------------------------------------------------------
# building blocks

def build(cfg: ExperimentConfig):
    """Graph and problem instance described by a config."""
    g, p = cfg.graph, cfg.problem
    if p.family == "hard":
        if p.layout == "path":
            return P.hard_instance(g.M, p.T, p.U, p.eps, "path")
        if p.layout == "path_star":
            return P.hard_instance(g.M, p.T, p.U, p.eps, "path_star", D=g.D)
        graph = G.generate(g.kind, g.M, g.opts(), g.seed)
        return P.hard_instance(graph.M, p.T, p.U, p.eps, "general_graph", graph=graph)
    graph = G.generate(g.kind, g.M, g.opts(), g.seed)
    prob = P.classification_instance(graph.M, p.B, p.K, p.lambda_reg, p.alpha, p.seed,
                                     p.data_file, p.lipschitz, p.uniform_L)
    return graph, prob


def run_one(cfg: ExperimentConfig, algo: str, graph, prob, run_id: str):
    a, s = cfg.algorithm, cfg.stopping
    stop = Stopping(max_rounds=s.max_rounds, target=s.target_eps, measure=s.measure,
                    record_potential=s.record_potential)
    if algo == "dgpda":
        return dgpda_run(prob, graph, dgpda_params(prob, graph), stop, run_id)
    if algo == "xfilter":
        p = xfilter_params(prob, graph, a.choice, Q=a.Q)
        return xfilter_run(prob, graph, p, stop, run_id, a.choice, inner=a.inner)
    if stop.measure == "e_val":
        raise ConfigError("[stopping] measure: e_val is undefined for dsg")
    return dsg_run(prob, graph, a.step, a.rule, stop, run_id)


def run_config(cfg: ExperimentConfig, run_id: str = "0"):
    graph, prob = build(cfg)
    return [run_one(cfg, algo, graph, prob, run_id) for algo in cfg.algorithm.names]


def reached(res, target, measure):
    """Record at which the target was first met (or the last record)."""
    if target is not None:
        rec = res.first_reaching(target, measure)
        if rec is not None:
            return rec, True
    return res.last, target is None


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(cfg: ExperimentConfig, out_dir: str) -> int:
    results = run_config(cfg)
    rows = [row for res in results for row in record_rows(res.records, cfg.output.timing)]
    path = os.path.join(out_dir, f"{cfg.output.prefix}.csv")
    write_rows(path, metrics.RECORD_FIELDS, rows)
    for res in results:
        last = res.last
        h = last.h_star if last else math.nan
        print(f"{res.algo:<8} complete={int(res.complete)} records={len(res.records)} "
              f"h_star={h:.6g}" + (f" Q={res.extras['Q']}" if "Q" in res.extras else ""))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> int:
    jobs = cfg.expand()

    def work(k):
        setting, c = jobs[k]
        return setting, c, run_config(c, str(k))

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            done = list(ex.map(work, range(len(jobs))))
    else:
        done = [work(k) for k in range(len(jobs))]

    rows, summary = [], []
    for k, (setting, c, results) in enumerate(done):
        label = ";".join(f"{key}={fmt(v)}" for key, v in setting.items())
        for res in results:
            rows.extend(record_rows(res.records, cfg.output.timing))
            rec, ok = reached(res, c.stopping.target_eps, c.stopping.measure)
            if rec is None:
                summary.append([str(k), res.algo, "", "", label, ok, c.stopping.target_eps,
                                None, None, None, None, None])
                continue
            summary.append([rec.run_id, res.algo, rec.graph_kind, rec.M, label, ok,
                            c.stopping.target_eps, rec.outer_iter, rec.comm_rounds,
                            rec.grad_evals, rec.h_star, rec.e_val])
    path = os.path.join(out_dir, f"{cfg.output.prefix}.csv")
    spath = os.path.join(out_dir, f"{cfg.output.prefix}_summary.csv")
    write_rows(path, metrics.RECORD_FIELDS, rows)
    write_rows(spath, SUMMARY_FIELDS, summary)
    print(f"{len(jobs)} configuration(s), {len(summary)} run(s)")
    print(f"wrote {path}")
    print(f"wrote {spath}")
    return EXIT_OK


def bounds_report(cfg: ExperimentConfig, measure: bool = False) -> dict:
    graph, prob = build(cfg)
    eps = cfg.stopping.target_eps or (cfg.problem.eps if cfg.problem.family == "hard" else 1e-6)
    Lbar = prob.profile.mean
    lap = G.spectral(G.normalized_laplacian(graph))
    f_low = prob.lower_bound
    gap = metrics.hard_gap(prob, f_low)
    rep = {
        "graph": {"kind": graph.kind, "M": graph.M, "E": graph.E, "diameter": graph.diameter,
                  "xi": lap.xi},
        "problem": {"family": prob.family, "S": prob.S, "L_mean": Lbar,
                    "L_max": prob.profile.max, "f_low": f_low},
        "eps": eps,
        "lower_bound": {
            "gap": gap,
            "xi_form": metrics.lower_bound_iters(gap, Lbar, eps, xi=lap.xi),
            "diameter_form": metrics.lower_bound_iters(gap, Lbar, eps, D=graph.diameter,
                                                      form="diameter"),
        },
        "upper_bound": {},
    }
    pd = px = None
    if prob.profile.min > 0:
        pd = dgpda_params(prob, graph)
        ub = metrics.upper_bound_iters("dgpda", prob, graph, pd, eps, f_low=f_low)
        rep["upper_bound"]["dgpda"] = {"C1": ub.C1, "C2": ub.C2, "iterations": ub.iters,
                                       "rounds": ub.rounds}
    px = xfilter_params(prob, graph, cfg.algorithm.choice, Q=cfg.algorithm.Q)
    ub = metrics.upper_bound_iters("xfilter", prob, graph, px, eps, f_low=f_low)
    rep["upper_bound"]["xfilter"] = {"C1": ub.C1, "C2": ub.C2, "outer_iterations": ub.iters,
                                     "rounds": ub.rounds, **ub.detail}
    rep["specialization"] = metrics.specialization_constants(graph.kind, graph.M, Lbar, pd, px)
    if measure:
        measured = {}
        m = "e_val"
        for algo in ("dgpda", "xfilter"):
            if algo == "dgpda" and pd is None:
                continue
            stop = Stopping(max_rounds=cfg.stopping.max_rounds, target=eps, measure=m,
                            record_potential=False)
            if algo == "dgpda":
                res = dgpda_run(prob, graph, pd, stop)
            else:
                res = xfilter_run(prob, graph, px, stop, inner="operator")
            rec, ok = reached(res, eps, m)
            measured[algo] = {"reached": bool(ok and res.complete),
                              "outer_iter": rec.outer_iter if rec else None,
                              "comm_rounds": rec.comm_rounds if rec else None}
        rep["measured"] = measured
    return rep


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    return o


def cmd_bounds(cfg: ExperimentConfig, out_dir: str, measure: bool) -> int:
    rep = _jsonable(bounds_report(cfg, measure))
    text = json.dumps(rep, indent=2, sort_keys=True)
    path = os.path.join(out_dir, f"{cfg.output.prefix}_bounds.json")
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_verify(suite: str, out_dir: Optional[str]) -> int:
    results = V.run_suite(suite)
    for r in results:
        print(r.line())
    n_bad = sum(not r.ok for r in results)
    print(f"{len(results) - n_bad}/{len(results)} checks passed")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"verify_{suite}.jsonl"), "w") as fh:
            for r in results:
                fh.write(json.dumps(_jsonable({"suite": r.suite, "check": r.name, "ok": r.ok,
                                               "value": r.value, "limit": r.limit,
                                               "sense": r.sense, "margin": r.margin})) + "\n")
    return EXIT_OK if n_bad == 0 else EXIT_VERIFY


def cmd_gen_graph(cfg: ExperimentConfig, out: Optional[str]) -> int:
    g = G.generate(cfg.graph.kind, cfg.graph.M, cfg.graph.opts(), cfg.graph.seed)
    text = g.to_edge_list()
    if out:
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="distopt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="INI experiment file")
        p.add_argument("--out", help="output directory (overrides config and $DISTOPT_OUT)")
        p.add_argument("--seed", type=int, help="override graph and problem seeds")
        p.add_argument("--threads", type=int, default=1, help="parallel sweep workers")

    common(sub.add_parser("run", help="run the configured algorithms"))
    common(sub.add_parser("sweep", help="cartesian sweep over [sweep] lists"))
    p = sub.add_parser("bounds", help="lower/upper complexity bounds as JSON")
    common(p)
    p.add_argument("--measure", action="store_true", help="also run to the target and report")
    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", nargs="?", default="all", choices=list(V.SUITES) + ["all"])
    common(p, needs_config=False)
    p = sub.add_parser("gen-graph", help="emit a graph in edge-list format")
    common(p, needs_config=False)
    p.add_argument("--kind", choices=G.KINDS)
    p.add_argument("-M", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("-D", type=int)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.out)
        cfg = load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "gen-graph":
            for name in ("kind", "M", "radius", "D"):
                v = getattr(args, name)
                if v is not None:
                    setattr(cfg.graph, name, v)
            return cmd_gen_graph(cfg, args.out)
        out_dir = cfg.out_dir(args.out)
        if args.command == "run":
            return cmd_run(cfg, out_dir)
        if args.command == "sweep":
            return cmd_sweep(cfg, out_dir, args.threads)
        return cmd_bounds(cfg, out_dir, args.measure)
    except (ConfigError, ParameterError, G.GraphError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, FloatingPointError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
