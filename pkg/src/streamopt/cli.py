"""Batch command-line frontend: one pipeline per invocation, machine-readable
run reports."""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import matching, transship, weighted
from .config import PipelineConfig, load_config
from .stream import ResourceMeter, SparseFlow, StreamFormatError, open_stream


def _report(problem: str, value: float, eps: float, meter: ResourceMeter,
            solution_path: str, started: float) -> dict:
    return {
        "problem": problem,
        "value": value,
        "eps": eps,
        "passes": meter.passes,
        "peak_words": meter.peak_words,
        "work": meter.work,
        "solution_path": solution_path,
        "wall_seconds": time.time() - started,
    }


def _write_report(report: dict, path: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _load_marginals(path: str) -> np.ndarray:
    vals = []
    with open(path) as fh:
        for line in fh:
            body = line.split("#", 1)[0].strip()
            if body:
                vals.extend(float(t) for t in body.split())
    return np.asarray(vals)


def _load_demands(path: str, n: int) -> np.ndarray:
    d = np.zeros(n)
    with open(path) as fh:
        for line in fh:
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            vid, val = body.split()
            d[int(vid)] = float(val)
    return d


def _save_signed_flow(flow: transship.SignedFlow, path: str) -> None:
    with open(path, "w") as fh:
        for (a, b), x in sorted(flow.values.items()):
            fh.write(f"{a} {b} {x!r}\n")


def _cost_matrix(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            body = line.split("#", 1)[0].strip()
            if body:
                rows.append([float(t) for t in body.split()])
    return np.asarray(rows)


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="streamopt",
                                description="pass-metered graph optimization")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, eps_default=0.1):
        sp.add_argument("--input", required=True)
        sp.add_argument("--eps", type=float, default=eps_default)
        sp.add_argument("--output", default=None)
        sp.add_argument("--report", default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", default=None)
        sp.add_argument("--header", action="store_true",
                        help="first line of --input is 'n_left n_right'")

    for name in ("mcm", "mcm-exact", "mwm"):
        common(sub.add_parser(name))
    ot = sub.add_parser("ot")
    common(ot, eps_default=0.05)
    ot.add_argument("--marginals", required=True, help="left.txt,right.txt")
    ts = sub.add_parser("transship")
    common(ts)
    ts.add_argument("--demands", required=True)
    ss = sub.add_parser("sssp")
    common(ss)
    ss.add_argument("--source", type=int, required=True)
    ss.add_argument("--target", type=int, required=True)
    sg = sub.add_parser("solve-game")
    common(sg, eps_default=0.05)
    sg.add_argument("--b", required=True, help="file of target values")
    vf = sub.add_parser("verify")
    vf.add_argument("--input", required=True)
    vf.add_argument("--solution", required=True)
    vf.add_argument("--kind", choices=["matching", "flow"], default="matching")
    vf.add_argument("--header", action="store_true")

    try:
        args = p.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0

    try:
        return _dispatch(args)
    except (StreamFormatError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"runtime error: {e}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    started = time.time()
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    meter = ResourceMeter()
    out_path = getattr(args, "output", None) or "solution.out"

    if args.cmd == "verify":
        return _verify(args)

    if args.cmd in ("mcm", "mcm-exact"):
        g = matching.BipartiteGraph.from_file(args.input, expect_header=args.header)
        if args.cmd == "mcm":
            sol, meter = matching.mcm_approx(g, args.eps, meter, cfg)
        else:
            sol = matching.mcm_exact(g, meter, cfg)
        sol.check_valid(g)
        sol.save(out_path)
        rep = _report(args.cmd, float(sol.size), args.eps, meter, out_path, started)
        _write_report(rep, args.report)
        return 0

    if args.cmd == "mwm":
        src = open_stream(args.input, "edge", bipartite=True,
                          expect_header=args.header)
        sol = weighted.mwm_solve(src.n_left, src.n_right, src.u, src.v, src.w,
                                 args.eps * (src.w.max() if len(src.w) else 1.0),
                                 meter, cfg)
        sol.save(out_path)
        wmap = {(int(a), int(b)): float(ww)
                for a, b, ww in zip(src.u, src.v, src.w)}
        value = sol.weight(lambda e: wmap.get(e, 0.0))
        rep = _report("mwm", value, args.eps, meter, out_path, started)
        _write_report(rep, args.report)
        return 0

    if args.cmd == "ot":
        left_path, right_path = args.marginals.split(",")
        costs = _cost_matrix(args.input)
        ell = _load_marginals(left_path)
        r = _load_marginals(right_path)
        plan = weighted.ot_solve(costs, ell, r, args.eps, meter, cfg)
        plan.entries.save(out_path)
        rep = _report("ot", plan.cost(costs), args.eps, meter, out_path, started)
        _write_report(rep, args.report)
        return 0

    if args.cmd in ("transship", "sssp"):
        src = open_stream(args.input, "edge", bipartite=False,
                          expect_header=args.header)
        n = int(max(src.u.max(), src.v.max())) + 1 if src.length else 0
        if args.cmd == "transship":
            d = _load_demands(args.demands, n)
            inst = transship.TransshipInstance(n, src.u, src.v, src.w, d)
            flow, value = transship.approx_transshipment(inst, args.eps, meter,
                                                         cfg, args.seed)
            _save_signed_flow(flow, out_path)
        else:
            inst = transship.TransshipInstance(n, src.u, src.v, src.w, np.zeros(n))
            path, value = transship.shortest_path(inst, args.source, args.target,
                                                  args.eps, meter, cfg, args.seed)
            with open(out_path, "w") as fh:
                fh.write(" ".join(str(x) for x in path) + "\n")
        rep = _report(args.cmd, value, args.eps, meter, out_path, started)
        _write_report(rep, args.report)
        return 0

    if args.cmd == "solve-game":
        from . import boxsimplex
        rows = open_stream(args.input, "row")
        b = _load_marginals(args.b)
        inst = boxsimplex.BoxSimplexInstance(rows, b)
        report = boxsimplex.solve(inst, args.eps, meter, cfg.solver)
        with open(out_path, "w") as fh:
            fh.write(report.to_json() + "\n")
        rep = _report("solve-game", report.value, args.eps, meter, out_path,
                      started)
        report.iterates.close()
        _write_report(rep, args.report)
        return 0

    return 2


def _verify(args) -> int:
    if args.kind == "matching":
        g = matching.BipartiteGraph.from_file(args.input, expect_header=args.header)
        pairs = []
        with open(args.solution) as fh:
            for line in fh:
                body = line.split("#", 1)[0].strip()
                if body:
                    u, v = body.split()
                    pairs.append((int(u), int(v)))
        matching.Matching(pairs).check_valid(g)
        print(f"ok: valid matching of size {len(pairs)}")
        return 0
    flow = SparseFlow.load(args.solution)
    if any(x < 0 for x in flow.values.values()):
        print("error: negative flow value", file=sys.stderr)
        return 1
    print(f"ok: flow with support {flow.support()} and l1 {flow.l1():.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
