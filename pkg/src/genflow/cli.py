"""Command-line entry point: ``genflow <command> ...``.

Exit status: 0 success, 1 infeasible verdict, 2 input error, 3 internal
invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .concave import solve_symmetric_concave
from .fatpath import InvariantError
from .gains import GainError, parse_number
from .generate import random_concave, random_linear
from .instance_io import InstanceFormatError, read_instance, write_instance
from .linear import LinearSolverError, solve_symmetric_linear
from .market import (MarketError, RecoveryError, build_adnb, build_fisher, extract_equilibrium,
                     load_market, random_adnb, recover_exact_adnb, required_dps, solve_market)
from .network import NetworkError, excess_discrepancy, excesses
from .reference import SizeCapError, check_conservative_certificate, lp_reference_linear, pwl_reference
from .report import SolverReport
from .sink import Infeasible, SinkInstance, UStarError, solve_sink

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

INPUT_ERRORS = (InstanceFormatError, MarketError, GainError, NetworkError, UStarError,
                LinearSolverError, SizeCapError, OSError, ValueError)
INTERNAL_ERRORS = (InvariantError, RecoveryError, AssertionError, RuntimeError)


def _number(text: str):
    try:
        return parse_number(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _dump(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# subcommands: each returns (exit status, output text) ---------------------------

def cmd_solve_linear(path, args):
    net = read_instance(path)
    rep = solve_symmetric_linear(net, check=args.check)
    if args.certificate:
        rep.certificate = check_conservative_certificate(net, rep.flows, rep.labels, "linear").as_dict()
    return EXIT_OK, rep.to_json(args.timing)


def cmd_solve_concave(path, args):
    net = read_instance(path)
    trace: list = []
    rep = solve_symmetric_concave(net, args.eps, check=args.check, trace=trace if args.trace else None)
    if args.certificate:
        rep.certificate = check_conservative_certificate(net, rep.flows, rep.labels, "concave", tol=1e-6,
                                                         delta=rep.params["final_delta"]).as_dict()
    if args.trace:
        rep.extra["trace"] = [list(row) for row in trace]
        w = csv.writer(sys.stderr, lineterminator="\n")
        w.writerow(["delta", "ex_start", "iterations", "kappa"])
        w.writerows((float(d), float(ex), it, float(k)) for d, ex, it, k in trace)
    return EXIT_OK, rep.to_json(args.timing)


def _infeasible_text(v: Infeasible, timing: bool) -> str:
    d = v.to_dict()
    if v.report is not None:
        d["report"] = v.report.to_dict(timing)
    return _dump(d)


def cmd_solve_sink(path, args):
    net = read_instance(path)
    inst = SinkInstance(net, args.sink, args.ustar)
    if args.exact:
        res = solve_sink(inst, mode="linear")
    else:
        if args.eps is None:
            raise ValueError("--eps is required unless --exact is given")
        res = solve_sink(inst, args.eps)
    if isinstance(res, Infeasible):
        return EXIT_INFEASIBLE, _infeasible_text(res, args.timing)
    return EXIT_OK, res.to_json(args.timing)


def cmd_fisher(path, args):
    market = load_market(path)
    graph = build_fisher(market)
    dps = args.dps
    res = solve_market(graph, args.eps, dps=dps)
    if isinstance(res, Infeasible):
        return EXIT_INFEASIBLE, _infeasible_text(res, args.timing)
    eq = extract_equilibrium(res, graph, tol=args.tol)
    out = {"equilibrium": eq.to_dict(market), "report": res.to_dict(args.timing)}
    return EXIT_OK, _dump(out)


def cmd_adnb(path, args):
    market = load_market(path)
    if args.exact:
        res = recover_exact_adnb(market)
        if isinstance(res, Infeasible):
            return EXIT_INFEASIBLE, _infeasible_text(res, args.timing)
        return EXIT_OK, _dump({"equilibrium": res.to_dict(market)})
    if args.eps is None:
        raise ValueError("--eps is required unless --exact is given")
    graph = build_adnb(market)
    dps = args.dps if args.dps is not None else (required_dps(graph, args.eps) if args.eps < 1e-9 else None)
    res = solve_market(graph, args.eps, dps=dps)
    if isinstance(res, Infeasible):
        return EXIT_INFEASIBLE, _infeasible_text(res, args.timing)
    eq = extract_equilibrium(res, graph, tol=args.tol)
    return EXIT_OK, _dump({"equilibrium": eq.to_dict(market), "report": res.to_dict(args.timing)})


def cmd_verify(path, args):
    net = read_instance(path)
    if args.report:
        rep = SolverReport.from_json(Path(args.report).read_text())
        kappa = excess_discrepancy(net, excesses(net, rep.flows))
    elif args.against == "lp":
        kappa = solve_symmetric_linear(net).kappa
    else:
        kappa = solve_symmetric_concave(net, args.eps).kappa
    if args.against == "lp":
        ref = lp_reference_linear(net, max_size=None if args.no_cap else (10, 25))
        ok = kappa == ref.kappa
        detail = {"kappa": kappa, "reference": ref.kappa}
    else:
        ref = pwl_reference(net, args.segments)
        eps = args.eps
        ok = ref.kappa - ref.gap - eps <= kappa <= ref.kappa + eps
        detail = {"kappa": kappa, "reference": ref.kappa, "gap": ref.gap, "eps": eps, "segments": ref.segments}
    verdict = "match" if ok else "mismatch"
    line = f"{verdict} " + " ".join(f"{k}={v}" for k, v in detail.items())
    return (EXIT_OK if ok else EXIT_INTERNAL), line


def cmd_gen(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for s in range(args.seed, args.seed + args.count):
        if args.family == "linear":
            p = out / f"linear_{s}.cgf"
            write_instance(random_linear(s), p, comment=f"linear seed {s}")
        elif args.family == "concave":
            p = out / f"concave_{s}.cgf"
            write_instance(random_concave(s), p, comment=f"concave seed {s}")
        else:
            p = out / f"adnb_{s}.json"
            p.write_text(_dump(random_adnb(s, infeasible=args.infeasible).to_dict()) + "\n")
        names.append(str(p))
    return EXIT_OK, "\n".join(names)


COMMANDS = {
    "solve-linear": cmd_solve_linear,
    "solve-concave": cmd_solve_concave,
    "solve-sink": cmd_solve_sink,
    "fisher": cmd_fisher,
    "adnb": cmd_adnb,
    "verify": cmd_verify,
}


def _run_one(command: str, path: str, args) -> tuple[int, str]:
    try:
        return COMMANDS[command](path, args)
    except INTERNAL_ERRORS as exc:
        return EXIT_INTERNAL, f"{path}: internal error: {exc}"
    except INPUT_ERRORS as exc:
        return EXIT_INPUT, f"{path}: {exc}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genflow", description="Concave generalized flow solvers.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_files(sp):
        sp.add_argument("files", nargs="+", help="instance files")
        sp.add_argument("--jobs", type=int, default=1, help="solve files in parallel processes")
        sp.add_argument("--timing", action="store_true", help="include wall time in reports")
        return sp

    s = with_files(sub.add_parser("solve-linear", help="exact symmetric solver for linear gains"))
    s.add_argument("--certificate", action="store_true", help="attach an optimality certificate check")
    s.add_argument("--check", action="store_true", help="assert invariants after every phase")

    s = with_files(sub.add_parser("solve-concave", help="eps-approximate symmetric solver"))
    s.add_argument("--eps", type=_number, required=True)
    s.add_argument("--trace", action="store_true", help="add per-phase (delta, Ex, iterations, kappa) rows")
    s.add_argument("--certificate", action="store_true")
    s.add_argument("--check", action="store_true")

    s = with_files(sub.add_parser("solve-sink", help="maximize the excess at one node"))
    s.add_argument("--sink", type=int, required=True, help="sink node index")
    s.add_argument("--eps", type=_number)
    s.add_argument("--ustar", type=_number, help="bound U* (required when log arcs enter the sink)")
    s.add_argument("--exact", action="store_true", help="linear gains: exact reduction")

    s = with_files(sub.add_parser("fisher", help="linear Fisher market (or price discrimination)"))
    s.add_argument("--eps", type=_number, default=1e-7)
    s.add_argument("--dps", type=int, help="run in mpmath with this many digits")
    s.add_argument("--tol", type=float, default=1e-6, help="flag residuals above this")

    s = with_files(sub.add_parser("adnb", help="Nash bargaining market"))
    s.add_argument("--eps", type=_number)
    s.add_argument("--exact", action="store_true", help="recover the exact rational equilibrium")
    s.add_argument("--dps", type=int)
    s.add_argument("--tol", type=float, default=1e-6)

    s = with_files(sub.add_parser("verify", help="compare solver output with a reference oracle"))
    s.add_argument("--against", choices=["lp", "pwl"], required=True)
    s.add_argument("--segments", type=int, default=64)
    s.add_argument("--eps", type=_number, default=1e-6)
    s.add_argument("--report", help="check this saved report instead of solving")
    s.add_argument("--no-cap", action="store_true", help="lift the LP size cap")

    s = sub.add_parser("gen", help="write seeded random instances")
    s.add_argument("--family", choices=["linear", "concave", "adnb"], default="linear")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--out", default=".")
    s.add_argument("--infeasible", action="store_true", help="adnb: push one disagreement point out of reach")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "gen":
        code, text = cmd_gen(args)
        print(text)
        return code
    files = args.files
    if args.jobs > 1 and len(files) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_run_one, [args.command] * len(files), files, [args] * len(files)))
    else:
        results = [_run_one(args.command, f, args) for f in files]
    code = EXIT_OK
    for (c, text), f in zip(results, files):
        if len(files) > 1:
            print(f"# {f}")
        stream = sys.stderr if c in (EXIT_INPUT, EXIT_INTERNAL) and not text.startswith("mismatch") else sys.stdout
        print(text, file=stream)
        code = max(code, c)
    return code


if __name__ == "__main__":
    sys.exit(main())
