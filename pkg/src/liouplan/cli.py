"""Command-line interface: ``liouplan analyze|plan|simulate|verify``."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import ConfigError, LiouplanError, StructureError
from .scenarios import (
    EXIT_CONFIG, EXIT_NUMERIC, EXIT_PASS, ScenarioConfig, resolve_system, run_scenario,
)
from .structure import Partition, check_chain_structure, classify_matrix, extract_pv_form, search_chain_order
from .table import TrajectoryTable, atomic_write
from .verify import DEFAULT_SUBSTEPS, integrate_ode


def _load_system(arg):
    if arg.startswith("builtin:"):
        return resolve_system(arg)
    try:
        data = json.loads(open(arg).read())
    except OSError as exc:
        raise ConfigError(f"cannot read {arg}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{arg}: invalid JSON: {exc}") from None
    return resolve_system(data)


def _parse_values(text, names):
    """``"x1=0,x2=1"`` or ``"0,1"`` (in state order)."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if all("=" in p for p in parts):
        return {k.strip(): float(v) for k, v in (p.split("=", 1) for p in parts)}
    if len(parts) != len(names):
        raise ConfigError(f"--x0 needs {len(names)} values")
    return dict(zip(names, map(float, parts)))


def cmd_analyze(args):
    system, notes = _load_system(args.system)
    part = Partition.parse(args.partition)
    part.validate(system)
    out = {"system": system.name, "eta": list(part.eta), "xi": list(part.xi), "notes": notes}
    try:
        if args.search_order:
            part, chain = search_chain_order(system, part, seed=args.seed)
            out["xi"] = list(part.xi)
        else:
            chain = check_chain_structure(system, part, seed=args.seed)
        out["chain"] = chain.to_list()
    except StructureError as exc:
        out["chain_error"] = f"{type(exc).__name__}: {exc}"
    try:
        pv = extract_pv_form(system, part, seed=args.seed)
        out["matrix"] = pv.to_lists()
        out["classification"] = classify_matrix(pv, seed=args.seed).value
    except StructureError as exc:
        out["pv_error"] = f"{type(exc).__name__}: {exc}"
    out["notes"].append(f"defect <= {len(part.xi)} (partition asserted)")
    print(json.dumps(out, indent=2))
    return EXIT_PASS


def _print_notes(report):
    for note in report["notes"]:
        print(f"note: {note}", file=sys.stderr)


def _summary(report):
    status = "PASS" if report["pass"] else "FAIL"
    worst = max((e["sup"] for e in report["errors"].values()), default=float("nan"))
    line = f"{report['scenario']}: {status} classification={report['classification']} max_sup={worst:.3e}"
    if "failure" in report:
        f = report["failure"]
        line += f" failure[{f['stage']}]={f['type']}: {f['message']}"
    return line + f" ({report['runtime_ms']} ms)"


def cmd_plan(args):
    cfg = ScenarioConfig.load(args.scenario)
    result = run_scenario(cfg)
    _print_notes(result.report)
    if result.table is not None and args.output:
        result.table.to_csv(args.output, dense=args.dense)
    text = json.dumps(result.report, indent=2)
    if args.report:
        atomic_write(args.report, text + "\n")
    print(_summary(result.report))
    return result.exit_code


def cmd_verify(args):
    cfg = ScenarioConfig.load(args.scenario)
    changes = {}
    if args.grid is not None:
        changes["grid"] = (cfg.grid[0], cfg.grid[1], args.grid)
    if args.substeps is not None:
        changes["substeps"] = args.substeps
    if args.tol is not None:
        changes["tolerance"] = args.tol
    if args.seed is not None:
        changes["seed"] = args.seed
    cfg = cfg.replace(**changes)
    result = run_scenario(cfg)
    _print_notes(result.report)
    print(json.dumps(result.report, indent=2))
    print(_summary(result.report))
    return result.exit_code


def cmd_simulate(args):
    system, notes = _load_system(args.system)
    for note in notes:
        print(f"note: {note}", file=sys.stderr)
    inputs = TrajectoryTable.from_csv(args.inputs, dense=args.dense)
    x0 = _parse_values(args.x0, system.states)
    sim = integrate_ode(system, inputs, x0, args.substeps)
    text = sim.to_csv(args.output)
    if not args.output:
        sys.stdout.write(text)
    return EXIT_PASS


def build_parser():
    p = argparse.ArgumentParser(prog="liouplan", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="decompose a system against a partition")
    a.add_argument("system", help="system JSON file or builtin:<name>")
    a.add_argument("--partition", required=True, help="e.g. eta=x2,x3,xi=x1")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--search-order", action="store_true",
                   help="try every ordering of xi (at most 6 states)")
    a.set_defaults(func=cmd_analyze)

    pl = sub.add_parser("plan", help="plan, reconstruct by quadrature and verify")
    pl.add_argument("scenario")
    pl.add_argument("-o", "--output", help="trajectory CSV")
    pl.add_argument("--report", help="report JSON")
    pl.add_argument("--dense", action="store_true", help="interleave midpoint rows in the CSV")
    pl.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="integrate a system under tabulated inputs")
    s.add_argument("system")
    s.add_argument("--inputs", required=True, help="CSV with t and input columns")
    s.add_argument("--x0", required=True, help="x1=0,x2=0 or values in state order")
    s.add_argument("-o", "--output")
    s.add_argument("--substeps", type=int, default=DEFAULT_SUBSTEPS)
    s.add_argument("--dense", action="store_true", help="input CSV interleaves midpoint rows")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run a scenario and print its report")
    v.add_argument("scenario")
    v.add_argument("--grid", type=int)
    v.add_argument("--substeps", type=int)
    v.add_argument("--tol", type=float)
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArithmeticError as exc:
        print(f"liouplan: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LiouplanError, ValueError, KeyError, OSError) as exc:
        print(f"liouplan: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
