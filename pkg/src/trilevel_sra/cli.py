"""Command line: ``trilevel-sra generate | solve | benchmark``.

Exit codes: 0 solved, 1 error, 2 stopped at the time limit.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
from pathlib import Path
from typing import Callable, Sequence

from . import instance as inst_mod
from .def_benchmark import ScenarioCapacityError, def_solve
from .instance import InstanceError, NetworkInstance
from .masters import Deadline, Report, SolverConfig, solve_defender
from .oracle import OracleCapacityError, trilevel_exact

CSV_HEADER = ["size", "budget", "levels", "method", "runtime_s", "solved", "refinements", "gap"]
EXIT_SOLVED, EXIT_ERROR, EXIT_TIME_LIMIT = 0, 1, 2


def solve_oracle(instance: NetworkInstance, config: SolverConfig | None = None) -> Report:
    deadline = Deadline(float("inf"))
    x, v, value = trilevel_exact(instance)
    return Report("oracle", value, value, value, True, iterations=1,
                  wall_time_s=deadline.elapsed(), x=x, v=v, v_pool=[v])


METHODS: dict[str, Callable[..., Report]] = {
    "sra": solve_defender,
    "def": def_solve,
    "oracle": solve_oracle,
}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _method_list(text: str) -> list[str]:
    methods = [t.strip() for t in text.split(",") if t.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown method(s): {', '.join(unknown)}")
    return methods


def _config(args) -> SolverConfig:
    return SolverConfig(epsilon_cell=args.eps_cell, epsilon_gap=args.eps,
                        time_limit=args.time_limit, refinement_mode=args.refinement_mode,
                        master_mode=args.master_mode)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, default=1e-6, help="relative gap tolerance")
    p.add_argument("--eps-cell", type=float, default=1e-6, help="cell error threshold")
    p.add_argument("--time-limit", type=float, default=60.0, help="seconds per solve")
    p.add_argument("--refinement-mode", choices=["exact_argmin", "first_contested"],
                   default="exact_argmin")
    p.add_argument("--master-mode", choices=["enumerate", "branch_and_bound"],
                   default="branch_and_bound")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # Usage errors share exit code 1 with every other failure; 2 means time limit.
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trilevel-sra",
                     description="Tri-level max-flow interdiction solvers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a random grid instance")
    g.add_argument("--rows", type=_positive_int, required=True)
    g.add_argument("--cols", type=_positive_int, required=True)
    g.add_argument("--budget", type=int, required=True)
    g.add_argument("--levels", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="solve one instance and print a JSON report")
    s.add_argument("--instance", type=Path, required=True)
    s.add_argument("--method", choices=sorted(METHODS), default="sra")
    _add_solver_flags(s)

    b = sub.add_parser("benchmark", help="sweep grid settings and print CSV")
    b.add_argument("--sizes", type=_int_list, default=[3], help="grid side lengths, e.g. 2,3")
    b.add_argument("--budgets", type=_int_list, default=[2])
    b.add_argument("--levels", type=_int_list, default=[2])
    b.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    b.add_argument("--methods", type=_method_list, default=["sra", "def"])
    b.add_argument("--out", type=Path, help="CSV path (default stdout)")
    b.add_argument("--details", type=Path, help="optional JSON-lines file of per-seed reports")
    _add_solver_flags(b)
    return parser


def cmd_generate(args) -> int:
    if args.budget < 0:
        raise ValueError("--budget must be non-negative")
    instance = inst_mod.generate_grid(args.rows, args.cols, args.budget, args.levels, args.seed)
    inst_mod.save(instance, args.out)
    return EXIT_SOLVED


def cmd_solve(args, out=None) -> int:
    instance = inst_mod.load(args.instance)
    report = METHODS[args.method](instance, _config(args))
    (out or sys.stdout).write(report.to_json() + "\n")
    return EXIT_SOLVED if report.solved else EXIT_TIME_LIMIT


def run_benchmark(sizes: Sequence[int], budgets: Sequence[int], levels: Sequence[int],
                  seeds: Sequence[int], methods: Sequence[str], config: SolverConfig) -> list[dict]:
    """One record per (size, budget, levels, method, seed); failures are recorded, not raised."""
    if not seeds:
        raise ValueError("the seed list is empty")
    records = []
    for size in sizes:
        for budget in budgets:
            for level in levels:
                for seed in seeds:
                    instance = inst_mod.generate_grid(size, size, budget, level, seed)
                    for method in methods:
                        rec = {"size": size, "budget": budget, "levels": level,
                               "method": method, "seed": seed}
                        try:
                            rec["report"] = METHODS[method](instance, config)
                        except (OracleCapacityError, ScenarioCapacityError) as err:
                            rec["error"] = str(err)
                        records.append(rec)
    return records


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6g}"


def summarize(records: list[dict]) -> list[list[str]]:
    """Table rows: mean runtime over solved seeds, solved count, mean refinements, mean gap if unsolved."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        groups.setdefault((rec["size"], rec["budget"], rec["levels"], rec["method"]), []).append(rec)
    rows = []
    for (size, budget, level, method), recs in sorted(groups.items()):
        reports = [r["report"] for r in recs if "report" in r]
        solved = [r for r in reports if r.solved]
        unsolved_gaps = [r.gap for r in reports if not r.solved and r.gap is not None]
        runtime = statistics.fmean(r.wall_time_s for r in solved) if solved else None
        refinements = statistics.fmean(r.refinements for r in reports) if reports else None
        gap = statistics.fmean(unsolved_gaps) if unsolved_gaps else None
        if any("error" in r for r in recs) and not reports:
            gap_text = "error"
        else:
            gap_text = _fmt(gap)
        rows.append([f"{size}x{size}", str(budget), str(level), method, _fmt(runtime),
                     str(len(solved)), _fmt(refinements), gap_text])
    return rows


def format_csv(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    return buf.getvalue()


def _detail(rec: dict) -> dict:
    out = {k: rec[k] for k in ("size", "budget", "levels", "method", "seed")}
    if "report" in rec:
        out["report"] = rec["report"].as_dict()
    else:
        out["error"] = rec["error"]
    return out


def cmd_benchmark(args, out=None) -> int:
    records = run_benchmark(args.sizes, args.budgets, args.levels, args.seeds, args.methods,
                            _config(args))
    text = format_csv(summarize(records))
    if args.out:
        args.out.write_text(text)
    else:
        (out or sys.stdout).write(text)
    if args.details:
        args.details.write_text("".join(json.dumps(_detail(r), sort_keys=True) + "\n"
                                        for r in records))
    return EXIT_SOLVED


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "benchmark": cmd_benchmark}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InstanceError, OracleCapacityError, ScenarioCapacityError, ValueError, OSError) as err:
        print(f"trilevel-sra: error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
