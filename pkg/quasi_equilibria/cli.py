"""``quasi-eq`` command line.

Exit codes: 0 on success or a true verdict, 2 on a false verdict, 1 on any
error. Reports go to ``--report`` as JSON; stdout gets tabulated summaries and
logging goes to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from dotenv import find_dotenv, load_dotenv

from . import reports
from .config import Settings
from .errors import QuasiEquilibriaError, UsageError
from .model import GALLERY, GameInstance, build_gallery, dump_instance, load_instance
from .potential import check_gradient_identity, check_potential_existence, construct_potential
from .solvers import (
    probe_feasible_region,
    solve_p_implicit,
    solve_p_pessimistic,
    solve_p_quasi,
    write_scan_csv,
)
from .verify import (
    StationarityConfig,
    certify_nonexistence_on_grid,
    check_nash_b_stationarity,
    verify_global,
    verify_local,
    verify_pessimistic,
    write_nonexistence_csv,
)
from .vi import enumerate_solutions

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT_FALSE = 2

CHECK_GRID = 11
VERIFY_GRID = 101
NONEXIST_GRID = 21


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def parse_vector(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"cannot read {text!r} as comma-separated numbers") from None


def parse_blocks(text: str) -> list[list[float]]:
    return [parse_vector(block) for block in text.split(";")]


def parse_param(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"--param expects key=value, got {text!r}")
    return key.strip(), value.strip()


def _common(settings: Settings) -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, default=None, help="grid points per dimension")
    common.add_argument(
        "--vi-tol", type=float, default=None, help=f"VI residual tolerance ({settings.residual_tol:g})"
    )
    common.add_argument(
        "--multistart", type=int, default=None, help=f"VI starts per dimension ({settings.multistart})"
    )
    common.add_argument("--threads", type=int, default=None, help=f"worker threads ({settings.threads})")
    common.add_argument("--report", type=Path, default=None, help="write the JSON report here")
    common.add_argument("--log-level", default=None, help=f"logging level ({settings.log_level})")
    return common


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    common = _common(settings)
    parser = _ArgumentParser(
        prog="quasi-eq", description="Quasi-potential multi-leader multi-follower games."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("check", parents=[common], help="potential structure and feasibility checks")
    check.add_argument("instance", type=Path)
    check.add_argument("--samples", type=int, default=64)
    check.add_argument("--tol", type=float, default=1e-6)

    followers = commands.add_parser("followers", parents=[common], help="enumerate S(x)")
    followers.add_argument("instance", type=Path)
    followers.add_argument("--x", required=True, type=parse_vector)

    solve = commands.add_parser("solve", parents=[common], help="solve the reduced problem")
    solve.add_argument("instance", type=Path)
    mode = solve.add_mutually_exclusive_group()
    mode.add_argument("--pessimistic", action="store_true")
    mode.add_argument("--implicit", action="store_true")
    solve.add_argument("--no-refine", action="store_true")
    solve.add_argument("--scan-csv", type=Path, default=None)

    verify = commands.add_parser("verify", parents=[common], help="certify a candidate profile")
    verify.add_argument("instance", type=Path)
    verify.add_argument("--x", required=True, type=parse_vector)
    verify.add_argument("--y", required=True, type=parse_blocks)
    verify.add_argument("--eps", type=float, default=1e-9)
    check_kind = verify.add_mutually_exclusive_group()
    check_kind.add_argument("--pessimistic", action="store_true")
    check_kind.add_argument("--local", action="store_true")
    verify.add_argument("--radius", type=float, default=0.05)
    verify.add_argument("--samples", type=int, default=11)
    verify.add_argument("--stationarity", action="store_true")
    verify.add_argument("--tol", type=float, default=1e-4, help="B-stationarity tolerance")

    nonexist = commands.add_parser("nonexist", parents=[common], help="grid nonexistence certificate")
    nonexist.add_argument("instance", type=Path)
    nonexist.add_argument("--eps", type=float, default=1e-9)
    nonexist.add_argument("--csv", type=Path, default=None)

    gallery = commands.add_parser("gallery", parents=[common], help="build a gallery instance")
    gallery.add_argument("name", choices=sorted(GALLERY))
    gallery.add_argument("--param", action="append", default=[], type=parse_param)
    gallery.add_argument("--emit", type=Path, default=None)
    return parser


def _load(path: Path) -> GameInstance:
    return load_instance(path.read_text())


def _finish(args, data: dict[str, Any], ok: bool) -> int:
    if args.report is not None:
        reports.write_json(data, args.report)
    return EXIT_OK if ok else EXIT_VERDICT_FALSE


def _cmd_check(args, settings: Settings) -> int:
    g = _load(args.instance)
    vi = settings.vi_config(residual_tol=args.vi_tol, multistart=args.multistart)
    checks = [probe_feasible_region(g, args.grid or CHECK_GRID, vi)]
    checks.append(check_potential_existence(g, args.samples, args.tol))
    if g.is_raw:
        print(f"{g.name}: per-leader couplings, not a quasi-potential instance")
    elif g.pi is not None:
        checks.append(check_gradient_identity(g, args.samples, args.tol))
    elif checks[-1].passed:
        potential = construct_potential(g, args.samples, args.tol)
        checks.append(check_gradient_identity(g, args.samples, 10 * args.tol, potential=potential))
    print(
        reports.table(
            [(c.name, "pass" if c.passed else "FAIL", c.max_deviation, c.tol, c.samples) for c in checks],
            ["check", "result", "max deviation", "tol", "samples"],
        )
    )
    ok = all(c.passed for c in checks)
    return _finish(args, {"instance": g.name, "checks": checks, "pass": ok}, ok)


def _cmd_followers(args, settings: Settings) -> int:
    g = _load(args.instance)
    vi = settings.vi_config(residual_tol=args.vi_tol, multistart=args.multistart)
    solutions = enumerate_solutions(g, args.x, vi)
    print(
        reports.table(
            [
                (k + 1, reports.fmt_vector(w), r)
                for k, (w, r) in enumerate(zip(solutions.solutions, solutions.residuals))
            ],
            ["#", "w", "residual"],
        )
    )
    print(
        f"exhaustive: {solutions.exhaustive} "
        f"({solutions.visited} of {solutions.starts} starts visited, {solutions.failures} failed)"
    )
    return _finish(args, solutions.to_dict(), True)


def _cmd_solve(args, settings: Settings) -> int:
    g = _load(args.instance)
    vi = settings.vi_config(residual_tol=args.vi_tol, multistart=args.multistart)
    cfg = settings.solve_config(vi, grid=args.grid, threads=args.threads, refine=not args.no_refine)
    solver = solve_p_pessimistic if args.pessimistic else solve_p_implicit if args.implicit else solve_p_quasi
    report = solver(g, cfg)
    if args.scan_csv is not None:
        write_scan_csv(report, args.scan_csv)
    print(
        reports.key_values(
            [
                ("instance", report.instance),
                ("mode", report.mode),
                ("status", report.status),
                ("x", reports.fmt_vector(report.x)),
                ("w", reports.fmt_vector(report.w)),
                ("value", report.value),
                ("display value", report.display_value),
                ("residual", report.residual),
                ("exhaustive", report.exhaustive),
            ]
        )
    )
    return _finish(args, report.to_dict(), True)


def _cmd_verify(args, settings: Settings) -> int:
    g = _load(args.instance)
    vi = settings.vi_config(residual_tol=args.vi_tol, multistart=args.multistart)
    cfg = settings.verify_config(vi, threads=args.threads)
    results: dict[str, Any] = {}
    if args.local:
        results["local"] = verify_local(g, args.x, args.y, args.radius, args.eps, args.samples, cfg)
    elif args.pessimistic:
        grid = args.grid or VERIFY_GRID
        results["pessimistic"] = verify_pessimistic(g, args.x, args.y, args.eps, grid, cfg)
    else:
        results["global"] = verify_global(g, args.x, args.y, args.eps, args.grid or VERIFY_GRID, cfg)
    if args.stationarity:
        stationarity = StationarityConfig(tol=args.tol)
        results["stationarity"] = check_nash_b_stationarity(g, args.x, args.y, stationarity)

    rows = []
    for kind, report in results.items():
        if kind == "stationarity":
            rows.append((kind, "-", report.min_quotient, report.verdict))
            continue
        for gap in report.leaders:
            rows.append((kind, gap.leader, gap.gap, gap.gap <= report.eps))
    print(reports.table(rows, ["check", "leader", "gap / min quotient", "ok"]))
    ok = all(report.verdict for report in results.values())
    return _finish(args, {"instance": g.name, "verdict": ok, **results}, ok)


def _cmd_nonexist(args, settings: Settings) -> int:
    g = _load(args.instance)
    vi = settings.vi_config(residual_tol=args.vi_tol, multistart=args.multistart)
    report = certify_nonexistence_on_grid(
        g, args.grid or NONEXIST_GRID, args.eps, settings.verify_config(vi, threads=args.threads)
    )
    if args.csv is not None:
        write_nonexistence_csv(report, args.csv, g.follower.dim)
    print(report.statement)
    print(
        reports.key_values(
            [
                ("delta*", report.delta_star),
                ("argmin x", reports.fmt_vector(report.argmin_x or ())),
                ("candidates", report.candidates),
            ]
        )
    )
    return _finish(args, report.to_dict(), report.exists_on_grid)


def _cmd_gallery(args, settings: Settings) -> int:
    g = build_gallery(args.name, dict(args.param))
    text = dump_instance(g)
    if args.emit is None:
        sys.stdout.write(text)
    else:
        args.emit.write_text(text)
        print(f"wrote {g.name} to {args.emit}")
    return _finish(args, {"instance": g.name, "params": dict(args.param)}, True)


COMMANDS = {
    "check": _cmd_check,
    "followers": _cmd_followers,
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "nonexist": _cmd_nonexist,
    "gallery": _cmd_gallery,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv(find_dotenv(usecwd=True))
    try:
        settings = Settings()
        args = build_parser(settings).parse_args(argv)
        logging.basicConfig(
            level=(args.log_level or settings.log_level).upper(),
            stream=sys.stderr,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.threads is not None:
            settings = settings.model_copy(update={"threads": args.threads})
        return COMMANDS[args.command](args, settings)
    except (QuasiEquilibriaError, OSError, ValueError) as exc:
        print(f"quasi-eq: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
