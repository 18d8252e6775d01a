"""Command-line interface.

``envtest test`` runs a global envelope test of independence on a
two-column CSV file. ``envtest simulate`` runs the rejection-rate harness.

Exit codes: 0 when the run completed without rejecting independence,
2 when independence is rejected at the requested level, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .harness import EXPERIMENTS, TESTS, ExperimentSpec, run_experiment
from .heatmap import render_svg
from .permutation import PermutationPlan, run_envelope_test
from .report import TestReport, write_atomic
from .statistics import BivariateSample, PixelGrid

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECT = 2


class CliError(Exception):
    """Problem with the command line or the input files."""


class _Parser(argparse.ArgumentParser):
    # usage errors share the generic error exit code
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _shape(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        a, b = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AxB with positive integers, got {text!r}") from None
    if a < 1 or b < 1:
        raise argparse.ArgumentTypeError(f"expected AxB with positive integers, got {text!r}")
    return a, b


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_pairs(path, categorical: bool = False, header: bool | None = None):
    """Read a two-column CSV file.

    Parameters
    ----------
    path : path-like
    categorical : bool
        Keep values as category labels. Columns whose labels are all
        integers are converted to integers so they sort numerically.
    header : bool, optional
        Whether the first row is a header. By default a first row is a
        header when it has a non-numeric field and, for categorical data,
        every later row is numeric.

    Returns
    -------
    x, y : numpy.ndarray
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(f.strip() for f in r)]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    except (UnicodeDecodeError, csv.Error) as exc:
        raise CliError(f"malformed CSV in {path}: {exc}") from exc
    rows = [[f.strip() for f in r] for r in rows]
    for lineno, r in enumerate(rows, start=1):
        if len(r) != 2:
            raise CliError(f"malformed CSV in {path}: row {lineno} has {len(r)} fields, expected 2")
    if not rows:
        raise CliError(f"malformed CSV in {path}: no data rows")
    if header is None:
        first_numeric = all(_is_number(f) for f in rows[0])
        if categorical:
            header = not first_numeric and all(_is_number(f) for r in rows[1:] for f in r)
        else:
            header = not first_numeric
    if header:
        rows = rows[1:]
    if not rows:
        raise CliError(f"malformed CSV in {path}: no data rows")
    columns = list(zip(*rows))
    if categorical:
        out = []
        for col in columns:
            try:
                out.append(np.array([int(v) for v in col]))
            except ValueError:
                out.append(np.array(col))
        return out[0], out[1]
    parsed = []
    for c, col in enumerate(columns):
        try:
            values = np.array([float(v) for v in col])
        except ValueError:
            bad = next(v for v in col if not _is_number(v))
            raise CliError(
                f"malformed CSV in {path}: non-numeric value {bad!r} in column {c + 1}"
                " (use --stat table for categorical data)"
            ) from None
        if not np.all(np.isfinite(values)):
            raise CliError(f"malformed CSV in {path}: non-finite value in column {c + 1}")
        parsed.append(values)
    return parsed[0], parsed[1]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="envtest", description="Global envelope tests of independence.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test independence of two columns of a CSV file")
    t.add_argument("csv", type=Path, help="two-column CSV file, optional header row")
    t.add_argument("--stat", choices=("cdf", "qq", "table"), default="qq")
    t.add_argument("--perms", type=_positive_int, default=9999, help="number of permutations")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--grid", type=_shape, default=(20, 20), metavar="GxG", help="cdf quantile grid")
    t.add_argument("--pixels", type=_shape, default=(32, 32), metavar="RxC", help="qq pixel grid")
    t.add_argument("--atom-x", type=float, nargs="+", default=(), metavar="V", help="atoms of x")
    t.add_argument("--atom-y", type=float, nargs="+", default=(), metavar="V", help="atoms of y")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--tails", choices=("shifted", "symmetric"), default="shifted")
    t.add_argument("--out", type=Path, help="write the JSON report here")
    t.add_argument("--heatmap", type=Path, help="write an SVG heatmap here")
    t.add_argument("--threads", type=_positive_int, help="worker threads (default: ENVTEST_THREADS or 1)")
    hdr = t.add_mutually_exclusive_group()
    hdr.add_argument("--header", dest="header", action="store_true", default=None)
    hdr.add_argument("--no-header", dest="header", action="store_false")

    m = sub.add_parser("simulate", help="estimate rejection rates by simulation")
    m.add_argument("--experiment", required=True, choices=sorted(EXPERIMENTS))
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--reps", type=int, default=1000)
    m.add_argument("--rho", type=float)
    m.add_argument("--outer-sd", type=float, default=4.0)
    m.add_argument("--tests", default=",".join(TESTS), help=f"comma-separated subset of {','.join(TESTS)}")
    m.add_argument("--alpha", type=float, default=0.01)
    m.add_argument("--perms", type=int, default=999)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", type=Path, help="write the CSV table here instead of stdout")
    m.add_argument("--threads", type=_positive_int)
    return parser


def _axis_quantiles(values: np.ndarray, centers: np.ndarray) -> list:
    return [float(v) for v in np.quantile(values, centers, method="inverted_cdf")]


def cli_test(args) -> int:
    categorical = args.stat == "table"
    if categorical and (args.atom_x or args.atom_y):
        raise CliError("--atom-x/--atom-y apply to numeric data only")
    x, y = read_pairs(args.csv, categorical=categorical, header=args.header)
    if categorical:
        sample = BivariateSample.categorical(x, y)
    else:
        sample = BivariateSample(x, y, atoms_x=tuple(args.atom_x), atoms_y=tuple(args.atom_y))
    plan = PermutationPlan(
        s=args.perms,
        seed=args.seed,
        statistic=args.stat,
        grid=args.grid,
        pixels=args.pixels,
        tails=args.tails,
        workers=args.threads,
    )
    result = run_envelope_test(sample, plan, alpha=args.alpha)
    geometry = result.field.geometry.to_dict()
    if isinstance(result.field.geometry, PixelGrid):
        geometry["x_quantiles"] = _axis_quantiles(sample.x, result.field.geometry.x_centers)
        geometry["y_quantiles"] = _axis_quantiles(sample.y, result.field.geometry.y_centers)
    report = TestReport.from_result(result, geometry)
    if args.out:
        write_atomic(args.out, report.to_json())
    if args.heatmap:
        write_atomic(args.heatmap, render_svg(report))
    flagged = sum(report.above) + sum(report.below)
    verdict = "reject" if report.reject else "accept"
    print(
        f"{report.method}: n = {report.n}, s = {report.s}, p = {report.p_value:.6g}, "
        f"alpha = {report.alpha:g}, {verdict} independence, {flagged} cells outside the envelope"
    )
    return EXIT_REJECT if report.reject else EXIT_OK


def cli_simulate(args) -> int:
    tests = tuple(t.strip() for t in args.tests.split(",") if t.strip())
    spec = ExperimentSpec(
        generator=EXPERIMENTS[args.experiment],
        n=args.n,
        reps=args.reps,
        tests=tests,
        alpha=args.alpha,
        s=args.perms,
        seed=args.seed,
        rho=args.rho,
        outer_sd=args.outer_sd,
        experiment=args.experiment,
    )
    table = run_experiment(spec, workers=args.threads).to_csv()
    if args.out:
        write_atomic(args.out, table)
    else:
        sys.stdout.write(table)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "test":
            return cli_test(args)
        return cli_simulate(args)
    except (CliError, ValueError) as exc:
        # library errors all derive from ValueError
        print(f"envtest: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
