"""Command line front end.

Subcommands::

    fivenum convert  [INPUT] [-o OUT] [--method auto|shi|wan|bland|hozo|luo]
    fivenum table    [--q-max 60] [--format text|csv]
    fivenum weights  N [N ...] [--mode approx|exact]
    fivenum simulate --dist normal:50,17 [--grid default] [--reps T] [--seed S]
    fivenum simulate --histogram --n 5 [--reps 10000] [--seed S]

The exit status is 0 only when every row converted and no numeric failure
occurred.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

from .errors import DomainError, NumericFailure
from .estimators import (
    S1,
    S2,
    FiveNumberSummary,
    approx_j,
    approx_optimal_weight,
    coefficient_table,
    mean_bland,
    mean_luo,
    normalization_constants,
    render_coefficient_table,
    sd_kernel,
)
from .orderstats import (
    SampleSizeQ,
    j_of_n,
    order_stat_moments,
    optimal_weight_exact,
)
from .simulation import (
    DEFAULT_GRID,
    Normal,
    SimulationConfig,
    histogram_csv,
    histogram_scenario,
    parse_distribution,
    run_rmse,
)

SEED_ENV = "FIVENUM_SEED"
INPUT_COLUMNS = ("study_id", "n", "a", "q1", "m", "q3", "b")
OUTPUT_COLUMNS = ("study_id", "n", "scenario", "mean_est", "mean_method",
                  "sd_est", "sd_method", "weight_used")
ERROR_COLUMNS = ("line", "study_id", "reason")
METHODS = ("auto", "shi", "wan", "bland", "hozo", "luo")

_SD_WEIGHT = {"wan_sd_s1": 1.0, "wan_sd_s2": 0.0, "wan_sd_s3": 0.5}


def _fmt(x) -> str:
    return "" if x is None else format(float(x), ".9g")


class RowError(Exception):
    pass


# -- convert ---------------------------------------------------------------


@dataclass
class StudyRecord:
    """One input row.  ``iqr`` is an optional width used when the study
    reports the interquartile range but not the quartiles themselves."""

    study_id: str
    n: int
    a: Optional[float] = None
    q1: Optional[float] = None
    m: Optional[float] = None
    q3: Optional[float] = None
    b: Optional[float] = None
    iqr: Optional[float] = None

    def present(self) -> frozenset:
        return frozenset(k for k in ("a", "q1", "m", "q3", "b") if getattr(self, k) is not None)


def _parse_number(name: str, text: str) -> Optional[float]:
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise RowError(f"column {name}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise RowError(f"column {name}: value must be finite, got {text!r}")
    return value


def _parse_record(row: dict) -> StudyRecord:
    n_text = (row.get("n") or "").strip()
    try:
        n = int(n_text)
    except ValueError:
        raise RowError(f"column n: cannot parse {n_text!r} as an integer") from None
    if n < 1:
        raise RowError(f"column n: sample size must be positive, got {n}")
    values = {k: _parse_number(k, row.get(k) or "") for k in ("a", "q1", "m", "q3", "b")}
    iqr = _parse_number("iqr", row.get("iqr") or "") if "iqr" in row else None
    if iqr is not None and iqr < 0:
        raise RowError(f"column iqr: width must be non-negative, got {iqr}")
    return StudyRecord(row.get("study_id", ""), n, iqr=iqr, **values)


_PATTERNS = {
    frozenset("a m b".split()): "S1",
    frozenset("q1 m q3".split()): "S2",
    frozenset("a q1 m q3 b".split()): "S3",
}


def _scenario(rec: StudyRecord, override: Optional[str]) -> tuple[str, bool]:
    """Return the scenario label and whether quartiles are only known as a width."""
    present = rec.present()
    if rec.iqr is not None:
        if present & {"q1", "q3"}:
            raise RowError("give either q1/q3 or iqr, not both")
        rest = present - {"m"}
        if rest == {"a", "b"}:
            found = "S3"
        elif not rest:
            found = "S2"
        else:
            raise RowError(f"ambiguous pattern: iqr with {sorted(present)}")
        if override and override != found:
            raise RowError(f"scenario {override} requested but row only supports {found}")
        return found, True
    if override:
        needed = {"S1": {"a", "m", "b"}, "S2": {"q1", "m", "q3"},
                  "S3": {"a", "q1", "m", "q3", "b"}}[override]
        missing = needed - present
        if missing:
            raise RowError(f"scenario {override} needs {sorted(missing)}")
        return override, False
    try:
        return _PATTERNS[present], False
    except KeyError:
        raise RowError(f"ambiguous pattern of present fields: {sorted(present)}") from None


# scenario -> (sd estimator, mean estimator) for each method; missing keys
# mean the method does not apply to that scenario.
_DISPATCH = {
    "auto": {"S1": ("wan_sd_s1", None), "S2": ("wan_sd_s2", None), "S3": ("shi_sd", "luo_mean")},
    "shi": {"S3": ("shi_sd", "luo_mean")},
    "wan": {"S1": ("wan_sd_s1", None), "S2": ("wan_sd_s2", None), "S3": ("wan_sd_s3", "luo_mean")},
    "bland": {"S3": ("bland_sd", "bland_mean")},
    "hozo": {"S1": ("hozo_sd", None)},
    "luo": {"S3": ("shi_sd", "luo_mean")},
}


def convert_record(rec: StudyRecord, method: str = "auto",
                   scenario_override: Optional[str] = None) -> dict:
    """Estimate mean and SD for one study; raises :class:`RowError`."""
    scenario, width_only = _scenario(rec, scenario_override)
    try:
        sd_label, mean_label = _DISPATCH[method][scenario]
    except KeyError:
        raise RowError(f"method {method} does not apply to scenario {scenario}") from None

    n = rec.n
    mean_value = None
    try:
        if scenario == "S1":
            S1(rec.a, rec.m, rec.b, n)
            args = (rec.a, None, rec.m, None, rec.b)
        elif scenario == "S2":
            if width_only:
                args = (None, 0.0, rec.m, rec.iqr, None)
            else:
                S2(rec.q1, rec.m, rec.q3, n)
                args = (None, rec.q1, rec.m, rec.q3, None)
        elif width_only:
            if rec.a > rec.b:
                raise RowError(f"a={rec.a} exceeds b={rec.b}")
            if rec.m is not None and not rec.a <= rec.m <= rec.b:
                raise RowError(f"median {rec.m} lies outside [{rec.a}, {rec.b}]")
            if rec.iqr > rec.b - rec.a:
                raise RowError(f"iqr {rec.iqr} exceeds the range {rec.b - rec.a}")
            args = (rec.a, 0.0, rec.m, rec.iqr, rec.b)
        else:
            summary = FiveNumberSummary(rec.a, rec.q1, rec.m, rec.q3, rec.b, n)
            args = (rec.a, rec.q1, rec.m, rec.q3, rec.b)
            if mean_label == "luo_mean":
                mean_value = mean_luo(summary).value
            elif mean_label == "bland_mean":
                mean_value = mean_bland(summary).value
        if width_only and sd_label == "bland_sd":
            raise RowError("bland_sd needs the quartiles, not only the IQR width")
        if sd_label != "hozo_sd" and n < 2:
            raise RowError(f"{sd_label} needs n >= 2, got {n}")
        sd_value = float(sd_kernel(sd_label)(*args, n))
    except DomainError as exc:
        raise RowError(str(exc)) from None
    except NumericFailure as exc:
        raise RowError(f"numeric failure: {exc}") from None

    if sd_label == "shi_sd":
        weight = approx_optimal_weight(n)
    else:
        weight = _SD_WEIGHT.get(sd_label)
    return {
        "study_id": rec.study_id,
        "n": n,
        "scenario": scenario,
        "mean_est": _fmt(mean_value),
        "mean_method": mean_label if mean_value is not None else "",
        "sd_est": _fmt(sd_value),
        "sd_method": sd_label,
        "weight_used": _fmt(weight),
    }


def convert_stream(src, dst, errors, method: str = "auto",
                   scenario_override: Optional[str] = None) -> int:
    """Convert CSV rows from ``src`` to ``dst``; returns the number of bad rows.

    Rows that fail are written to ``errors`` as ``line,study_id,reason`` and
    never silently dropped.  Output order follows input order.
    """
    reader = csv.reader(src)
    out = csv.DictWriter(dst, OUTPUT_COLUMNS, lineterminator="\n")
    err = csv.writer(errors, lineterminator="\n")
    out.writeheader()
    err.writerow(ERROR_COLUMNS)
    header = next(reader, None)
    if header is None:
        return 0
    header = [h.strip() for h in header]
    missing = [c for c in INPUT_COLUMNS if c not in header]
    bad = 0
    for fields in reader:
        line = reader.line_num
        if not any(f.strip() for f in fields):
            continue
        study = fields[0] if fields else ""
        if missing:
            err.writerow([line, study, f"malformed header: missing columns {missing}"])
            bad += 1
            continue
        if len(fields) != len(header):
            err.writerow([line, study, f"expected {len(header)} cells, got {len(fields)}"])
            bad += 1
            continue
        row = dict(zip(header, fields))
        try:
            out.writerow(convert_record(_parse_record(row), method, scenario_override))
        except RowError as exc:
            err.writerow([line, row.get("study_id", ""), str(exc)])
            bad += 1
    if missing and bad == 0:
        err.writerow([1, "", f"malformed header: missing columns {missing}"])
        bad = 1
    return bad


# -- helpers ---------------------------------------------------------------


@contextmanager
def _open_out(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


@contextmanager
def _open_in(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdin
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            yield fh


def _default_seed() -> int:
    text = os.environ.get(SEED_ENV)
    if not text:
        return 0
    try:
        return int(text)
    except ValueError:
        raise SystemExit(f"fivenum: {SEED_ENV}={text!r} is not an integer") from None


def _parse_grid(text: str) -> tuple[int, ...]:
    if text == "default":
        return DEFAULT_GRID
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be 'default' or comma-separated integers, got {text!r}")


# -- subcommands -------------------------------------------------------------


def cmd_convert(args) -> int:
    errors_path = args.errors
    if errors_path is None and args.output not in (None, "-"):
        errors_path = args.output + ".errors.csv"
    with _open_in(args.input) as src, _open_out(args.output) as dst:
        if errors_path is None:
            buf = io.StringIO()
            bad = convert_stream(src, dst, buf, args.method, args.scenario)
            if bad:
                sys.stderr.write(buf.getvalue())
        else:
            with open(errors_path, "w", newline="", encoding="utf-8") as err:
                bad = convert_stream(src, dst, err, args.method, args.scenario)
    if bad:
        print(f"fivenum convert: {bad} row(s) failed", file=sys.stderr)
    return 1 if bad else 0


def cmd_table(args) -> int:
    with _open_out(args.output) as dst:
        dst.write(render_coefficient_table(coefficient_table(args.q_max), args.format))
    return 0


def cmd_weights(args) -> int:
    failures = 0
    with _open_out(args.output) as dst:
        w = csv.writer(dst, lineterminator="\n")
        w.writerow(["n", "w", "J", "mode"])
        for n in args.n:
            try:
                if args.mode == "approx":
                    if n < 1:
                        raise DomainError(f"n must be positive, got {n}")
                    j, weight = approx_j(n), approx_optimal_weight(n)
                else:
                    m = order_stat_moments(SampleSizeQ.from_n(n), args.method,
                                           reps=args.reps, seed=args.seed)
                    c = normalization_constants(n)
                    j, weight = j_of_n(m, c), optimal_weight_exact(m, c)
            except (DomainError, NumericFailure) as exc:
                print(f"fivenum weights: n={n}: {exc}", file=sys.stderr)
                failures += 1
                continue
            w.writerow([n, _fmt(weight), _fmt(j), args.mode])
    return 1 if failures else 0


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        if args.histogram:
            if args.n is None:
                raise DomainError("--histogram needs --n")
            reps = args.reps if args.reps is not None else 10_000
            r, i = histogram_scenario(args.n, reps, seed, args.convention)
            text = histogram_csv(r, i)
        else:
            if args.dist is None:
                raise DomainError("--dist is required unless --histogram is given")
            dist = parse_distribution(args.dist)
            reps = args.reps
            if reps is None:
                reps = 200_000 if isinstance(dist, Normal) else 100_000
            config = SimulationConfig(
                dist=dist,
                n_grid=args.grid,
                reps=reps,
                master_seed=seed,
                estimator_pair=tuple(args.pair.split(",")),
                sd_divisor=args.sd_divisor,
                convention=args.convention,
            )
            text = run_rmse(config, workers=args.workers).to_csv()
    except DomainError as exc:
        print(f"fivenum simulate: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"fivenum simulate: numeric failure: {exc}", file=sys.stderr)
        return 3
    with _open_out(args.output) as dst:
        dst.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fivenum",
        description="Estimate sample mean and SD from five-number-summary data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a CSV of study summaries")
    p.add_argument("input", nargs="?", help="input CSV (default: stdin)")
    p.add_argument("-o", "--output", help="output CSV (default: stdout)")
    p.add_argument("--errors", help="error sidecar CSV (default: OUTPUT.errors.csv or stderr)")
    p.add_argument("--method", choices=METHODS, default="auto")
    p.add_argument("--scenario", choices=("S1", "S2", "S3"), help="force a scenario")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("table", help="print the theta1/theta2 coefficient table")
    p.add_argument("--q-max", type=int, default=60)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("weights", help="optimal weights for given sample sizes")
    p.add_argument("n", type=int, nargs="+")
    p.add_argument("--mode", choices=("approx", "exact"), default="approx")
    p.add_argument("--method", choices=("quadrature", "monte_carlo"), default="quadrature",
                   help="moment route for --mode exact")
    p.add_argument("--reps", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("simulate", help="RMSE comparison or histogram scenario")
    p.add_argument("--dist", help="e.g. normal:50,17, lognormal:4,0.3, chisq:10, beta:9,4, weibull:2,35")
    p.add_argument("--grid", type=_parse_grid, default=DEFAULT_GRID,
                   help="'default' or comma-separated sample sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--pair", default="wan_sd_s3,shi_sd", help="existing,new estimator labels")
    p.add_argument("--sd-divisor", choices=("n_minus_1", "n"), default="n_minus_1")
    p.add_argument("--convention", choices=("auto", "paper_4q1", "interpolated"), default="auto")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--histogram", action="store_true")
    p.add_argument("--n", type=int, help="sample size for --histogram")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
