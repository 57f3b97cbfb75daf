"""Command-line harness: ``simulate``, ``verify``, ``sweep`` and ``adversary``.

Exit codes: 0 pass, 1 verification failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .algorithms import ConfigurationError
from .dynamics import (
    clustered_rooted,
    default_rooted_sampler,
    fig1_graph,
    greedy_adversary,
    resiliency_window,
)
from .engine import (
    contraction_series,
    decision_round,
    run,
    trace_summary,
    verify_trace,
    write_summary_json,
    write_trace_csv,
)
from .graph import GraphError, save_edge_list
from .numeric import format_value, to_fraction
from .runspec import RunSpec, build_behavior, build_config
from .suites import SUITES, SuiteScale, check_batch, suite_cases, summarize

logger = logging.getLogger("amortized_consensus")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
WORKERS_ENV = "AMORTCONS_WORKERS"
SWEEP_AXES = ("n", "epsilon", "Q", "N")


class UsageError(Exception):
    pass


# -- helpers ----------------------------------------------------------------------------

def worker_count(requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer") from None


def fan_out(fn: Callable, tasks: Sequence[tuple], workers: int) -> list:
    """Apply ``fn(*task)`` to every task, in a process pool when ``workers > 1``."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _parse_json_or(text: str, fallback: Callable[[str], Any]) -> Any:
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad JSON {text!r}: {exc}") from None
    return fallback(text)


def _parse_horizon(text: str) -> dict[str, Any]:
    def plain(t: str) -> dict[str, Any]:
        kind, _, rounds = t.partition(":")
        out: dict[str, Any] = {"kind": kind}
        if rounds:
            out["rounds"] = int(rounds)
        return out
    return _parse_json_or(text, plain)


def _parse_values(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


SPEC_FLAGS: dict[str, Callable[[str], Any]] = {
    "behavior": str,
    "n": int,
    "N": int,
    "epsilon": str,
    "Q": int,
    "rounding": str,
    "schedule": lambda t: _parse_json_or(t, lambda k: {"kind": k}),
    "seed": int,
    "mode": str,
    "horizon": _parse_horizon,
    "initial_values": _parse_values,
    "trace_csv": str,
    "summary_json": str,
}


def add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", help="JSON run-spec file; flags below override its fields")
    for name in SPEC_FLAGS:
        p.add_argument(f"--{name}", dest=name, default=None)


def spec_from_args(args: argparse.Namespace, defaults: dict[str, Any] | None = None) -> tuple[RunSpec, Path]:
    data: dict[str, Any] = dict(defaults or {})
    base_dir = Path(".")
    if args.spec:
        loaded = RunSpec.load(args.spec)
        data.update(loaded.to_dict())
        base_dir = Path(args.spec).parent
    for name, conv in SPEC_FLAGS.items():
        raw = getattr(args, name, None)
        if raw is not None:
            try:
                data[name] = conv(raw)
            except ValueError as exc:
                raise UsageError(f"--{name}: {exc}") from None
    return RunSpec.from_dict(data), base_dir


def _fmt_list(xs: Iterable[Any]) -> list[str]:
    return [format_value(x) for x in xs]


# -- simulate ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    spec, base_dir = spec_from_args(args)
    cfg = build_config(spec, base_dir)
    trace = run(cfg)
    report = verify_trace(trace, cfg)
    csv_path = Path(spec.trace_csv or "trace.csv")
    json_path = Path(spec.summary_json or "summary.json")
    for path in (csv_path, json_path):
        path.parent.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, csv_path)
    summary = trace_summary(trace, cfg, report)
    summary["run_spec"] = spec.to_dict()
    write_summary_json(summary, json_path)
    status = "PASS" if report.passed else "FAIL"
    print(f"{cfg.behavior.describe()} n={cfg.n}: {trace.outcome} at round "
          f"{trace.decision_round}, final spread {format_value(trace.deltas[-1])}, "
          f"verification {status}")
    if not report.passed:
        for name in report.failures():
            print(f"  {name}: {report.checks[name].detail}")
        return EXIT_FAIL
    return EXIT_OK


# -- verify -----------------------------------------------------------------------------

DEFAULT_SCALES = {
    "graph-products": SuiteScale(max_n=16, cases=1000),
    "safety": SuiteScale(max_n=16, cases=10_000),
    "contraction": SuiteScale(max_n=12, cases=100),
    "amortized-bounds": SuiteScale(max_n=16, cases=10),
    "quantized": SuiteScale(max_n=8, cases=100),
    "resiliency": SuiteScale(max_n=13, cases=10),
}


def run_suite(suite: str, scale: SuiteScale, workers: int = 1) -> dict[str, Any]:
    cases = suite_cases(suite, scale)
    chunk = max(1, len(cases) // (workers * 4)) if workers > 1 else len(cases) or 1
    tasks = [(suite, cases[i:i + chunk]) for i in range(0, len(cases), chunk)]
    failures = [f for batch in fan_out(check_batch, tasks, workers) for f in batch]
    return summarize(suite, scale, len(cases), failures)


def cmd_verify(args: argparse.Namespace) -> int:
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    base = DEFAULT_SCALES[args.suite]
    scale = SuiteScale(
        max_n=args.max_n if args.max_n is not None else base.max_n,
        cases=args.cases if args.cases is not None else base.cases,
        seed=args.seed,
        behavior=args.behavior,
    )
    result = run_suite(args.suite, scale, worker_count(args.workers))
    text = json.dumps(result, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK if result["passed"] else EXIT_FAIL


# -- sweep ------------------------------------------------------------------------------

SWEEP_COLUMNS = ["axis", "value", "n", "N", "epsilon", "Q", "L", "runs", "theoretical_round",
                 "measured_round_max", "measured_round_mean", "never_within_epsilon",
                 "max_macro_ratio", "mean_macro_ratio", "max_window_ratio"]


def _point_spec(spec: RunSpec, axis: str, value: str) -> RunSpec:
    if axis == "n":
        return spec.replace(n=int(value), initial_values=None)
    if axis == "epsilon":
        return spec.replace(epsilon=value)
    if axis == "Q":
        # the quantized target precision is 1/Q
        return spec.replace(Q=int(value), epsilon=f"1/{int(value)}", initial_values=None)
    return spec.replace(N=int(value))


def sweep_point(spec_dict: dict[str, Any], axis: str, value: str, runs: int,
                base_dir: str = ".") -> dict[str, Any]:
    spec = _point_spec(RunSpec.from_dict(spec_dict), axis, value)
    behavior = build_behavior(spec)
    n = spec.n
    N = spec.N if spec.N is not None else n
    # a partially-rooted schedule's own N sets the window when the estimate is exact
    N_window = spec.schedule.get("N", N) if spec.N is None else N
    L = resiliency_window(n, N_window) if n > 1 else 1
    try:
        theory = decision_round(behavior, spec.epsilon) if N == n else None
    except ConfigurationError:
        theory = None
    if theory is not None:
        start = cap = theory
    else:
        # no explicit bound under a wrong estimate: double the horizon from the
        # exact-estimate bound up to a cap scaled by 2^L
        start = decision_round(build_behavior(spec.replace(N=None)), spec.epsilon)
        cap = start * 2 ** (L - 1) * 10
    measured: list[int] = []
    misses = 0
    ratios: list[Fraction] = []
    window_ratios: list[Fraction] = []
    for i in range(runs):
        horizon = start
        while True:
            run_spec = spec.replace(seed=spec.seed + i, horizon={"kind": "fixed", "rounds": horizon})
            trace = run(build_config(run_spec, base_dir))
            if horizon >= cap or trace.first_round_within(spec.epsilon) is not None:
                break
            horizon = min(2 * horizon, cap)
        first = trace.first_round_within(spec.epsilon)
        if first is None:
            misses += 1
        else:
            measured.append(first)
        ratios.extend(to_fraction(r) for r in contraction_series(trace, behavior.macro_length))
        window_ratios.extend(to_fraction(r) for r in contraction_series(trace, L * behavior.macro_length))
    row = {
        "axis": axis, "value": value, "n": n, "N": N, "epsilon": format_value(to_fraction(spec.epsilon)),
        "Q": behavior.quantization.Q if behavior.quantization else "", "L": L, "runs": runs,
        "theoretical_round": "" if theory is None else theory,
        "measured_round_max": max(measured) if measured else "",
        "measured_round_mean": f"{sum(measured) / len(measured):.2f}" if measured else "",
        "never_within_epsilon": misses,
        "max_macro_ratio": f"{float(max(ratios)):.6f}" if ratios else "",
        "mean_macro_ratio": f"{float(sum(ratios) / len(ratios)):.6f}" if ratios else "",
        "max_window_ratio": f"{float(max(window_ratios)):.6f}" if window_ratios else "",
    }
    return row


def _axis_key(axis: str, value: str) -> Fraction:
    return to_fraction(value) if axis == "epsilon" else Fraction(int(value))


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.axis not in SWEEP_AXES:
        raise UsageError(f"unknown axis {args.axis!r}; choose from {', '.join(SWEEP_AXES)}")
    values = _parse_values(args.values)
    if not values:
        raise UsageError("--values needs at least one value")
    spec, base_dir = spec_from_args(args)
    for v in values:
        _point_spec(spec, args.axis, v)
    tasks = [(spec.to_dict(), args.axis, v, args.runs, str(base_dir)) for v in values]
    rows = fan_out(sweep_point, tasks, worker_count(args.workers))
    rows.sort(key=lambda r: _axis_key(args.axis, r["value"]))
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# -- adversary --------------------------------------------------------------------------

POOLS = ("clustered", "rooted", "fig1")


def longest_streak(ratios: Sequence[Any], threshold: float) -> int:
    best = cur = 0
    for r in ratios:
        cur = cur + 1 if r >= threshold else 0
        best = max(best, cur)
    return best


def cmd_adversary(args: argparse.Namespace) -> int:
    spec, _ = spec_from_args(args, defaults={"behavior": "equal-neighbor", "n": 8})
    if args.pool not in POOLS:
        raise UsageError(f"unknown pool {args.pool!r}; choose from {', '.join(POOLS)}")
    behavior = build_behavior(spec)
    n = spec.n
    x0 = ([to_fraction(v) for v in spec.initial_values] if spec.initial_values
          else [Fraction(0)] * (n - 1) + [Fraction(1)])
    if args.pool == "fig1":
        if n != 2:
            raise UsageError("the fig1 pool needs n=2")
        pool: Any = [fig1_graph(t) for t in ("G", "H_plus", "H_minus")]
    else:
        pool = clustered_rooted if args.pool == "clustered" else default_rooted_sampler()
    result = greedy_adversary(behavior, n, args.rounds, x0, candidate_pool=pool,
                              pool_size=args.pool_size, seed=spec.seed)

    out_dir = Path(args.out_dir)
    (out_dir / "graphs").mkdir(parents=True, exist_ok=True)
    files = []
    for k, g in enumerate(result.schedule.graph_list, 1):
        name = f"graphs/round_{k:04d}.txt"
        save_edge_list(g, out_dir / name, comment=f"adversary round {k}")
        files.append(name)

    compare = RunSpec.from_dict({
        **spec.to_dict(), "behavior": args.compare, "Q": None,
        "schedule": {"kind": "explicit", "graphs": files, "repeat": "none"},
        "initial_values": _fmt_list(x0), "mode": "rational",
        "horizon": {"kind": "fixed", "rounds": args.rounds},
        "trace_csv": None, "summary_json": None,
    })
    (out_dir / "replay_spec.json").write_text(json.dumps(compare.to_dict(), indent=2) + "\n")
    cmp_cfg = build_config(compare, out_dir)
    cmp_trace = run(cmp_cfg)
    K = cmp_cfg.behavior.macro_length
    macro = contraction_series(cmp_trace, K)
    bound = cmp_cfg.behavior.contraction
    compare_ok = all(r <= bound for r in macro)
    report = {
        "behavior": behavior.describe(),
        "n": n,
        "pool": args.pool,
        "pool_size": result.pool_size,
        "seed": result.seed,
        "ratios": _fmt_list(result.ratios),
        "threshold": args.threshold,
        "longest_streak_at_threshold": longest_streak(result.ratios, args.threshold),
        "compare_behavior": cmp_cfg.behavior.describe(),
        "compare_macro_ratios": _fmt_list(macro),
        "compare_bound": format_value(bound),
        "compare_within_bound": compare_ok,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"{behavior.describe()} n={n}: longest run of ratios >= {args.threshold}: "
          f"{report['longest_streak_at_threshold']} of {args.rounds}; "
          f"{report['compare_behavior']} max macro ratio "
          f"{format_value(max(macro)) if macro else '-'} (bound {report['compare_bound']})")
    return EXIT_OK if compare_ok else EXIT_FAIL


# -- entry point ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amortcons", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one execution, write trace CSV and summary JSON")
    add_spec_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run a named property suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--max_n", type=int)
    p.add_argument("--cases", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--behavior", help="restrict suites that cover several rules")
    p.add_argument("--workers", type=int)
    p.add_argument("--report", help="also write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="tabulate decision rounds over one parameter")
    add_spec_flags(p)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("adversary", help="greedy schedule search against one behavior")
    add_spec_flags(p)
    p.add_argument("--pool", default="clustered")
    p.add_argument("--pool_size", type=int, default=64)
    p.add_argument("--rounds", type=int, default=40)
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--compare", default="amortized midpoint")
    p.add_argument("--out_dir", default="adversary")
    p.set_defaults(func=cmd_adversary)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, GraphError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
