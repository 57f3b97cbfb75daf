"""Named property suites for the ``verify`` command.

A suite expands a :class:`SuiteScale` into independent case dicts and checks
each one, returning ``None`` on success or a counterexample dict. Cases are
plain data so they can be shipped to worker processes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable

from .algorithms import (
    QuantizationSpec,
    behavior_from_name,
    equal_neighbor_update,
    mean_value_update,
    midpoint_update,
    quantized_amortized_midpoint,
    safety_check,
)
from .dynamics import (
    fig1_mix_schedule,
    partially_rooted_schedule,
    random_nonsplit_schedule,
    random_rooted,
    random_rooted_schedule,
    resiliency_window,
    round_rng,
)
from .engine import (
    ExecutionConfig,
    Horizon,
    contraction_series,
    delta,
    run,
    verify_trace,
)
from .graph import format_edge_list, is_nonsplit, product_of
from .numeric import format_value


@dataclass(frozen=True)
class SuiteScale:
    max_n: int = 16
    cases: int = 100
    seed: int = 0
    behavior: str | None = None


def _random_values(rng, n: int, denom: int = 1000) -> list[Fraction]:
    return [Fraction(rng.randint(0, denom), denom) for _ in range(n)]


def _fmt(xs) -> list[str]:
    return [format_value(x) for x in xs]


# -- graph-products --------------------------------------------------------------------

def _products_cases(scale: SuiteScale) -> list[dict]:
    return [{"n": n, "i": i, "seed": scale.seed}
            for n in range(2, scale.max_n + 1) for i in range(scale.cases)]


def _products_check(case: dict) -> dict | None:
    n = case["n"]
    rng = round_rng(case["seed"], "products", n, case["i"])
    graphs = [random_rooted(n, rng, rng.choice([0.0, 0.0, 0.05, 0.2])) for _ in range(n - 1)]
    if is_nonsplit(product_of(graphs)):
        return None
    return {**case, "graphs": [format_edge_list(g) for g in graphs]}


# -- safety -----------------------------------------------------------------------------

def _safety_cases(scale: SuiteScale) -> list[dict]:
    return [{"i": i, "seed": scale.seed, "max_size": scale.max_n} for i in range(scale.cases)]


def _safety_check(case: dict) -> dict | None:
    rng = round_rng(case["seed"], "safety", case["i"])
    size = rng.randint(1, case["max_size"])
    vals = _random_values(rng, size)
    if rng.random() < 0.5:
        vals += rng.choices(vals, k=rng.randint(0, size))
    n = rng.randint(len(vals), max(len(vals), case["max_size"]))
    lo, hi = min(vals), max(vals)
    rho = Fraction(1, n)
    bad = []
    if not safety_check(rho, lo, hi, equal_neighbor_update(vals)):
        bad.append("equal-neighbor")
    if not safety_check(rho, lo, hi, mean_value_update(vals)):
        bad.append("mean-value")
    if not safety_check(Fraction(1, 2), lo, hi, midpoint_update(lo, hi)):
        bad.append("midpoint")
    return {**case, "n": n, "values": _fmt(vals), "violations": bad} if bad else None


# -- contraction ------------------------------------------------------------------------

_CONTRACTION_RULES = ("midpoint", "mean-value", "equal-neighbor", "third-point")


def _contraction_cases(scale: SuiteScale) -> list[dict]:
    rules = (scale.behavior,) if scale.behavior else _CONTRACTION_RULES
    return [{"rule": r, "i": i, "seed": scale.seed, "max_n": min(scale.max_n, 12)}
            for r in rules for i in range(scale.cases)]


def _contraction_check(case: dict) -> dict | None:
    rng = round_rng(case["seed"], "contraction", case["rule"], case["i"])
    rounds = 50 if case["rule"] != "third-point" else 30
    if case["rule"] == "third-point":
        n, schedule = 2, fig1_mix_schedule(rng.randrange(2**32))
    else:
        n = rng.randint(2, max(2, case["max_n"]))
        schedule = random_nonsplit_schedule(n, rng.randrange(2**32), rng.uniform(0, 0.3))
    b = behavior_from_name(case["rule"], n)
    x0 = _random_values(rng, n)
    if delta(x0) == 0:
        x0[0], x0[-1] = Fraction(0), Fraction(1)
    trace = run(ExecutionConfig(b, schedule, x0, horizon=Horizon("fixed", rounds)))
    ratios = contraction_series(trace, 1)
    if case["rule"] == "third-point":
        ok = all(r == Fraction(1, 3) for r in ratios)
    else:
        ok = all(r <= 1 - b.rho for r in ratios)
    if ok:
        return None
    return {**case, "n": n, "x0": _fmt(x0), "schedule": schedule.describe(), "ratios": _fmt(ratios)}


# -- amortized-bounds --------------------------------------------------------------------

_AMORTIZED_RULES = ("midpoint", "mean-value")
_EPSILONS = ("1/10", "1/100", "1/1000")


def _amortized_cases(scale: SuiteScale) -> list[dict]:
    ns = [n for n in (3, 5, 8, 16) if n <= scale.max_n]
    rules = (scale.behavior,) if scale.behavior else _AMORTIZED_RULES
    return [{"rule": r, "n": n, "epsilon": e, "i": i, "seed": scale.seed}
            for r in rules for n in ns for e in _EPSILONS for i in range(scale.cases)]


def _amortized_check(case: dict) -> dict | None:
    n = case["n"]
    rng = round_rng(case["seed"], "amortized", case["rule"], n, case["epsilon"], case["i"])
    b = behavior_from_name(f"amortized {case['rule']}", n)
    schedule = random_rooted_schedule(n, rng.randrange(2**32))
    x0 = _random_values(rng, n)
    cfg = ExecutionConfig(b, schedule, x0, epsilon=Fraction(case["epsilon"]))
    trace = run(cfg)
    report = verify_trace(trace, cfg)
    macro_ok = all(r <= 1 - b.rho for r in contraction_series(trace, b.macro_length))
    if report.passed and macro_ok:
        return None
    return {**case, "x0": _fmt(x0), "schedule": schedule.describe(),
            "report": report.to_dict(), "macro_contraction_ok": macro_ok}


# -- quantized ---------------------------------------------------------------------------

def quantized_recurrence_bound(ell: int, Q: int) -> Fraction:
    half = Fraction(1, 2**ell)
    return half + Fraction(2, Q) * (1 - half)


def _quantized_cases(scale: SuiteScale) -> list[dict]:
    return [{"Q": Q, "n": n, "i": i, "seed": scale.seed}
            for Q in (4, 10, 64) for n in (3, 4, 8) if n <= scale.max_n
            for i in range(scale.cases)]


def _quantized_check(case: dict) -> dict | None:
    n, Q = case["n"], case["Q"]
    rng = round_rng(case["seed"], "quantized", Q, n, case["i"])
    b = quantized_amortized_midpoint(n, QuantizationSpec(Q))
    schedule = random_rooted_schedule(n, rng.randrange(2**32), rng.choice([None, 0.0]))
    x0 = [Fraction(rng.randint(0, Q), Q) for _ in range(n)]
    cfg = ExecutionConfig(b, schedule, x0, epsilon=Fraction(1, Q))
    trace = run(cfg)
    report = verify_trace(trace, cfg)
    K = b.macro_length
    recurrence_ok = all(
        trace.deltas[ell * K] <= quantized_recurrence_bound(ell, Q)
        for ell in range(trace.rounds // K + 1))
    if report.passed and recurrence_ok:
        return None
    return {**case, "x0": _fmt(x0), "schedule": schedule.describe(),
            "report": report.to_dict(), "recurrence_ok": recurrence_ok}


# -- resiliency ---------------------------------------------------------------------------

_RESILIENCY_PAIRS = ((7, 4), (9, 3), (13, 5))
RESILIENCY_SCENARIOS = ("partial", "estimate")


def _resiliency_cases(scale: SuiteScale) -> list[dict]:
    return [{"n": n, "N": N, "scenario": sc, "i": i, "seed": scale.seed}
            for n, N in _RESILIENCY_PAIRS if n <= scale.max_n
            for sc in RESILIENCY_SCENARIOS for i in range(scale.cases)]


def resiliency_run(n: int, N: int, seed: int, x0, scenario: str = "partial",
                   epsilon: Fraction = Fraction(1, 100), max_windows: int = 256,
                   density: float = 0.0):
    """Amortized midpoint under one of the two degraded settings.

    ``partial``: macro-rounds of ``n - 1`` rounds on a partially-rooted
    schedule with ``N - 1`` rooted graphs per block. ``estimate``: every graph
    rooted, but macro-rounds of ``N - 1`` rounds. Either way every window of
    ``L`` macro-rounds spans at least ``n - 1`` rooted graphs.

    ``density`` is the extra-edge density of the generated graphs; the
    default 0 gives the sparsest, slowest schedules. The horizon is a whole
    number of windows, doubled until the spread is at
    most ``epsilon`` or ``max_windows`` is reached.
    """
    if scenario == "partial":
        b = behavior_from_name("amortized midpoint", n)
        schedule = partially_rooted_schedule(n, N, seed, density)
    elif scenario == "estimate":
        b = behavior_from_name("amortized midpoint", n, N)
        schedule = random_rooted_schedule(n, seed, density)
    else:
        raise ValueError(f"unknown resiliency scenario {scenario!r}")
    L = resiliency_window(n, N)
    window = L * b.macro_length
    windows = 4
    while True:
        cfg = ExecutionConfig(b, schedule, x0, epsilon=epsilon,
                              horizon=Horizon("fixed", windows * window))
        trace = run(cfg)
        if trace.deltas[-1] <= epsilon or windows >= max_windows:
            return trace, L, window
        windows *= 2


def _resiliency_check(case: dict) -> dict | None:
    n, N = case["n"], case["N"]
    rng = round_rng(case["seed"], "resiliency", n, N, case["scenario"], case["i"])
    x0 = _random_values(rng, n)
    trace, L, window = resiliency_run(n, N, rng.randrange(2**32), x0, case["scenario"])
    bound = 1 - Fraction(1, 2**L)
    ratios = contraction_series(trace, window)
    reached = trace.deltas[-1] <= Fraction(1, 100)
    if reached and all(r <= bound for r in ratios):
        return None
    return {**case, "x0": _fmt(x0), "L": L, "ratios": _fmt(ratios), "reached_epsilon": reached}


SuiteFn = tuple[Callable[[SuiteScale], list[dict]], Callable[[dict], "dict | None"]]

SUITES: dict[str, SuiteFn] = {
    "graph-products": (_products_cases, _products_check),
    "safety": (_safety_cases, _safety_check),
    "contraction": (_contraction_cases, _contraction_check),
    "amortized-bounds": (_amortized_cases, _amortized_check),
    "quantized": (_quantized_cases, _quantized_check),
    "resiliency": (_resiliency_cases, _resiliency_check),
}


def check_case(suite: str, case: dict) -> dict | None:
    return SUITES[suite][1](case)


def check_batch(suite: str, cases: list[dict]) -> list[dict]:
    return [c for c in (check_case(suite, case) for case in cases) if c is not None]


def suite_cases(suite: str, scale: SuiteScale) -> list[dict]:
    if suite not in SUITES:
        raise KeyError(suite)
    return SUITES[suite][0](scale)


def summarize(suite: str, scale: SuiteScale, total: int, failures: list[dict]) -> dict[str, Any]:
    return {"suite": suite, "scale": dataclasses.asdict(scale),
            "cases": total, "failures": len(failures), "passed": not failures,
            "counterexamples": failures[:20]}
