"""Lock-step execution, decision rounds, metrics and trace verification."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from .algorithms import (
    AlgorithmBehavior,
    ConfigurationError,
    advance,
    safety_check,
)
from .dynamics import Schedule
from .graph import product_of
from .numeric import NumericMode, Value, convert, format_value, leq, to_fraction

logger = logging.getLogger(__name__)


def delta(x: Sequence[Value]) -> Value:
    """Spread ``max(x) - min(x)``."""
    if not x:
        raise ValueError("delta of an empty vector")
    return max(x) - min(x)


# -- decision rounds ------------------------------------------------------------

def _min_power_below(alpha: Fraction, eps: Fraction) -> int:
    """Smallest ``j >= 0`` with ``alpha**j <= eps``, i.e. ``ceil(log_{1/alpha}(1/eps))``."""
    j, power = 0, Fraction(1)
    while power > eps:
        power *= alpha
        j += 1
    return j


def _floor_log2(r: Fraction) -> int:
    """Largest integer ``j`` with ``2**j <= r`` for ``r >= 1``."""
    j = (r.numerator // r.denominator).bit_length() - 1
    while Fraction(2) ** (j + 1) <= r:
        j += 1
    return j


def quantized_full_round(macro_length: int, Q: int) -> int:
    """Round by which quantized amortized midpoint reaches ``1/Q``-agreement."""
    if Q < 3:
        raise ConfigurationError(f"the quantized bound needs Q >= 3, got Q={Q}")
    return macro_length * ((Q - 2).bit_length() - 1 + 2)


def quantized_relaxed_round(macro_length: int, Q: int, epsilon: Fraction) -> int:
    """Earlier round that suffices for a coarser precision ``epsilon > 2/Q``."""
    eps = to_fraction(epsilon)
    if not eps * Q > 2:
        raise ConfigurationError("the relaxed quantized bound needs epsilon > 2/Q")
    return macro_length * (_floor_log2(Fraction(Q - 2) / (Q * eps - 2)) + 1)


def decision_round(behavior: AlgorithmBehavior, epsilon: Value | str) -> int:
    """Round at which every process decides, from the behavior's convergence bound.

    Continuous rules: ``K * ceil(log_{1/alpha}(1/eps))`` with ``K`` the
    macro-round length and ``alpha`` the contraction rate (``1 - rho``, or
    1/3 for the two-process third-point rule). Quantized midpoint:
    ``K * (floor(log2(Q - 2)) + 2)``, or the relaxed bound when
    ``eps > 2/Q`` and it is earlier.
    """
    eps = to_fraction(epsilon)
    if eps <= 0:
        raise ConfigurationError("epsilon must be > 0")
    if not (0 < behavior.rho <= Fraction(1, 2)):
        raise ConfigurationError(f"safety coefficient {behavior.rho} outside (0, 1/2]")
    K = behavior.macro_length
    quant = behavior.quantization
    if quant is None:
        return K * _min_power_below(Fraction(behavior.contraction), eps)
    if behavior.rule.name != "midpoint":
        raise ConfigurationError(
            f"no decision bound is known for quantized {behavior.rule.name}"
        )
    if eps < Fraction(1, quant.Q):
        raise ConfigurationError(
            f"epsilon={epsilon} < 1/Q={Fraction(1, quant.Q)}: epsilon-agreement is "
            "impossible in general with values quantized to 1/Q"
        )
    full = quantized_full_round(K, quant.Q)
    if eps * quant.Q > 2:
        return min(full, quantized_relaxed_round(K, quant.Q, eps))
    return full


# -- configuration and traces --------------------------------------------------------

@dataclass(frozen=True)
class Horizon:
    """``fixed``: exactly ``rounds``; ``decision``: up to the decision round,
    capped by ``rounds`` (default ``cap_factor`` times the decision round)."""

    kind: str = "decision"
    rounds: int | None = None
    cap_factor: int = 10

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "decision"):
            raise ConfigurationError(f"unknown horizon policy {self.kind!r}")
        if self.kind == "fixed" and (self.rounds is None or self.rounds < 0):
            raise ConfigurationError("fixed horizon needs rounds >= 0")


@dataclass
class ExecutionConfig:
    behavior: AlgorithmBehavior
    schedule: Schedule
    initial_values: Sequence[Any]
    epsilon: Any = Fraction(1, 100)
    N: int | None = None
    horizon: Horizon = field(default_factory=Horizon)
    mode: NumericMode = NumericMode.RATIONAL

    def __post_init__(self) -> None:
        self.mode = NumericMode(self.mode)
        self.initial_values = tuple(convert(x, self.mode) for x in self.initial_values)
        n = len(self.initial_values)
        if n != self.schedule.n or n != self.behavior.n:
            raise ConfigurationError(
                f"size mismatch: {n} initial values, schedule n={self.schedule.n}, "
                f"behavior n={self.behavior.n}"
            )
        for x in self.initial_values:
            if not 0 <= x <= 1:
                raise ConfigurationError(f"initial value {x} outside [0, 1]")
        if to_fraction(self.epsilon) <= 0:
            raise ConfigurationError("epsilon must be > 0")

    @property
    def n(self) -> int:
        return len(self.initial_values)


@dataclass
class ExecutionTrace:
    values: list[tuple[Value, ...]]
    decisions: list[tuple[int, Value] | None]
    decision_round: int | None
    macro_length: int
    outcome: str
    note: str = ""

    @property
    def rounds(self) -> int:
        return len(self.values) - 1

    @property
    def n(self) -> int:
        return len(self.values[0])

    @property
    def deltas(self) -> list[Value]:
        return [delta(x) for x in self.values]

    @property
    def boundaries(self) -> list[int]:
        return list(range(self.macro_length, self.rounds + 1, self.macro_length))

    @property
    def decided(self) -> bool:
        return all(d is not None for d in self.decisions)

    def first_round_within(self, epsilon: Any) -> int | None:
        eps = to_fraction(epsilon)
        for k, d in enumerate(self.deltas):
            if leq(d, eps if not isinstance(d, float) else float(eps)):
                return k
        return None


def _resolve_decision_round(config: ExecutionConfig) -> tuple[int | None, str]:
    try:
        return decision_round(config.behavior, config.epsilon), ""
    except ConfigurationError as exc:
        if config.behavior.quantization and "impossible" in str(exc):
            raise
        return None, str(exc)


def run(config: ExecutionConfig) -> ExecutionTrace:
    """Simulate ``config`` round by round; every process decides at the decision round."""
    behavior = config.behavior
    D, note = _resolve_decision_round(config)
    hz = config.horizon
    if hz.kind == "fixed":
        total = hz.rounds
    else:
        if hz.rounds is not None:
            cap = hz.rounds
        elif D is not None:
            cap = hz.cap_factor * D
        else:
            raise ConfigurationError(f"run-to-decision needs a decision bound or a round cap: {note}")
        total = cap if D is None else min(cap, D)

    states = [behavior.initial_state(p + 1, x) for p, x in enumerate(config.initial_values)]
    values = [tuple(config.initial_values)]
    decisions: list[tuple[int, Value] | None] = [None] * config.n
    if D == 0:
        decisions = [(0, x) for x in values[0]]
    for k in range(1, total + 1):
        states = advance(behavior, states, config.schedule.graph(k), k)
        x = tuple(behavior.value(s) for s in states)
        values.append(x)
        if k == D:
            decisions = [(k, v) for v in x]

    if all(d is not None for d in decisions):
        outcome = "decided"
    else:
        outcome = "undecided-at-horizon"
        note = note or f"horizon of {total} rounds ended before decision round {D}"
        logger.info("run ended undecided: %s", note)
    return ExecutionTrace(values, decisions, D, behavior.macro_length, outcome, note)


def contraction_series(trace: ExecutionTrace, window: int) -> list[Value]:
    """``delta(x(k + window)) / delta(x(k))`` for ``k = 0, window, 2*window, ...``.

    A zero spread at the block start yields ratio 0.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    ds = trace.deltas
    out = []
    for k in range(0, trace.rounds - window + 1, window):
        out.append(0 if ds[k] == 0 else ds[k + window] / ds[k])
    return out


# -- verification ------------------------------------------------------------------------

@dataclass
class Check:
    passed: bool | None
    detail: str = ""


@dataclass
class VerificationReport:
    checks: dict[str, Check] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, c in self.checks.items() if c.passed is False]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "failures": self.failures(),
            "checks": {
                name: {"passed": c.passed, "detail": c.detail} for name, c in self.checks.items()
            },
        }


def _check_step_safety(trace: ExecutionTrace, config: ExecutionConfig) -> Check:
    behavior = config.behavior
    K = behavior.macro_length
    quant = behavior.quantization
    for b in trace.boundaries:
        a = b - K + 1
        macro = product_of(config.schedule.graphs(a, b))
        before, after = trace.values[a - 1], trace.values[b]
        for q in range(trace.n):
            heard = [before[p] for p in range(trace.n) if macro.in_masks[q] >> p & 1]
            m, M = min(heard), max(heard)
            if quant is None:
                ok = safety_check(behavior.rho, m, M, after[q])
            else:
                ok = leq(m, after[q]) and leq(after[q], M)
            if not ok:
                kind = "range" if quant else f"rho={behavior.rho}"
                return Check(False, f"round {b}, process {q + 1}: {after[q]} violates "
                                    f"{kind} w.r.t. [{m}, {M}]")
    what = "averaging range" if quant else f"rho={behavior.rho} safety"
    return Check(True, f"{what} held at {len(trace.boundaries)} update rounds")


def verify_trace(trace: ExecutionTrace, config: ExecutionConfig) -> VerificationReport:
    """Check agreement, validity, termination, envelope monotonicity, safety and,
    for quantized runs, grid closure and the two-value property."""
    report = VerificationReport()
    checks = report.checks
    eps = to_fraction(config.epsilon)
    x0 = trace.values[0]
    lo, hi = min(x0), max(x0)

    decided = [d[1] for d in trace.decisions if d is not None]
    if trace.decided:
        checks["termination"] = Check(True, f"all decided at round {trace.decision_round}")
    else:
        checks["termination"] = Check(False, f"{len(decided)}/{trace.n} decided; {trace.note}")

    if trace.decided:
        spread = delta(decided)
        tol = float(eps) if isinstance(spread, float) else eps
        ok = leq(spread, tol)
        checks["epsilon_agreement"] = Check(
            ok, f"decision spread {format_value(spread)} vs epsilon {format_value(eps)}"
        )
    else:
        checks["epsilon_agreement"] = Check(False, "not every process decided")

    bad = [(k, p) for k, x in enumerate(trace.values) for p, v in enumerate(x)
           if not (leq(lo, v) and leq(v, hi))]
    bad_dec = [v for v in decided if not (leq(lo, v) and leq(v, hi))]
    if bad or bad_dec:
        checks["validity"] = Check(False, f"values outside initial range at {bad[:3]} "
                                          f"decisions {bad_dec[:3]}")
    else:
        checks["validity"] = Check(True, f"all values within [{format_value(lo)}, {format_value(hi)}]")

    mins = [min(x) for x in trace.values]
    maxs = [max(x) for x in trace.values]
    broken = [k for k in range(1, len(mins))
              if not (leq(mins[k - 1], mins[k]) and leq(maxs[k], maxs[k - 1]))]
    checks["monotone_envelope"] = Check(
        not broken, f"envelope widened at rounds {broken[:5]}" if broken else "min up, max down"
    )

    checks["safety"] = _check_step_safety(trace, config)

    quant = config.behavior.quantization
    if quant is not None:
        off = [(k, p) for k, x in enumerate(trace.values) for p, v in enumerate(x)
               if not quant.on_grid(v)]
        checks["grid_closure"] = Check(not off, f"off-grid values at {off[:3]}" if off
                                       else f"all values multiples of 1/{quant.Q}")
        full = None
        if config.behavior.rule.name == "midpoint" and quant.Q >= 3:
            full = quantized_full_round(config.behavior.macro_length, quant.Q)
        if trace.decided and full is not None and trace.decision_round >= full:
            distinct = sorted(set(decided))
            step = Fraction(1, quant.Q)
            adjacent = len(distinct) < 2 or leq(abs(distinct[1] - distinct[0]), step) and \
                leq(step, abs(distinct[1] - distinct[0]))
            ok = len(distinct) <= 2 and adjacent
            checks["two_set"] = Check(ok, f"decided values {[format_value(v) for v in distinct]}")
        else:
            checks["two_set"] = Check(None, "not applicable before the full quantized bound")
    return report


# -- quantized fixpoints -------------------------------------------------------------------

@dataclass
class FixpointOutcome:
    converged: bool
    limits: tuple[Value, ...] | None
    macro_rounds: int
    history: list[tuple[Value, ...]]


def fixpoint_probe(config: ExecutionConfig, quiescence_window: int = 3,
                   cap: int = 1000) -> FixpointOutcome:
    """Run macro-round by macro-round until values stay put for ``quiescence_window``
    consecutive macro-rounds, or ``cap`` macro-rounds pass (inconclusive)."""
    behavior = config.behavior
    if behavior.quantization is None:
        raise ConfigurationError("fixpoint probing applies to quantized behaviors")
    K = behavior.macro_length
    states = [behavior.initial_state(p + 1, x) for p, x in enumerate(config.initial_values)]
    history = [tuple(config.initial_values)]
    streak = 0
    k = 0
    for ell in range(1, cap + 1):
        for _ in range(K):
            k += 1
            states = advance(behavior, states, config.schedule.graph(k), k)
        x = tuple(behavior.value(s) for s in states)
        streak = streak + 1 if x == history[-1] else 0
        history.append(x)
        if streak >= quiescence_window:
            return FixpointOutcome(True, x, ell, history)
    return FixpointOutcome(False, None, cap, history)


# -- export -----------------------------------------------------------------------------------

def write_trace_csv(trace: ExecutionTrace, path: str | Path) -> None:
    """Long-form ``round,process,value,decided`` rows, one per process per round."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "process", "value", "decided"])
        for k, x in enumerate(trace.values):
            for p, v in enumerate(x):
                d = trace.decisions[p]
                decided = d is not None and d[0] <= k
                writer.writerow([k, p + 1, format_value(v), int(decided)])


def trace_summary(trace: ExecutionTrace, config: ExecutionConfig,
                  report: VerificationReport | None = None) -> dict[str, Any]:
    K = trace.macro_length
    summary = {
        "behavior": config.behavior.describe(),
        "n": trace.n,
        "N": config.N if config.N is not None else trace.n,
        "epsilon": format_value(to_fraction(config.epsilon)),
        "mode": config.mode.value,
        "schedule": config.schedule.describe(),
        "rounds": trace.rounds,
        "macro_length": K,
        "decision_round": trace.decision_round,
        "outcome": trace.outcome,
        "note": trace.note,
        "decisions": [None if d is None else [d[0], format_value(d[1])] for d in trace.decisions],
        "delta": [format_value(d) for d in trace.deltas],
        "contraction_per_round": [format_value(r) for r in contraction_series(trace, 1)],
        "contraction_per_macro_round": [format_value(r) for r in contraction_series(trace, K)],
    }
    if report is not None:
        summary["verification"] = report.to_dict()
    return summary


def write_summary_json(summary: dict[str, Any], path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
