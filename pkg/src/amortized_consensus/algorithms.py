"""Averaging update rules, their amortized versions, and quantization.

A behavior is a per-process state machine. Each round a process sends
``payload(state)`` along its outgoing edges and then calls
``step(state, received, k)`` with the payloads of its incoming neighbors
(its own included, thanks to the self-loop). Anonymous behaviors never see
who sent what: ``received`` is a bare list of payloads. Only the amortized
equal-neighbor and third-point behaviors piggyback sender ids inside the
payload itself, and they are flagged ``anonymous = False``.
"""

from __future__ import annotations

import enum
import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Hashable, Sequence

from .graph import CommunicationGraph
from .numeric import Value, leq

logger = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """Invalid behavior parameters or initial values."""


class PayloadKind(str, enum.Enum):
    SCALAR = "scalar"
    VALUE_SET = "value-set"
    ID_VALUE_SET = "id-value-set"
    MIN_MAX = "min-max"


# -- update rules ------------------------------------------------------------

def mean_value_update(values: Sequence[Value] | frozenset) -> Value:
    """Mean over the *set* of received values; duplicates count once."""
    distinct = set(values)
    if not distinct:
        raise ValueError("mean-value update needs at least one value")
    return sum(distinct) / len(distinct)


def equal_neighbor_update(values: Sequence[Value]) -> Value:
    """Mean over the multiset of received values, one term per incoming neighbor."""
    if not values:
        raise ValueError("equal-neighbor update needs at least one value")
    return sum(values) / len(values)


def midpoint_update(m: Value, M: Value) -> Value:
    if m > M:
        raise ValueError(f"midpoint update needs m <= M, got {m} > {M}")
    return (m + M) / 2


def third_point_update(x_own: Value, x_other: Value | None = None) -> Value:
    """Two-process rule: move two thirds of the way towards the other value, if heard."""
    if x_other is None:
        return x_own
    return x_own / 3 + 2 * x_other / 3


def safety_check(rho: Fraction | float, m: Value, M: Value, x_new: Value) -> bool:
    """Whether ``x_new`` stays at least ``rho * (M - m)`` inside ``[m, M]``.

    Exact for rationals; floats get an absolute slack of 1e-12.
    """
    lower = rho * M + (1 - rho) * m
    upper = (1 - rho) * M + rho * m
    return leq(lower, x_new) and leq(x_new, upper)


# -- quantization --------------------------------------------------------------

@dataclass(frozen=True)
class QuantizationSpec:
    Q: int
    mode: str = "down"

    def __post_init__(self) -> None:
        if self.Q < 1:
            raise ConfigurationError(f"grid denominator Q must be >= 1, got {self.Q}")
        if self.mode not in ("down", "up"):
            raise ConfigurationError(f"rounding mode must be 'down' or 'up', got {self.mode!r}")

    @property
    def step(self) -> Fraction:
        return Fraction(1, self.Q)

    def on_grid(self, v: Value) -> bool:
        if isinstance(v, float):
            t = v * self.Q
            return abs(t - round(t)) <= 1e-9
        return (v * self.Q).denominator == 1


def quantize(v: Value, spec: QuantizationSpec) -> Value:
    """Round ``v`` in [0, 1] down (or up) to a multiple of ``1/Q``.

    Floats within 1e-9 grid steps of a grid point snap to it first, so
    binary64 noise never pushes an on-grid midpoint to the neighbouring cell.
    """
    if not (0 <= v <= 1):
        raise ValueError(f"quantize expects a value in [0, 1], got {v}")
    Q = spec.Q
    if isinstance(v, float):
        t = v * Q
        r = round(t)
        if abs(t - r) <= 1e-9:
            k = r
        else:
            k = math.floor(t) if spec.mode == "down" else math.ceil(t)
        return k / Q
    t = v * Q
    k = math.floor(t) if spec.mode == "down" else math.ceil(t)
    return Fraction(k, Q)


# -- base rules ----------------------------------------------------------------

def _others(own: Value, values: Sequence[Value]) -> list[Value]:
    rest = list(values)
    rest.remove(own)
    return rest


def _plain_third_point(own: Value, values: Sequence[Value]) -> Value:
    rest = _others(own, values)
    if len(rest) > 1:
        raise ConfigurationError("third-point is defined for two processes only")
    return third_point_update(own, rest[0] if rest else None)


@dataclass(frozen=True)
class UpdateRule:
    """One named averaging rule.

    ``plain`` maps (own value, multiset of received values) to the new value.
    ``gathered`` maps an amortized accumulator (of kind ``payload``) plus the
    owner's id to the new value.
    """

    name: str
    payload: PayloadKind
    plain: Callable[[Value, Sequence[Value]], Value]
    gathered: Callable[[Any, int], Value]
    #: amortization needs sender ids
    needs_ids: bool = False


RULES: dict[str, UpdateRule] = {
    "mean-value": UpdateRule(
        "mean-value",
        PayloadKind.VALUE_SET,
        lambda own, vals: mean_value_update(vals),
        lambda acc, pid: mean_value_update(acc),
    ),
    "equal-neighbor": UpdateRule(
        "equal-neighbor",
        PayloadKind.ID_VALUE_SET,
        lambda own, vals: equal_neighbor_update(vals),
        lambda acc, pid: equal_neighbor_update([v for _, v in acc]),
        needs_ids=True,
    ),
    "midpoint": UpdateRule(
        "midpoint",
        PayloadKind.MIN_MAX,
        lambda own, vals: midpoint_update(min(vals), max(vals)),
        lambda acc, pid: midpoint_update(*acc),
    ),
    "third-point": UpdateRule(
        "third-point",
        PayloadKind.ID_VALUE_SET,
        _plain_third_point,
        lambda acc, pid: _plain_third_point(
            dict(acc)[pid], [v for _, v in sorted(acc, key=lambda e: e[0])]
        ),
        needs_ids=True,
    ),
}


def rule_rho(name: str, n: int) -> Fraction:
    """Safety coefficient of the named rule among ``n`` processes."""
    if name in ("mean-value", "equal-neighbor"):
        return Fraction(1, n)
    if name == "midpoint":
        return Fraction(1, 2)
    if name == "third-point":
        return Fraction(1, 3)
    raise ConfigurationError(f"unknown rule {name!r}")


# -- behaviors -----------------------------------------------------------------

class AlgorithmBehavior:
    """Common surface of plain and amortized behaviors."""

    name: str
    rule: UpdateRule
    n: int
    macro_length: int
    rho: Fraction
    contraction: Fraction
    quantization: QuantizationSpec | None
    payload_kind: PayloadKind
    anonymous: bool

    def initial_state(self, pid: int, x: Value) -> Hashable:
        raise NotImplementedError

    def payload(self, state: Any) -> Any:
        raise NotImplementedError

    def step(self, state: Any, received: Sequence[Any], k: int) -> Any:
        raise NotImplementedError

    def value(self, state: Any) -> Value:
        raise NotImplementedError

    @property
    def amortized(self) -> bool:
        return False

    def fires(self, k: int) -> bool:
        """Whether ``x`` is updated at the end of round ``k``."""
        return k % self.macro_length == 0

    def _finish(self, x: Value) -> Value:
        return quantize(x, self.quantization) if self.quantization else x

    def _check_initial(self, x: Value) -> None:
        if not (0 <= x <= 1):
            raise ConfigurationError(f"initial value {x} outside [0, 1]")
        if self.quantization and not self.quantization.on_grid(x):
            raise ConfigurationError(
                f"initial value {x} is not a multiple of 1/{self.quantization.Q}"
            )

    def describe(self) -> str:
        parts = []
        if self.amortized:
            parts.append(f"amortized({self.macro_length})")
        if self.quantization:
            parts.append(f"quantized({self.quantization.Q},{self.quantization.mode})")
        parts.append(self.rule.name)
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.describe()} n={self.n}>"


class PlainBehavior(AlgorithmBehavior):
    """An averaging algorithm: one update per round from the scalar values heard."""

    payload_kind = PayloadKind.SCALAR
    anonymous = True
    macro_length = 1

    def __init__(self, rule: UpdateRule | str, n: int,
                 quantization: QuantizationSpec | None = None) -> None:
        self.rule = RULES[rule] if isinstance(rule, str) else rule
        if n < 1:
            raise ConfigurationError("n must be >= 1")
        if self.rule.name == "third-point" and n != 2:
            raise ConfigurationError("third-point is defined for two processes only")
        self.n = n
        self.name = self.rule.name
        self.quantization = quantization
        self.rho = rule_rho(self.rule.name, n)
        self.contraction = Fraction(1, 3) if self.rule.name == "third-point" else 1 - self.rho
        if self.experimental:
            logger.warning("quantized %s is experimental: no decision bound is known", self.name)

    @property
    def experimental(self) -> bool:
        # only the quantized midpoint carries a correctness guarantee
        return self.quantization is not None and self.rule.name != "midpoint"

    def initial_state(self, pid: int, x: Value) -> Value:
        self._check_initial(x)
        return x

    def payload(self, state: Value) -> Value:
        return state

    def step(self, state: Value, received: Sequence[Value], k: int) -> Value:
        return self._finish(self.rule.plain(state, received))

    def value(self, state: Value) -> Value:
        return state


class AmortizedBehavior(AlgorithmBehavior):
    """Gather payloads for ``macro_length`` rounds, then apply the base rule once.

    State is ``(pid, x, acc)``; the accumulator is a frozenset of values, a
    frozenset of ``(id, value)`` pairs, or a ``(min, max)`` pair depending on
    the rule. After each update the accumulator restarts from the new value.
    """

    def __init__(self, base: PlainBehavior, macro_length: int) -> None:
        if macro_length < 1:
            raise ConfigurationError("macro_length must be >= 1")
        self.base = base
        self.rule = base.rule
        self.n = base.n
        self.name = f"amortized {base.name}"
        self.macro_length = macro_length
        self.quantization = base.quantization
        self.rho = base.rho
        self.contraction = base.contraction
        self.payload_kind = base.rule.payload
        self.anonymous = not base.rule.needs_ids
        self.experimental = base.experimental

    @property
    def amortized(self) -> bool:
        return True

    def _fresh(self, pid: int, x: Value) -> Any:
        kind = self.payload_kind
        if kind is PayloadKind.VALUE_SET:
            return frozenset((x,))
        if kind is PayloadKind.ID_VALUE_SET:
            return frozenset(((pid, x),))
        return (x, x)

    def initial_state(self, pid: int, x: Value) -> tuple:
        self._check_initial(x)
        return (pid, x, self._fresh(pid, x))

    def payload(self, state: tuple) -> Any:
        return state[2]

    def merge(self, received: Sequence[Any]) -> Any:
        if self.payload_kind is PayloadKind.MIN_MAX:
            return (min(m for m, _ in received), max(M for _, M in received))
        return frozenset().union(*received)

    def step(self, state: tuple, received: Sequence[Any], k: int) -> tuple:
        pid, x, _ = state
        acc = self.merge(received)
        if not self.fires(k):
            return (pid, x, acc)
        x_new = self._finish(self.rule.gathered(acc, pid))
        return (pid, x_new, self._fresh(pid, x_new))

    def value(self, state: tuple) -> Value:
        return state[1]


def make_plain(rule: str, n: int, quantization: QuantizationSpec | None = None) -> PlainBehavior:
    if rule not in RULES:
        raise ConfigurationError(f"unknown rule {rule!r}; expected one of {sorted(RULES)}")
    return PlainBehavior(RULES[rule], n, quantization)


def amortize(base: PlainBehavior, macro_length: int) -> AmortizedBehavior:
    return AmortizedBehavior(base, macro_length)


def quantized_amortized_midpoint(n: int, spec: QuantizationSpec,
                                 N: int | None = None) -> AmortizedBehavior:
    N = n if N is None else N
    return amortize(PlainBehavior("midpoint", n, spec), max(N - 1, 1))


_QUANT_RE = re.compile(r"quantized\(\s*(\d+)\s*(?:,\s*(down|up)\s*)?\)")


def behavior_from_name(descriptor: str, n: int, N: int | None = None) -> AlgorithmBehavior:
    """Parse e.g. ``"amortized quantized(10,down) midpoint"``.

    Tokens may be separated by spaces, commas outside parentheses, or ``+``.
    The amortized macro-round length is ``N - 1`` (``N`` defaults to ``n``).
    """
    text = descriptor.strip().lower()
    quant = None
    m = _QUANT_RE.search(text)
    if m:
        quant = QuantizationSpec(int(m.group(1)), m.group(2) or "down")
        text = text[: m.start()] + " " + text[m.end():]
    tokens = [t for t in re.split(r"[\s,+]+", text) if t]
    amortized = "amortized" in tokens
    names = [t for t in tokens if t != "amortized"]
    if len(names) != 1 or names[0] not in RULES:
        raise ConfigurationError(f"cannot parse behavior descriptor {descriptor!r}")
    N = n if N is None else N
    if N < 2 and amortized and n > 1:
        raise ConfigurationError("process-count estimate N must be >= 2")
    base = make_plain(names[0], n, quant)
    if amortized:
        return amortize(base, max(N - 1, 1))
    return base


# -- system round ----------------------------------------------------------------

def advance(behavior: AlgorithmBehavior, states: Sequence[Any],
            graph: CommunicationGraph, k: int) -> list[Any]:
    """One lock-step round: everybody sends, then everybody merges and updates."""
    payloads = [behavior.payload(s) for s in states]
    new_states = []
    for q, s in enumerate(states):
        mask = graph.in_masks[q]
        received = [payloads[p] for p in range(graph.n) if mask >> p & 1]
        new_states.append(behavior.step(s, received, k))
    return new_states
