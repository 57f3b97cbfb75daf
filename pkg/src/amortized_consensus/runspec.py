"""Serializable run descriptions and their translation into engine objects."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .algorithms import AlgorithmBehavior, ConfigurationError, behavior_from_name, quantize
from .dynamics import (
    ExplicitSchedule,
    Schedule,
    fig1_mix_schedule,
    loops_only_schedule,
    partially_rooted_schedule,
    random_nonsplit_schedule,
    random_rooted_schedule,
)
from .engine import ExecutionConfig, Horizon, decision_round
from .graph import load_edge_list
from .numeric import NumericMode, to_fraction

SCHEDULE_KINDS = ("random-rooted", "random-nonsplit", "partially-rooted", "loops-only",
                  "explicit", "fig1-mix")

RATIONAL_MAX_N = 16
RATIONAL_MAX_ROUNDS = 10_000


@dataclass
class RunSpec:
    behavior: str = "amortized midpoint"
    n: int = 4
    N: int | None = None
    epsilon: str = "1/100"
    Q: int | None = None
    rounding: str = "down"
    schedule: dict[str, Any] = field(default_factory=lambda: {"kind": "random-rooted"})
    seed: int = 0
    mode: str | None = None
    horizon: dict[str, Any] = field(default_factory=lambda: {"kind": "decision"})
    initial_values: list[str] | None = None
    trace_csv: str | None = None
    summary_json: str | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown run-spec fields: {sorted(unknown)}")
        spec = cls(**data)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "RunSpec":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read run spec {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("run spec must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes: Any) -> "RunSpec":
        spec = dataclasses.replace(self, **changes)
        spec.validate()
        return spec

    @property
    def descriptor(self) -> str:
        """Behavior descriptor with the separate ``Q`` / ``rounding`` fields folded in."""
        text = self.behavior
        if self.Q is not None and "quantized" not in text.lower():
            text = f"quantized({self.Q},{self.rounding}) {text}"
        return text

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigurationError("n must be a positive integer")
        if self.N is not None and not 2 <= self.N <= max(self.n, 2):
            raise ConfigurationError(f"N must lie in [2, n], got {self.N}")
        if to_fraction(self.epsilon) <= 0:
            raise ConfigurationError("epsilon must be > 0")
        low = self.behavior.lower()
        if "quantized" in low and "quantized(" not in low and self.Q is None:
            raise ConfigurationError("quantized behavior needs Q")
        if self.mode is not None:
            NumericMode(self.mode)
        if not isinstance(self.schedule, dict) or self.schedule.get("kind") not in SCHEDULE_KINDS:
            raise ConfigurationError(
                f"schedule kind must be one of {', '.join(SCHEDULE_KINDS)}; got {self.schedule!r}")
        if self.initial_values is not None and len(self.initial_values) != self.n:
            raise ConfigurationError(f"{len(self.initial_values)} initial values for n={self.n}")
        Horizon(**self.horizon)


def build_behavior(spec: RunSpec) -> AlgorithmBehavior:
    return behavior_from_name(spec.descriptor, spec.n, spec.N)


def build_schedule(spec: RunSpec, base_dir: str | Path = ".") -> Schedule:
    d = dict(spec.schedule)
    kind = d.pop("kind")
    seed = int(d.pop("seed", spec.seed))
    n = spec.n
    if kind == "random-rooted":
        return random_rooted_schedule(n, seed, d.get("density"))
    if kind == "random-nonsplit":
        return random_nonsplit_schedule(n, seed, d.get("density", 0.1))
    if kind == "partially-rooted":
        N = d.get("N", spec.N)
        if N is None:
            raise ConfigurationError("partially-rooted schedule needs N")
        return partially_rooted_schedule(n, N, seed, d.get("density", 0.2))
    if kind == "loops-only":
        return loops_only_schedule(n)
    if kind == "fig1-mix":
        if n != 2:
            raise ConfigurationError("fig1-mix schedules have n=2")
        return fig1_mix_schedule(seed)
    files = d.get("graphs") or []
    if not files:
        raise ConfigurationError("explicit schedule needs a non-empty 'graphs' list of files")
    graphs = tuple(load_edge_list(Path(base_dir) / f) for f in files)
    sched = ExplicitSchedule(graphs, d.get("repeat", "cycle"))
    if sched.n != n:
        raise ConfigurationError(f"graph files have n={sched.n}, spec has n={n}")
    return sched


def default_initial_values(spec: RunSpec, behavior: AlgorithmBehavior) -> list[Fraction]:
    """Evenly spaced ``i / (n - 1)``, rounded onto the grid for quantized behaviors."""
    n = spec.n
    xs = [Fraction(i, n - 1) if n > 1 else Fraction(0) for i in range(n)]
    if behavior.quantization is not None:
        xs = [quantize(x, behavior.quantization) for x in xs]
    return xs


def resolve_mode(spec: RunSpec, behavior: AlgorithmBehavior) -> NumericMode:
    if spec.mode is not None:
        return NumericMode(spec.mode)
    horizon = expected_rounds(spec, behavior)
    if spec.n <= RATIONAL_MAX_N and horizon is not None and horizon <= RATIONAL_MAX_ROUNDS:
        return NumericMode.RATIONAL
    return NumericMode.FLOAT


def expected_rounds(spec: RunSpec, behavior: AlgorithmBehavior) -> int | None:
    hz = Horizon(**spec.horizon)
    if hz.kind == "fixed":
        return hz.rounds
    try:
        D = decision_round(behavior, spec.epsilon)
    except ConfigurationError:
        return hz.rounds
    return D if hz.rounds is None else min(D, hz.rounds)


def build_config(spec: RunSpec, base_dir: str | Path = ".") -> ExecutionConfig:
    behavior = build_behavior(spec)
    schedule = build_schedule(spec, base_dir)
    if spec.initial_values is None:
        x0: list[Any] = default_initial_values(spec, behavior)
    else:
        x0 = list(spec.initial_values)
    return ExecutionConfig(behavior, schedule, x0, epsilon=to_fraction(spec.epsilon), N=spec.N,
                           horizon=Horizon(**spec.horizon), mode=resolve_mode(spec, behavior))
