import csv
import json
import math
import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from amortized_consensus.algorithms import (
    ConfigurationError,
    QuantizationSpec,
    behavior_from_name,
    quantized_amortized_midpoint,
)
from amortized_consensus.dynamics import (
    ExplicitSchedule,
    constant_schedule,
    fig1_graph,
    fig1_mix_schedule,
    loops_only_schedule,
    random_nonsplit_schedule,
    random_path,
    random_rooted_schedule,
)
from amortized_consensus.engine import (
    ExecutionConfig,
    Horizon,
    contraction_series,
    decision_round,
    delta,
    fixpoint_probe,
    run,
    trace_summary,
    verify_trace,
    write_summary_json,
    write_trace_csv,
)
from amortized_consensus.graph import new_graph, product_of
from amortized_consensus.numeric import NumericMode


def macro_midpoint_oracle(schedule, x0, K, rounds, Q=None):
    """Amortized midpoint computed directly from macro-round product graphs."""
    x = list(x0)
    out = [tuple(x)]
    for ell in range(1, rounds // K + 1):
        g = product_of(schedule.graphs((ell - 1) * K + 1, ell * K))
        new = []
        for q in range(1, len(x) + 1):
            heard = [x[p - 1] for p in g.in_neighbors(q)]
            v = (min(heard) + max(heard)) / 2
            if Q is not None:
                v = F(math.floor(v * Q), Q)
            new.append(v)
        x = new
        out.append(tuple(x))
    return out


# -- delta / decision rounds ----------------------------------------------------------

def test_delta_examples():
    assert delta([F(1, 5), F(7, 10), F(2, 5)]) == F(1, 2)
    assert delta([F(1, 3)] * 4) == 0
    assert delta([0.0, 1.0]) == 1.0
    with pytest.raises(ValueError):
        delta([])


def test_decision_round_amortized_midpoint():
    assert decision_round(behavior_from_name("amortized midpoint", 5), 0.01) == 28
    assert decision_round(behavior_from_name("amortized midpoint", 5), "1/100") == 28
    for n in (4, 8, 16, 32):
        assert decision_round(behavior_from_name("amortized midpoint", n), 1e-3) == (n - 1) * 10


def test_decision_round_quantized():
    b = quantized_amortized_midpoint(4, QuantizationSpec(10))
    assert decision_round(b, F(1, 10)) == 15
    with pytest.raises(ConfigurationError, match="impossible"):
        decision_round(b, 0.05)


def test_decision_round_relaxed_quantized():
    b = quantized_amortized_midpoint(8, QuantizationSpec(64))
    # eps = 3/Q: floor(log2(62 / 1)) + 1 = 6 macro-rounds
    assert decision_round(b, F(3, 64)) == 7 * 6
    # eps = 2/Q does not qualify for the relaxed bound
    assert decision_round(b, F(2, 64)) == 7 * (5 + 2)


def test_decision_round_rho_safe_mean_value():
    b = behavior_from_name("amortized mean-value", 3)
    assert b.rho == F(1, 3)
    oracle = 2 * math.ceil(math.log(1 / 0.5) / math.log(1 / (1 - 1 / 3)))
    assert oracle == 4
    assert decision_round(b, 0.5) == 4


def test_decision_round_matches_float_logarithms():
    for n in range(2, 17):
        for eps in (0.3, 0.1, 0.01, 0.001, 1e-6):
            b = behavior_from_name("amortized mean-value", n)
            expected = (n - 1) * math.ceil(math.log(1 / eps) / math.log(n / (n - 1)))
            assert decision_round(b, eps) == expected


def test_decision_round_plain_and_third_point():
    assert decision_round(behavior_from_name("midpoint", 4), 0.001) == 10
    assert decision_round(behavior_from_name("third-point", 2), F(1, 27)) == 3
    assert decision_round(behavior_from_name("third-point", 2), F(1, 28)) == 4


def test_decision_round_errors():
    with pytest.raises(ConfigurationError):
        decision_round(behavior_from_name("midpoint", 3), 0)
    with pytest.raises(ConfigurationError):
        decision_round(behavior_from_name("amortized quantized(10) mean-value", 3), 0.5)
    with pytest.raises(ConfigurationError):
        decision_round(quantized_amortized_midpoint(3, QuantizationSpec(2)), 0.5)


# -- runs -----------------------------------------------------------------------------------

def test_third_point_on_complete_graph_divides_by_three():
    b = behavior_from_name("third-point", 2)
    cfg = ExecutionConfig(b, constant_schedule(fig1_graph("G")), [0, 1],
                          epsilon=F(1, 3 ** 12))
    trace = run(cfg)
    assert trace.rounds == 12
    for k, x in enumerate(trace.values):
        assert abs(x[0] - x[1]) == F(1, 3 ** k)
    assert contraction_series(trace, 1) == [F(1, 3)] * 12
    assert verify_trace(trace, cfg).passed


@pytest.mark.parametrize("descriptor", [
    "midpoint", "mean-value", "equal-neighbor", "amortized midpoint",
    "amortized mean-value", "amortized equal-neighbor", "amortized quantized(8) midpoint",
])
def test_all_equal_start_is_fixed(descriptor):
    b = behavior_from_name(descriptor, 4)
    cfg = ExecutionConfig(b, random_rooted_schedule(4, seed=1), [F(3, 8)] * 4,
                          epsilon=F(1, 8), horizon=Horizon("fixed", 30))
    trace = run(cfg)
    assert all(x == (F(3, 8),) * 4 for x in trace.values)
    assert contraction_series(trace, 1) == [0] * 30


def test_amortized_midpoint_halves_on_static_path():
    # path 1 -> 2 -> 3, macro-rounds of 2 rounds, hand-unrolled:
    # macro 1: p1 hears {0}, p2 {0, 1}, p3 {0, 1, 1}   -> (0, 1/2, 1/2)
    # macro 2: p1 hears {0}, p2 {0, 1/2}, p3 {0, 1/2}  -> (0, 1/4, 1/4)
    path = new_graph(3, {(1, 2), (2, 3)})
    b = behavior_from_name("amortized midpoint", 3)
    cfg = ExecutionConfig(b, constant_schedule(path), [0, 1, 1], epsilon=F(1, 4))
    trace = run(cfg)
    assert trace.decision_round == 4
    assert trace.values[2] == (0, F(1, 2), F(1, 2))
    assert trace.values[4] == (0, F(1, 4), F(1, 4))
    assert contraction_series(trace, 2) == [F(1, 2), F(1, 2)]
    assert verify_trace(trace, cfg).passed


@pytest.mark.parametrize("seed", range(20))
def test_amortized_midpoint_matches_macro_oracle(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 7)
    Q = rng.choice([None, 5, 16])
    schedule = random_rooted_schedule(n, seed, density=rng.choice([0.0, 0.1]))
    if Q is None:
        b = behavior_from_name("amortized midpoint", n)
        x0 = [F(rng.randint(0, 100), 100) for _ in range(n)]
    else:
        b = quantized_amortized_midpoint(n, QuantizationSpec(Q))
        x0 = [F(rng.randint(0, Q), Q) for _ in range(n)]
    rounds = 6 * (n - 1)
    trace = run(ExecutionConfig(b, schedule, x0, epsilon=F(1, 2), horizon=Horizon("fixed", rounds)))
    expected = macro_midpoint_oracle(schedule, x0, n - 1, rounds, Q)
    assert [trace.values[k] for k in range(0, rounds + 1, n - 1)] == expected


def test_fixed_horizon_shorter_than_decision_is_undecided():
    b = behavior_from_name("amortized midpoint", 5)
    cfg = ExecutionConfig(b, random_rooted_schedule(5, 1), [0, 1, 0, 1, 0],
                          epsilon=0.01, horizon=Horizon("fixed", 10))
    trace = run(cfg)
    assert trace.outcome == "undecided-at-horizon" and not trace.decided
    report = verify_trace(trace, cfg)
    assert not report.passed
    assert set(report.failures()) == {"termination", "epsilon_agreement"}


def test_decision_horizon_cap():
    b = behavior_from_name("amortized midpoint", 5)
    trace = run(ExecutionConfig(b, random_rooted_schedule(5, 1), [0, 1, 0, 1, 0],
                                epsilon=0.01, horizon=Horizon("decision", rounds=20)))
    assert trace.rounds == 20 and trace.outcome == "undecided-at-horizon"
    trace = run(ExecutionConfig(b, random_rooted_schedule(5, 1), [0, 1, 0, 1, 0], epsilon=0.01))
    assert trace.rounds == 28 and trace.outcome == "decided"
    assert all(d == (28, trace.values[28][p]) for p, d in enumerate(trace.decisions))


def test_decision_horizon_without_bound_needs_cap():
    b = behavior_from_name("amortized quantized(10) mean-value", 3)
    cfg = ExecutionConfig(b, random_rooted_schedule(3, 1), [0, F(1, 2), 1], epsilon=0.5)
    with pytest.raises(ConfigurationError):
        run(cfg)
    cfg.horizon = Horizon("decision", rounds=10)
    trace = run(cfg)
    assert trace.outcome == "undecided-at-horizon" and "no decision bound" in trace.note


def test_config_validation():
    b = behavior_from_name("midpoint", 3)
    with pytest.raises(ConfigurationError):
        ExecutionConfig(b, random_rooted_schedule(3, 0), [0, 1])
    with pytest.raises(ConfigurationError):
        ExecutionConfig(b, random_rooted_schedule(3, 0), [0, 1, 2])
    with pytest.raises(ConfigurationError):
        ExecutionConfig(b, random_rooted_schedule(3, 0), [0, 1, 1], epsilon=0)
    with pytest.raises(ConfigurationError):
        run(ExecutionConfig(quantized_amortized_midpoint(3, QuantizationSpec(10)),
                            random_rooted_schedule(3, 0), [0, "1/4", 1], epsilon=F(1, 10)))


def test_float_mode_run():
    b = behavior_from_name("amortized midpoint", 6)
    cfg = ExecutionConfig(b, random_rooted_schedule(6, 3), [0, 0.2, 0.4, 0.6, 0.8, 1],
                          epsilon=1e-3, mode=NumericMode.FLOAT)
    trace = run(cfg)
    assert all(isinstance(v, float) for v in trace.values[-1])
    assert trace.deltas[-1] <= 1e-3
    assert verify_trace(trace, cfg).passed


def test_runs_are_deterministic(tmp_path):
    def go(name):
        b = behavior_from_name("amortized equal-neighbor", 6)
        cfg = ExecutionConfig(b, random_rooted_schedule(6, 9), [0, F(1, 3), 1, 1, 0, F(1, 2)],
                              epsilon=F(1, 10))
        trace = run(cfg)
        write_trace_csv(trace, tmp_path / f"{name}.csv")
        write_summary_json(trace_summary(trace, cfg, verify_trace(trace, cfg)),
                           tmp_path / f"{name}.json")
    go("a")
    go("b")
    for ext in ("csv", "json"):
        assert (tmp_path / f"a.{ext}").read_bytes() == (tmp_path / f"b.{ext}").read_bytes()


# -- envelope and contraction properties ------------------------------------------------------

@pytest.mark.parametrize("descriptor", [
    "midpoint", "mean-value", "equal-neighbor",
    "amortized midpoint", "amortized mean-value", "amortized equal-neighbor",
])
def test_monotone_envelope_on_rooted_schedules(descriptor):
    for seed in range(10):
        rng = random.Random(seed)
        n = rng.randint(2, 8)
        b = behavior_from_name(descriptor, n)
        x0 = [F(rng.randint(0, 20), 20) for _ in range(n)]
        cfg = ExecutionConfig(b, random_rooted_schedule(n, seed), x0, epsilon=F(1, 2),
                              horizon=Horizon("fixed", 4 * n))
        trace = run(cfg)
        mins = [min(x) for x in trace.values]
        maxs = [max(x) for x in trace.values]
        assert mins == sorted(mins) and maxs == sorted(maxs, reverse=True)
        report = verify_trace(trace, cfg)
        assert report.checks["monotone_envelope"].passed
        assert report.checks["safety"].passed
        assert report.checks["validity"].passed


@pytest.mark.parametrize("descriptor", ["midpoint", "mean-value", "equal-neighbor"])
def test_nonsplit_schedules_contract_by_one_minus_rho(descriptor):
    for seed in range(10):
        n = 2 + seed % 7
        b = behavior_from_name(descriptor, n)
        rng = random.Random(seed)
        x0 = [F(rng.randint(0, 50), 50) for _ in range(n)]
        trace = run(ExecutionConfig(b, random_nonsplit_schedule(n, seed), x0,
                                    horizon=Horizon("fixed", 25)))
        assert all(r <= 1 - b.rho for r in contraction_series(trace, 1))


def test_contraction_series_window_and_zero_spread():
    b = behavior_from_name("amortized midpoint", 4)
    trace = run(ExecutionConfig(b, random_rooted_schedule(4, 0), [0, 0, 0, 1],
                                horizon=Horizon("fixed", 12)))
    series = contraction_series(trace, 3)
    assert len(series) == 4 and all(r <= F(1, 2) for r in series)
    with pytest.raises(ValueError):
        contraction_series(trace, 0)


# -- verification ---------------------------------------------------------------------------------

def test_verify_amortized_midpoint_random_rooted():
    for seed in range(10):
        b = behavior_from_name("amortized midpoint", 6)
        rng = random.Random(seed)
        cfg = ExecutionConfig(b, random_rooted_schedule(6, seed, density=0.0),
                              [F(rng.randint(0, 9), 9) for _ in range(6)], epsilon=F(1, 100))
        report = verify_trace(run(cfg), cfg)
        assert report.passed, report.to_dict()


def test_verify_flags_loops_only_disagreement():
    b = behavior_from_name("midpoint", 2)
    cfg = ExecutionConfig(b, loops_only_schedule(2), [0, 1], epsilon=F(1, 10))
    trace = run(cfg)
    report = verify_trace(trace, cfg)
    assert report.failures() == ["epsilon_agreement"]
    assert "decision spread 1" in report.checks["epsilon_agreement"].detail


def test_verify_flags_unsafe_updates():
    # a behavior whose declared rho is larger than what it delivers
    b = behavior_from_name("equal-neighbor", 3)
    b.rho = F(1, 2)
    # process 3 hears {0, 0, 1} and moves to 1/3, outside [1/2, 1/2]
    cfg = ExecutionConfig(b, constant_schedule(new_graph(3, {(1, 3), (2, 3)})), [0, 0, 1],
                          epsilon=F(1, 2), horizon=Horizon("fixed", 2))
    report = verify_trace(run(cfg), cfg)
    assert report.checks["safety"].passed is False


def test_verify_quantized_two_values():
    for seed in range(15):
        n = 3 + seed % 4
        b = quantized_amortized_midpoint(n, QuantizationSpec(10))
        rng = random.Random(seed)
        cfg = ExecutionConfig(b, random_rooted_schedule(n, seed, density=0.0),
                              [F(rng.randint(0, 10), 10) for _ in range(n)], epsilon=F(1, 10))
        trace = run(cfg)
        report = verify_trace(trace, cfg)
        assert report.passed, report.to_dict()
        assert report.checks["two_set"].passed and report.checks["grid_closure"].passed
        decided = {d[1] for d in trace.decisions}
        assert len(decided) <= 2


# -- fixpoints -------------------------------------------------------------------------------------

def test_fixpoint_all_equal():
    b = quantized_amortized_midpoint(3, QuantizationSpec(4))
    out = fixpoint_probe(ExecutionConfig(b, random_rooted_schedule(3, 0), ["1/4"] * 3), 2, 50)
    assert out.converged and out.limits == (F(1, 4),) * 3 and out.macro_rounds == 2


def test_fixpoint_small_case():
    rng = random.Random(5)
    schedule = ExplicitSchedule(tuple(random_path(3, rng) for _ in range(4)), "cycle")
    b = quantized_amortized_midpoint(3, QuantizationSpec(4))
    x0 = [0, F(1, 2), 1]
    out = fixpoint_probe(ExecutionConfig(b, schedule, x0), quiescence_window=4, cap=100)
    assert out.converged
    expected = macro_midpoint_oracle(schedule, [F(v) for v in x0], 2, 2 * out.macro_rounds, Q=4)
    assert tuple(expected[-1]) == out.limits
    gaps = {abs(a - c) for a in out.limits for c in out.limits}
    assert gaps <= {0, F(1, 4)}


def test_fixpoint_cap_is_inconclusive():
    b = quantized_amortized_midpoint(4, QuantizationSpec(16))
    out = fixpoint_probe(ExecutionConfig(b, random_rooted_schedule(4, 0), [0, 0, 0, 1]), 3, 2)
    assert not out.converged and out.limits is None


def test_fixpoint_requires_quantized_behavior():
    b = behavior_from_name("amortized midpoint", 3)
    with pytest.raises(ConfigurationError):
        fixpoint_probe(ExecutionConfig(b, random_rooted_schedule(3, 0), [0, 1, 1]))


# -- export ----------------------------------------------------------------------------------------

def test_trace_csv_and_summary(tmp_path):
    b = behavior_from_name("third-point", 2)
    cfg = ExecutionConfig(b, fig1_mix_schedule(1), [0, 1], epsilon=F(1, 9))
    trace = run(cfg)
    write_trace_csv(trace, tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert len(rows) == 2 * (trace.rounds + 1)
    assert rows[0] == {"round": "0", "process": "1", "value": "0", "decided": "0"}
    assert rows[-1]["decided"] == "1"
    summary = trace_summary(trace, cfg, verify_trace(trace, cfg))
    path = tmp_path / "s.json"
    write_summary_json(summary, path)
    loaded = json.loads(path.read_text())
    assert loaded["decision_round"] == 2
    assert loaded["delta"] == ["1", "1/3", "1/9"]
    assert loaded["contraction_per_round"] == ["1/3", "1/3"]
    assert loaded["verification"]["passed"] is True


def test_float_values_print_with_17_digits(tmp_path):
    b = behavior_from_name("equal-neighbor", 3)
    cfg = ExecutionConfig(b, constant_schedule(new_graph(3, {(1, 2), (1, 3)})), [0.1, 0.2, 0.3],
                          epsilon=0.5, mode="float", horizon=Horizon("fixed", 1))
    write_trace_csv(run(cfg), tmp_path / "f.csv")
    rows = list(csv.DictReader(open(tmp_path / "f.csv")))
    assert rows[0]["value"] == "0.10000000000000001"


# -- property-based invariants -------------------------------------------------------------

RULES = ["midpoint", "mean-value", "equal-neighbor"]


@st.composite
def runs(draw, amortized=False):
    n = draw(st.integers(2, 7))
    rule = draw(st.sampled_from(RULES))
    b = behavior_from_name(("amortized " if amortized else "") + rule, n)
    x0 = draw(st.lists(st.fractions(0, 1, max_denominator=50), min_size=n, max_size=n))
    seed = draw(st.integers(0, 2**32 - 1))
    density = draw(st.sampled_from([0.0, 0.1, None]))
    return b, random_rooted_schedule(n, seed, density), x0


@settings(max_examples=60, deadline=None)
@given(runs(amortized=True))
def test_property_macro_round_contraction(case):
    b, schedule, x0 = case
    trace = run(ExecutionConfig(b, schedule, x0, horizon=Horizon("fixed", 5 * b.macro_length)))
    assert all(r <= 1 - b.rho for r in contraction_series(trace, b.macro_length))


@settings(max_examples=60, deadline=None)
@given(st.booleans().flatmap(lambda a: runs(amortized=a)))
def test_property_monotone_envelope_and_determinism(case):
    b, schedule, x0 = case
    cfg = ExecutionConfig(b, schedule, x0, horizon=Horizon("fixed", 12))
    trace = run(cfg)
    for prev, cur in zip(trace.values, trace.values[1:]):
        assert min(cur) >= min(prev) and max(cur) <= max(prev)
    assert run(cfg).values == trace.values


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1),
       st.sampled_from([F(1, 10), F(1, 100)]))
def test_property_k_nonsplit_window(n, seed, eps):
    # every window of n - 1 rooted rounds is nonsplit: a ρ-safe plain rule
    # contracts by 1 - ρ^(n-1) over it
    b = behavior_from_name("midpoint", n)
    K = n - 1
    trace = run(ExecutionConfig(b, random_rooted_schedule(n, seed, 0.0), [0] * (n - 1) + [1],
                                epsilon=eps, horizon=Horizon("fixed", 4 * K)))
    assert all(r <= 1 - b.rho ** K for r in contraction_series(trace, K))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 6), st.sampled_from([4, 8, 16]), st.integers(0, 2**32 - 1),
       st.data())
def test_property_quantized_decisions(n, Q, seed, data):
    b = quantized_amortized_midpoint(n, QuantizationSpec(Q, data.draw(st.sampled_from(["down", "up"]))))
    x0 = [F(data.draw(st.integers(0, Q)), Q) for _ in range(n)]
    cfg = ExecutionConfig(b, random_rooted_schedule(n, seed, 0.0), x0, epsilon=F(1, Q))
    trace = run(cfg)
    assert trace.deltas[-1] <= F(1, Q)
    assert verify_trace(trace, cfg).passed
