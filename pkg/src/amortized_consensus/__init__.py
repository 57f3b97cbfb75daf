"""Approximate consensus in dynamic rooted networks: averaging, amortized and
quantized algorithms with a lock-step simulator."""

from .algorithms import (
    AlgorithmBehavior,
    AmortizedBehavior,
    ConfigurationError,
    PlainBehavior,
    QuantizationSpec,
    amortize,
    behavior_from_name,
    equal_neighbor_update,
    make_plain,
    mean_value_update,
    midpoint_update,
    quantize,
    quantized_amortized_midpoint,
    safety_check,
    third_point_update,
)
from .dynamics import (
    ExplicitSchedule,
    GeneratedSchedule,
    PartiallyRootedSchedule,
    Schedule,
    fig1_graph,
    fig2_graph,
    greedy_adversary,
    k_nonsplit_window_check,
    partially_rooted_schedule,
    random_nonrooted,
    random_nonsplit,
    random_rooted,
)
from .engine import (
    ExecutionConfig,
    ExecutionTrace,
    Horizon,
    contraction_series,
    decision_round,
    delta,
    fixpoint_probe,
    run,
    verify_trace,
)
from .graph import (
    CommunicationGraph,
    GraphError,
    compose,
    is_nonsplit,
    is_rooted,
    new_graph,
    product_of,
)
from .numeric import NumericMode

__version__ = "0.1.0"

__all__ = [
    "AlgorithmBehavior",
    "AmortizedBehavior",
    "CommunicationGraph",
    "ConfigurationError",
    "ExecutionConfig",
    "ExecutionTrace",
    "ExplicitSchedule",
    "GeneratedSchedule",
    "GraphError",
    "Horizon",
    "NumericMode",
    "PartiallyRootedSchedule",
    "PlainBehavior",
    "QuantizationSpec",
    "Schedule",
    "amortize",
    "behavior_from_name",
    "compose",
    "contraction_series",
    "decision_round",
    "delta",
    "equal_neighbor_update",
    "fig1_graph",
    "fig2_graph",
    "fixpoint_probe",
    "greedy_adversary",
    "is_nonsplit",
    "is_rooted",
    "k_nonsplit_window_check",
    "make_plain",
    "mean_value_update",
    "midpoint_update",
    "new_graph",
    "partially_rooted_schedule",
    "product_of",
    "quantize",
    "quantized_amortized_midpoint",
    "random_nonrooted",
    "random_nonsplit",
    "random_rooted",
    "run",
    "safety_check",
    "third_point_update",
    "verify_trace",
    "__version__",
]
