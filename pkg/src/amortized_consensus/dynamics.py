"""Communication patterns: proof graphs, random generators, schedules, adversary.

Every seeded schedule derives the graph of round ``k`` from ``(seed, k)``
alone, so ``schedule.graph(k)`` is a pure function and schedules can be
shared freely between threads or processes.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .algorithms import AlgorithmBehavior, advance
from .graph import (
    CommunicationGraph,
    GraphError,
    complete_graph,
    identity_graph,
    is_nonsplit,
    is_rooted,
    new_graph,
    product_of,
)

GraphSampler = Callable[[int, random.Random], CommunicationGraph]


def round_rng(seed: int, *key: object) -> random.Random:
    """Independent RNG for a (seed, key...) tuple; stable across interpreter runs."""
    return random.Random(":".join(str(v) for v in (seed, *key)))


# -- proof constructions ---------------------------------------------------------

def fig1_graph(tag: str) -> CommunicationGraph:
    """Two-process graphs ``G`` (complete), ``H_plus`` (1 -> 2), ``H_minus`` (2 -> 1)."""
    if tag == "G":
        return new_graph(2, {(1, 2), (2, 1)})
    if tag in ("H_plus", "H+"):
        return new_graph(2, {(1, 2)})
    if tag in ("H_minus", "H-"):
        return new_graph(2, {(2, 1)})
    raise GraphError(f"unknown two-process graph tag {tag!r}")


def fig2_graph(n: int, tag: str) -> CommunicationGraph:
    """Nonsplit graphs ``K`` and ``L``: a clique on ``2..n`` plus edges into node 1.

    ``K`` adds ``(2, 1)``; ``L`` adds ``(p, 1)`` for ``p`` in ``3..n``.
    """
    if n < 3:
        raise GraphError("K and L need n >= 3")
    clique = {(p, q) for p in range(2, n + 1) for q in range(2, n + 1) if p != q}
    if tag == "K":
        return new_graph(n, clique | {(2, 1)})
    if tag == "L":
        return new_graph(n, clique | {(p, 1) for p in range(3, n + 1)})
    raise GraphError(f"unknown graph tag {tag!r}")


# -- random generators -------------------------------------------------------------

def random_tree_parents(n: int, rng: random.Random) -> tuple[int, list[int | None]]:
    """Uniform random arborescence on ``1..n``: returns ``(root, parent)``.

    Decodes a uniform Prüfer sequence into a labeled tree and orients it away
    from a uniformly chosen root; ``parent[v-1]`` is ``None`` at the root.
    """
    if n == 1:
        return 1, [None]
    adj: list[list[int]] = [[] for _ in range(n)]
    if n == 2:
        adj[0].append(1)
        adj[1].append(0)
    else:
        seq = [rng.randrange(n) for _ in range(n - 2)]
        degree = [1] * n
        for v in seq:
            degree[v] += 1
        for v in seq:
            leaf = next(u for u in range(n) if degree[u] == 1)
            adj[leaf].append(v)
            adj[v].append(leaf)
            degree[leaf] -= 1
            degree[v] -= 1
        u, w = (i for i in range(n) if degree[i] == 1)
        adj[u].append(w)
        adj[w].append(u)
    root = rng.randrange(n)
    parent: list[int | None] = [None] * n
    seen = {root}
    stack = [root]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                parent[w] = v + 1
                stack.append(w)
    return root + 1, parent


def random_rooted(n: int, rng: random.Random, density: float = 0.0) -> CommunicationGraph:
    """A random arborescence plus each other edge independently with probability ``density``."""
    if not 0 <= density <= 1:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    if density == 1:
        return complete_graph(n)
    _, parent = random_tree_parents(n, rng)
    edges = {(par, v + 1) for v, par in enumerate(parent) if par is not None}
    if density > 0:
        for p in range(1, n + 1):
            for q in range(1, n + 1):
                if p != q and rng.random() < density:
                    edges.add((p, q))
    return new_graph(n, edges)


def random_nonrooted(n: int, rng: random.Random, density: float = 0.3) -> CommunicationGraph:
    """A graph with two source cells that nothing outside can enter.

    Nodes are split into cells ``A``, ``B`` (both non-empty) and a rest ``C``.
    Edges stay inside ``A`` or inside ``B``; ``C`` may hear anyone. No node
    reaches both ``A`` and ``B``, so the graph is never rooted.
    """
    if n < 2:
        raise ValueError("a non-rooted graph needs n >= 2")
    nodes = list(range(1, n + 1))
    rng.shuffle(nodes)
    a_size = rng.randint(1, n - 1)
    b_size = rng.randint(1, n - a_size)
    A = nodes[:a_size]
    B = nodes[a_size:a_size + b_size]
    C = nodes[a_size + b_size:]
    edges = set()
    for cell in (A, B):
        for p in cell:
            for q in cell:
                if p != q and rng.random() < density:
                    edges.add((p, q))
    for q in C:
        for p in range(1, n + 1):
            if p != q and rng.random() < density:
                edges.add((p, q))
    return new_graph(n, edges)


def random_nonsplit(n: int, rng: random.Random, density: float = 0.1) -> CommunicationGraph:
    """Random sparse graph repaired into a nonsplit one.

    Starts from independent edges with probability ``density``; every pair
    without a common in-neighbor gets one by copying a random in-neighbor of
    one side into the other.
    """
    masks = [1 << q for q in range(n)]
    for q in range(n):
        for p in range(n):
            if p != q and rng.random() < density:
                masks[q] |= 1 << p
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    rng.shuffle(pairs)
    for a, b in pairs:
        if masks[a] & masks[b]:
            continue
        src, dst = (a, b) if rng.random() < 0.5 else (b, a)
        choices = [p for p in range(n) if masks[src] >> p & 1]
        masks[dst] |= 1 << rng.choice(choices)
    return CommunicationGraph(n, tuple(masks))


def random_path(n: int, rng: random.Random) -> CommunicationGraph:
    """Directed Hamiltonian path through a random ordering of the nodes."""
    order = list(range(1, n + 1))
    rng.shuffle(order)
    return new_graph(n, {(order[i], order[i + 1]) for i in range(n - 1)})


def clustered_rooted(n: int, rng: random.Random) -> CommunicationGraph:
    """Source clique ``A`` and sink clique ``B`` joined by a single edge ``A -> B``.

    ``A`` is a singleton half of the time. Under equal-neighbor the bridge
    carries weight ``1/(|B| + 1)``, so the spread shrinks slowly; this makes
    it a useful candidate pool for the greedy adversary.
    """
    if n == 1:
        return new_graph(1)
    nodes = list(range(1, n + 1))
    rng.shuffle(nodes)
    a = 1 if rng.random() < 0.5 else rng.randint(1, n - 1)
    A, B = nodes[:a], nodes[a:]
    edges = {(p, q) for cell in (A, B) for p in cell for q in cell if p != q}
    edges.add((rng.choice(A), rng.choice(B)))
    return new_graph(n, edges)


def default_rooted_sampler(density_max: float = 0.3) -> GraphSampler:
    """Rooted graphs with density drawn uniformly from ``[0, density_max]``."""
    def sample(n: int, rng: random.Random) -> CommunicationGraph:
        return random_rooted(n, rng, rng.uniform(0, density_max))
    return sample


# -- schedules -----------------------------------------------------------------------

class Schedule:
    """Round-indexed source of communication graphs, ``graph(k)`` for ``k >= 1``."""

    n: int

    def graph(self, k: int) -> CommunicationGraph:
        raise NotImplementedError

    def graphs(self, start: int, stop: int) -> list[CommunicationGraph]:
        """Graphs of rounds ``start..stop`` inclusive."""
        return [self.graph(k) for k in range(start, stop + 1)]

    def describe(self) -> dict[str, Any]:
        return {"kind": type(self).__name__}

    def _check_round(self, k: int) -> None:
        if k < 1:
            raise IndexError(f"rounds start at 1, got {k}")


@dataclass(frozen=True)
class ExplicitSchedule(Schedule):
    """A finite list of graphs, repeated cyclically or holding the last one."""

    graph_list: tuple[CommunicationGraph, ...]
    repeat: str = "cycle"

    def __post_init__(self) -> None:
        if not self.graph_list:
            raise GraphError("explicit schedule needs at least one graph")
        ns = {g.n for g in self.graph_list}
        if len(ns) != 1:
            raise GraphError(f"graphs of mixed sizes {sorted(ns)}")
        if self.repeat not in ("cycle", "hold", "none"):
            raise ValueError(f"unknown repeat policy {self.repeat!r}")

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.graph_list[0].n

    def graph(self, k: int) -> CommunicationGraph:
        self._check_round(k)
        i = k - 1
        if i < len(self.graph_list):
            return self.graph_list[i]
        if self.repeat == "cycle":
            return self.graph_list[i % len(self.graph_list)]
        if self.repeat == "hold":
            return self.graph_list[-1]
        raise IndexError(f"explicit schedule has no round {k}")

    def describe(self) -> dict[str, Any]:
        return {"kind": "explicit", "length": len(self.graph_list), "repeat": self.repeat}


def constant_schedule(g: CommunicationGraph) -> ExplicitSchedule:
    return ExplicitSchedule((g,), "cycle")


def loops_only_schedule(n: int) -> ExplicitSchedule:
    return constant_schedule(identity_graph(n))


@dataclass(frozen=True)
class GeneratedSchedule(Schedule):
    """Round ``k`` is ``sampler(n, round_rng(seed, label, k))``."""

    n: int
    seed: int
    sampler: GraphSampler
    label: str = "generated"
    # memo of generated rounds; purely an optimisation, graphs are immutable
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def graph(self, k: int) -> CommunicationGraph:
        self._check_round(k)
        g = self._cache.get(k)
        if g is None:
            g = self._cache[k] = self.sampler(self.n, round_rng(self.seed, self.label, k))
        return g

    def describe(self) -> dict[str, Any]:
        return {"kind": self.label, "n": self.n, "seed": self.seed}


def random_rooted_schedule(n: int, seed: int, density: float | None = None) -> GeneratedSchedule:
    """Rooted graph each round; ``density=None`` draws it per round from ``[0, 0.3]``."""
    if density is None:
        sampler = default_rooted_sampler()
    else:
        def sampler(n: int, rng: random.Random) -> CommunicationGraph:
            return random_rooted(n, rng, density)
    return GeneratedSchedule(n, seed, sampler, "random-rooted")


def random_nonsplit_schedule(n: int, seed: int, density: float = 0.1) -> GeneratedSchedule:
    def sampler(n: int, rng: random.Random) -> CommunicationGraph:
        return random_nonsplit(n, rng, density)
    return GeneratedSchedule(n, seed, sampler, "random-nonsplit")


def fig1_mix_schedule(seed: int) -> GeneratedSchedule:
    """Each round uniformly one of ``G``, ``H_plus``, ``H_minus``."""
    pool = [fig1_graph(t) for t in ("G", "H_plus", "H_minus")]

    def sampler(n: int, rng: random.Random) -> CommunicationGraph:
        return rng.choice(pool)
    return GeneratedSchedule(2, seed, sampler, "fig1-mix")


@dataclass(frozen=True)
class BlockConstraint:
    block_length: int
    min_rooted: int

    def __post_init__(self) -> None:
        if not 0 <= self.min_rooted <= self.block_length:
            raise ValueError("need 0 <= min_rooted <= block_length")


@dataclass(frozen=True)
class PartiallyRootedSchedule(Schedule):
    """Blocks of ``n - 1`` rounds; ``N - 1`` random slots per block are rooted.

    The remaining slots carry random non-rooted graphs.
    """

    n: int
    N: int
    seed: int
    density: float = 0.2
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 2 <= self.N <= self.n:
            raise ValueError(f"need 2 <= N <= n, got N={self.N}, n={self.n}")

    @property
    def constraint(self) -> BlockConstraint:
        return BlockConstraint(self.n - 1, self.N - 1)

    def rooted_slots(self, block: int) -> frozenset[int]:
        """0-based offsets of the rooted rounds inside ``block`` (0-based)."""
        rng = round_rng(self.seed, "slots", block)
        return frozenset(rng.sample(range(self.n - 1), self.N - 1))

    def graph(self, k: int) -> CommunicationGraph:
        self._check_round(k)
        if k not in self._cache:
            block, offset = divmod(k - 1, self.n - 1)
            rng = round_rng(self.seed, "partial", k)
            if offset in self.rooted_slots(block):
                g = random_rooted(self.n, rng, rng.uniform(0, self.density))
            else:
                g = random_nonrooted(self.n, rng, self.density)
            self._cache[k] = g
        return self._cache[k]

    def describe(self) -> dict[str, Any]:
        return {"kind": "partially-rooted", "n": self.n, "N": self.N, "seed": self.seed}


def partially_rooted_schedule(n: int, N: int, seed: int, density: float = 0.2) -> PartiallyRootedSchedule:
    return PartiallyRootedSchedule(n, N, seed, density)


def resiliency_window(n: int, N: int) -> int:
    """``L = ceil((n - 1) / (N - 1))`` macro-rounds per guaranteed-nonsplit block."""
    return math.ceil((n - 1) / (N - 1))


# -- window checks ---------------------------------------------------------------------

@dataclass
class WindowReport:
    K: int
    horizon: int
    windows: list[tuple[int, bool]] = field(default_factory=list)

    @property
    def all_nonsplit(self) -> bool:
        return all(ok for _, ok in self.windows)

    @property
    def first_failure(self) -> int | None:
        return next((start for start, ok in self.windows if not ok), None)


def k_nonsplit_window_check(schedule: Schedule, K: int, horizon: int,
                            sliding: bool = False) -> WindowReport:
    """Check that the product of every ``K``-round window up to ``horizon`` is nonsplit.

    Windows start at rounds ``1, K+1, 2K+1, ...`` (or every round when
    ``sliding``); the report keys each window by its first round.
    """
    if K < 1 or horizon < K:
        raise ValueError("need K >= 1 and horizon >= K")
    report = WindowReport(K, horizon)
    step = 1 if sliding else K
    for start in range(1, horizon - K + 2, step):
        g = product_of(schedule.graphs(start, start + K - 1))
        report.windows.append((start, is_nonsplit(g)))
    return report


class MacroSchedule(Schedule):
    """View of ``base`` where round ``l`` is the product of macro-round ``l``."""

    def __init__(self, base: Schedule, macro_length: int) -> None:
        self.base = base
        self.macro_length = macro_length
        self.n = base.n

    def graph(self, k: int) -> CommunicationGraph:
        self._check_round(k)
        K = self.macro_length
        return product_of(self.base.graphs((k - 1) * K + 1, k * K))


# -- adversary ---------------------------------------------------------------------------

def _spread(values: Sequence[Any]) -> Any:
    return max(values) - min(values)


@dataclass
class AdversaryResult:
    schedule: ExplicitSchedule
    ratios: list[Any]
    pool_size: int
    seed: int


def greedy_adversary(behavior: AlgorithmBehavior, n: int, horizon: int,
                     initial_values: Sequence[Any],
                     candidate_pool: GraphSampler | Sequence[CommunicationGraph] | None = None,
                     pool_size: int = 64, seed: int = 0) -> AdversaryResult:
    """Pick, round by round, the candidate graph that contracts the spread least.

    ``candidate_pool`` is either a fixed list of graphs (all tried every
    round) or a sampler from which ``pool_size`` graphs are drawn per round
    with ``round_rng(seed, "pool", k)``; the default sampler is
    :func:`clustered_rooted`. The per-round ratio is
    ``delta(x(k)) / delta(x(k-1))``, defined as 0 once the spread vanishes.
    Ties go to the earliest candidate.
    """
    if candidate_pool is None:
        candidate_pool = clustered_rooted
    states = [behavior.initial_state(p + 1, x) for p, x in enumerate(initial_values)]
    chosen: list[CommunicationGraph] = []
    ratios: list[Any] = []
    for k in range(1, horizon + 1):
        if callable(candidate_pool):
            rng = round_rng(seed, "pool", k)
            candidates = [candidate_pool(n, rng) for _ in range(pool_size)]
        else:
            candidates = list(candidate_pool)
        for g in candidates:
            if not is_rooted(g):
                raise GraphError("adversary pool produced a non-rooted graph")
        before = _spread([behavior.value(s) for s in states])
        if before == 0:
            best_graph, best_states = candidates[0], advance(behavior, states, candidates[0], k)
            best_ratio = 0
        else:
            best_ratio = None
            for g in candidates:
                nxt = advance(behavior, states, g, k)
                ratio = _spread([behavior.value(s) for s in nxt]) / before
                if best_ratio is None or ratio > best_ratio:
                    best_ratio, best_graph, best_states = ratio, g, nxt
        chosen.append(best_graph)
        ratios.append(best_ratio)
        states = best_states
    return AdversaryResult(ExplicitSchedule(tuple(chosen), "none"), ratios, pool_size, seed)
