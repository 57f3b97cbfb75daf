"""Communication graphs on processes ``1..n``.

An edge ``(p, q)`` means that ``q`` hears ``p``: ``p`` is an incoming
neighbor of ``q`` and ``q`` an outgoing neighbor of ``p``. Every node
carries a self-loop; constructors add them silently.

Internally each graph stores one in-neighbor bitmask per node (bit ``p-1``
of ``in_masks[q-1]`` is set iff ``(p, q)`` is an edge). Python integers are
unbounded, so the same representation serves every ``n``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Iterable, Iterator, Sequence


class GraphError(ValueError):
    """Raised on malformed graphs or mismatched operands."""


def _bits(mask: int) -> Iterator[int]:
    """Yield the 0-based indices of the set bits of ``mask``."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class CommunicationGraph:
    n: int
    in_masks: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise GraphError(f"process count must be >= 1, got {self.n}")
        if len(self.in_masks) != self.n:
            raise GraphError("one in-neighbor mask per node is required")
        full = (1 << self.n) - 1
        for q, mask in enumerate(self.in_masks):
            if mask & ~full:
                raise GraphError(f"in-neighbors of {q + 1} out of range")
            if not mask >> q & 1:
                raise GraphError(f"node {q + 1} lacks its self-loop")

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(
            (p + 1, q + 1) for q, mask in enumerate(self.in_masks) for p in _bits(mask)
        )

    def in_neighbors(self, q: int) -> frozenset[int]:
        return frozenset(p + 1 for p in _bits(self.in_masks[q - 1]))

    def out_neighbors(self, p: int) -> frozenset[int]:
        bit = 1 << (p - 1)
        return frozenset(q + 1 for q, mask in enumerate(self.in_masks) if mask & bit)

    def has_edge(self, p: int, q: int) -> bool:
        return bool(self.in_masks[q - 1] >> (p - 1) & 1)

    def __matmul__(self, other: CommunicationGraph) -> CommunicationGraph:
        return compose(self, other)

    def __repr__(self) -> str:
        extra = sorted(e for e in self.edges if e[0] != e[1])
        return f"CommunicationGraph(n={self.n}, extra_edges={extra})"


def new_graph(n: int, extra_edges: Iterable[tuple[int, int]] = ()) -> CommunicationGraph:
    """Build a graph on ``1..n`` with all self-loops plus ``extra_edges``."""
    if n < 1:
        raise GraphError(f"process count must be >= 1, got {n}")
    masks = [1 << q for q in range(n)]
    for p, q in extra_edges:
        if not (1 <= p <= n and 1 <= q <= n):
            raise GraphError(f"edge ({p}, {q}) has an endpoint outside 1..{n}")
        masks[q - 1] |= 1 << (p - 1)
    return CommunicationGraph(n, tuple(masks))


def identity_graph(n: int) -> CommunicationGraph:
    return new_graph(n)


def complete_graph(n: int) -> CommunicationGraph:
    full = (1 << n) - 1
    return CommunicationGraph(n, (full,) * n)


def compose(g: CommunicationGraph, h: CommunicationGraph) -> CommunicationGraph:
    """Product ``g ∘ h``: ``(p, q)`` iff some ``r`` has ``(p, r)`` in g and ``(r, q)`` in h.

    This is the information flow of round ``g`` followed by round ``h``.
    """
    if g.n != h.n:
        raise GraphError(f"cannot compose graphs with n={g.n} and n={h.n}")
    g_in = g.in_masks
    masks = []
    for h_mask in h.in_masks:
        acc = 0
        for r in _bits(h_mask):
            acc |= g_in[r]
        masks.append(acc)
    return CommunicationGraph(g.n, tuple(masks))


def product_of(graphs: Sequence[CommunicationGraph]) -> CommunicationGraph:
    """Left-to-right product ``G1 ∘ G2 ∘ ... ∘ Gk``."""
    if not graphs:
        raise GraphError("product of an empty sequence is undefined")
    return reduce(compose, graphs)


def is_nonsplit(g: CommunicationGraph) -> bool:
    """True iff every two nodes share a common incoming neighbor."""
    masks = g.in_masks
    for i, a in enumerate(masks):
        for b in masks[i + 1:]:
            if not a & b:
                return False
    return True


def strongly_connected_components(g: CommunicationGraph) -> list[list[int]]:
    """Tarjan's algorithm (iterative) over 0-based node indices.

    Components come out in reverse topological order of the condensation.
    """
    out: list[list[int]] = [[] for _ in range(g.n)]
    for q, mask in enumerate(g.in_masks):
        for p in _bits(mask):
            if p != q:
                out[p].append(q)

    index: dict[int, int] = {}
    lowlink: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    components: list[list[int]] = []
    counter = 0

    for root in range(g.n):
        if root in index:
            continue
        work = [(root, 0)]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, i = work[-1]
            if i < len(out[v]):
                work[-1] = (v, i + 1)
                w = out[v][i]
                if w not in index:
                    index[w] = lowlink[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, 0))
                elif w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                components.append(comp)
    return components


def source_components(g: CommunicationGraph) -> list[list[int]]:
    """Components of the condensation with no edge entering from outside."""
    comps = strongly_connected_components(g)
    sources = []
    for comp in comps:
        inside = 0
        for v in comp:
            inside |= 1 << v
        if all(g.in_masks[v] & ~inside == 0 for v in comp):
            sources.append(sorted(v + 1 for v in comp))
    return sources


def is_rooted(g: CommunicationGraph) -> bool:
    """True iff some node reaches every node, i.e. a single source component."""
    return len(source_components(g)) == 1


# -- edge-list files ---------------------------------------------------------

def parse_edge_list(text: str, source: str = "<string>") -> CommunicationGraph:
    """Parse ``n <count>`` followed by ``<p> <q>`` lines; ``#`` starts a comment."""
    n = None
    edges: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 2 or parts[0] != "n":
                raise GraphError(f"{source}:{lineno}: expected 'n <count>' header")
            n = int(parts[1])
            continue
        if len(parts) != 2:
            raise GraphError(f"{source}:{lineno}: expected '<p> <q>'")
        edges.append((int(parts[0]), int(parts[1])))
    if n is None:
        raise GraphError(f"{source}: missing 'n <count>' header")
    missing = sorted(set(range(1, n + 1)) - {p for p, q in edges if p == q})
    if missing:
        warnings.warn(
            f"{source}: self-loops missing at nodes {missing}; adding them",
            stacklevel=2,
        )
    return new_graph(n, edges)


def load_edge_list(path: str | Path) -> CommunicationGraph:
    path = Path(path)
    return parse_edge_list(path.read_text(encoding="utf-8"), str(path))


def format_edge_list(g: CommunicationGraph, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"n {g.n}")
    lines.extend(f"{p} {q}" for p, q in sorted(g.edges))
    return "\n".join(lines) + "\n"


def save_edge_list(g: CommunicationGraph, path: str | Path, comment: str | None = None) -> None:
    Path(path).write_text(format_edge_list(g, comment), encoding="utf-8")
