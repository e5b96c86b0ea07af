"""Vertex- and edge-labeled graphs, canonical forms and the one-line text format.

A graph is written as ``<n>;<label0>,...,<label n-1>;<i>-<j>:<edgelabel>,...``.
Canonical keys are the text form of the canonically relabeled graph, encoded
as ASCII bytes, so two graphs are isomorphic iff their keys are equal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

__all__ = [
    "GraphParseError",
    "LabeledGraph",
    "canonical_form",
    "canonicalize",
    "is_isomorphic",
    "parse_graph",
    "serialize_graph",
]

_TOKEN = re.compile(r"^[A-Za-z0-9_+#=@*!?%&'\[\]()]+$")

Edge = tuple[int, int, str]


class GraphParseError(ValueError):
    """Malformed graph text; carries the 1-based line and column of the fault."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class LabeledGraph:
    labels: tuple[str, ...]
    edges: frozenset[Edge]
    _adj: tuple[tuple[tuple[int, str], ...], ...] = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self) -> None:
        n = len(self.labels)
        adj: list[list[tuple[int, str]]] = [[] for _ in range(n)]
        seen: set[tuple[int, int]] = set()
        for i, j, lab in self.edges:
            if i == j:
                raise ValueError(f"self-loop on vertex {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge {i}-{j} out of range for {n} vertices")
            if i > j:
                raise ValueError(f"edge {i}-{j} not normalized (expected i < j)")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge {i}-{j}")
            seen.add((i, j))
            adj[i].append((j, lab))
            adj[j].append((i, lab))
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    @classmethod
    def build(cls, labels: Sequence[str], edges: Iterable[tuple[int, int, str]]) -> "LabeledGraph":
        """Construct from labels and edges given in any endpoint order."""
        norm = frozenset((min(i, j), max(i, j), str(lab)) for i, j, lab in edges)
        return cls(tuple(str(x) for x in labels), norm)

    def __len__(self) -> int:
        return len(self.labels)

    def neighbors(self, v: int) -> tuple[tuple[int, str], ...]:
        return self._adj[v]

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def edge_label(self, i: int, j: int) -> str | None:
        for u, lab in self._adj[i]:
            if u == j:
                return lab
        return None

    def is_connected(self) -> bool:
        n = len(self.labels)
        if n == 0:
            return True
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for u, _ in self._adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == n

    def relabel(self, order: Sequence[int]) -> "LabeledGraph":
        """Return the graph whose vertex ``k`` is this graph's vertex ``order[k]``."""
        pos = {old: new for new, old in enumerate(order)}
        return LabeledGraph.build(
            [self.labels[v] for v in order],
            ((pos[i], pos[j], lab) for i, j, lab in self.edges),
        )

    def __str__(self) -> str:
        return serialize_graph(self)


# ---------------------------------------------------------------------------
# Text format


def serialize_graph(g: LabeledGraph) -> str:
    edges = ",".join(f"{i}-{j}:{lab}" for i, j, lab in sorted(g.edges))
    return f"{len(g.labels)};{','.join(g.labels)};{edges}"


def parse_graph(text: str, line: int = 1) -> LabeledGraph:
    text = text.strip()
    fields = text.split(";")
    if len(fields) == 2:
        fields.append("")
    if len(fields) != 3:
        raise GraphParseError(f"expected 3 ';'-separated fields, got {len(fields)}", line, 1)
    count_text, label_text, edge_text = fields
    col_labels = len(count_text) + 2
    col_edges = col_labels + len(label_text) + 1
    try:
        n = int(count_text)
    except ValueError:
        raise GraphParseError(f"vertex count {count_text!r} is not an integer", line, 1) from None
    if n < 1:
        raise GraphParseError("vertex count must be >= 1", line, 1)
    labels = label_text.split(",")
    if len(labels) != n:
        raise GraphParseError(f"expected {n} labels, got {len(labels)}", line, col_labels)
    col = col_labels
    for lab in labels:
        if not _TOKEN.match(lab):
            raise GraphParseError(f"bad vertex label {lab!r}", line, col)
        col += len(lab) + 1

    edges: list[Edge] = []
    seen: set[tuple[int, int]] = set()
    col = col_edges
    for item in edge_text.split(",") if edge_text else []:
        m = re.fullmatch(r"(\d+)-(\d+):(.+)", item)
        if m is None:
            raise GraphParseError(f"bad edge {item!r}", line, col)
        i, j, lab = int(m.group(1)), int(m.group(2)), m.group(3)
        if not _TOKEN.match(lab):
            raise GraphParseError(f"bad edge label {lab!r}", line, col)
        if i == j:
            raise GraphParseError(f"self-loop on vertex {i}", line, col)
        if i >= n or j >= n:
            raise GraphParseError(f"edge {i}-{j} references a vertex >= {n}", line, col)
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphParseError(f"duplicate edge {i}-{j}", line, col)
        seen.add(key)
        edges.append((key[0], key[1], lab))
        col += len(item) + 1
    return LabeledGraph(tuple(labels), frozenset(edges))


# ---------------------------------------------------------------------------
# Canonical labeling: colour refinement + individualisation over the first
# non-singleton cell, keeping the lexicographically smallest relabeled graph.


def _refine(g: LabeledGraph, colors: list[int]) -> list[int]:
    n = len(colors)
    n_classes = len(set(colors))
    adj = g._adj
    while True:
        sigs = [
            (colors[v], tuple(sorted((lab, colors[u]) for u, lab in adj[v])))
            for v in range(n)
        ]
        rank = {s: r for r, s in enumerate(sorted(set(sigs)))}
        new = [rank[s] for s in sigs]
        k = len(rank)
        if k == n_classes:
            return new
        colors, n_classes = new, k


def _leaf_form(g: LabeledGraph, colors: list[int]) -> tuple[tuple[int, ...], tuple]:
    order = sorted(range(len(colors)), key=colors.__getitem__)
    pos = colors  # discrete partition: colour == position
    edges = tuple(sorted(
        (min(pos[i], pos[j]), max(pos[i], pos[j]), lab) for i, j, lab in g.edges
    ))
    return tuple(order), edges


def _dense(colors: list[int]) -> list[int]:
    rank = {c: r for r, c in enumerate(sorted(set(colors)))}
    return [rank[c] for c in colors]


def _orbit_roots(autos: list[tuple[int, ...]], fixed: tuple[int, ...], n: int) -> list[int]:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for gamma in autos:
        if any(gamma[v] != v for v in fixed):
            continue
        for v in range(n):
            a, b = find(v), find(gamma[v])
            if a != b:
                parent[max(a, b)] = min(a, b)
    return [find(v) for v in range(n)]


class _Search:
    """Individualisation-refinement with pruning by automorphisms found at leaves."""

    def __init__(self, g: LabeledGraph):
        self.g = g
        self.best: tuple[tuple[int, ...], tuple] | None = None
        self.autos: list[tuple[int, ...]] = []

    def run(self, colors: list[int], fixed: tuple[int, ...]) -> None:
        counts: dict[int, int] = {}
        for c in colors:
            counts[c] = counts.get(c, 0) + 1
        target = next((c for c in sorted(counts) if counts[c] > 1), None)
        if target is None:
            self._leaf(colors)
            return
        n = len(colors)
        tried: list[int] = []
        for v in range(n):
            if colors[v] != target:
                continue
            if tried and self.autos:
                roots = _orbit_roots(self.autos, fixed, n)
                if any(roots[v] == roots[u] for u in tried):
                    continue
            tried.append(v)
            # Split v off in front of its cell; ranks never depend on vertex ids.
            split = [2 * c + (0 if (u == v or c != target) else 1) for u, c in enumerate(colors)]
            self.run(_refine(self.g, _dense(split)), fixed + (v,))

    def _leaf(self, colors: list[int]) -> None:
        order, edges = _leaf_form(self.g, colors)
        if self.best is None or edges < self.best[1]:
            self.best = (order, edges)
        elif edges == self.best[1]:
            gamma = [0] * len(order)
            for a, b in zip(order, self.best[0]):
                gamma[a] = b
            self.autos.append(tuple(gamma))


@lru_cache(maxsize=1 << 16)
def _canonical(g: LabeledGraph) -> tuple[LabeledGraph, bytes]:
    label_rank = {lab: r for r, lab in enumerate(sorted(set(g.labels)))}
    search = _Search(g)
    search.run(_refine(g, [label_rank[lab] for lab in g.labels]), ())
    assert search.best is not None
    order, _ = search.best
    canon = g.relabel(order)
    return canon, serialize_graph(canon).encode("ascii")


def canonicalize(g: LabeledGraph) -> LabeledGraph:
    """Return the canonical relabeling of ``g`` (identical for isomorphic graphs)."""
    return _canonical(g)[0]


def canonical_form(g: LabeledGraph) -> bytes:
    return _canonical(g)[1]


def is_isomorphic(g1: LabeledGraph, g2: LabeledGraph) -> bool:
    if len(g1.labels) != len(g2.labels) or len(g1.edges) != len(g2.edges):
        return False
    if sorted(g1.labels) != sorted(g2.labels):
        return False
    return canonical_form(g1) == canonical_form(g2)
