"""Label-preserving subgraph embeddings (monomorphisms) of a pattern into a host."""

from __future__ import annotations

from collections import Counter
from typing import Iterator

from .molgraph import LabeledGraph

__all__ = ["DEFAULT_LIMIT", "find_embeddings", "is_applicable", "quick_reject"]

DEFAULT_LIMIT = 32

Embedding = tuple[int, ...]


def quick_reject(pattern: LabeledGraph, host: LabeledGraph) -> bool:
    """Cheap necessary-condition test: True means no embedding can exist."""
    if len(pattern.labels) > len(host.labels) or len(pattern.edges) > len(host.edges):
        return True
    have = Counter(host.labels)
    for lab, k in Counter(pattern.labels).items():
        if have[lab] < k:
            return True
    return False


def _search_order(pattern: LabeledGraph, host: LabeledGraph) -> list[int]:
    """Rarest host label first, then highest degree; later vertices stay adjacent
    to earlier ones whenever the pattern is connected."""
    rarity = Counter(host.labels)

    def rank(p: int) -> tuple[int, int, int]:
        return (rarity[pattern.labels[p]], -pattern.degree(p), p)

    n = len(pattern.labels)
    order = [min(range(n), key=rank)]
    placed = set(order)
    while len(order) < n:
        frontier = {u for v in order for u, _ in pattern.neighbors(v) if u not in placed}
        pool = frontier or (set(range(n)) - placed)
        nxt = min(pool, key=rank)
        order.append(nxt)
        placed.add(nxt)
    return order


def _iter_embeddings(pattern: LabeledGraph, host: LabeledGraph) -> Iterator[Embedding]:
    if quick_reject(pattern, host):
        return
    n = len(pattern.labels)
    order = _search_order(pattern, host)
    p_labels, h_labels = pattern.labels, host.labels
    # Incident-edge signature (edge label, neighbour label) must be covered by the host vertex.
    p_sig = [Counter((lab, p_labels[u]) for u, lab in pattern.neighbors(p)) for p in range(n)]
    h_sig = [Counter((lab, h_labels[u]) for u, lab in host.neighbors(h)) for h in range(len(h_labels))]

    # For each step: the earlier-placed pattern neighbours and the edge labels to them.
    back: list[list[tuple[int, str]]] = []
    for k, p in enumerate(order):
        earlier = set(order[:k])
        back.append([(u, lab) for u, lab in pattern.neighbors(p) if u in earlier])

    mapping = [-1] * n
    used = [False] * len(h_labels)

    def feasible(p: int, h: int) -> bool:
        if used[h] or h_labels[h] != p_labels[p] or host.degree(h) < pattern.degree(p):
            return False
        hs = h_sig[h]
        for key, cnt in p_sig[p].items():
            if hs[key] < cnt:
                return False
        return True

    def extend(k: int) -> Iterator[Embedding]:
        if k == n:
            yield tuple(mapping)
            return
        p = order[k]
        links = back[k]
        if links:
            anchor, lab0 = links[0]
            cands = [h for h, lab in host.neighbors(mapping[anchor]) if lab == lab0]
        else:
            cands = range(len(h_labels))
        for h in cands:
            if not feasible(p, h):
                continue
            if any(host.edge_label(mapping[u], h) != lab for u, lab in links[1:]):
                continue
            mapping[p] = h
            used[h] = True
            yield from extend(k + 1)
            used[h] = False
            mapping[p] = -1

    yield from extend(0)


def find_embeddings(
    pattern: LabeledGraph, host: LabeledGraph, limit: int = DEFAULT_LIMIT
) -> list[Embedding]:
    """Embeddings as tuples ``e`` with ``e[pattern_vertex] = host_vertex``.

    Returns the ``limit`` smallest embeddings in lexicographic order of the host
    index tuple.  Automorphic images are reported separately.
    """
    if len(pattern.labels) < 1:
        raise ValueError("pattern must have at least one vertex")
    if limit < 1:
        raise ValueError("limit must be >= 1")
    return sorted(_iter_embeddings(pattern, host))[:limit]


def is_applicable(pattern: LabeledGraph, host: LabeledGraph) -> bool:
    return next(_iter_embeddings(pattern, host), None) is not None
