"""The retrosynthesis MDP: multiset states, policy-ranked legal actions, deterministic steps."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .matcher import DEFAULT_LIMIT, Embedding, find_embeddings
from .molgraph import LabeledGraph, canonical_form, canonicalize, parse_graph, serialize_graph
from .rewrite import Production, RewriteError, apply

__all__ = [
    "DEFAULT_MAX_DEPTH",
    "DEFAULT_TOP_K",
    "Action",
    "BuildingBlockSet",
    "Expander",
    "PolicyLike",
    "State",
    "focus_molecule",
    "is_solved",
    "is_terminal",
    "legal_actions",
    "reward",
    "step",
]

DEFAULT_TOP_K = 50
DEFAULT_MAX_DEPTH = 20


class PolicyLike(Protocol):
    num_rules: int

    def probabilities(self, molecule: LabeledGraph) -> np.ndarray: ...


@dataclass(frozen=True)
class State:
    molecules: tuple[LabeledGraph, ...]
    depth: int = 0

    @classmethod
    def initial(cls, target: LabeledGraph) -> "State":
        return cls((canonicalize(target),), 0)

    @classmethod
    def of(cls, molecules: Iterable[LabeledGraph], depth: int = 0) -> "State":
        mols = sorted((canonicalize(m) for m in molecules), key=canonical_form)
        return cls(tuple(mols), depth)

    def key(self) -> tuple[bytes, ...]:
        return tuple(canonical_form(m) for m in self.molecules)

    def key_text(self) -> str:
        return " ".join(serialize_graph(m) for m in self.molecules) or "-"


@dataclass(frozen=True)
class BuildingBlockSet:
    keys: frozenset[bytes]

    @classmethod
    def from_graphs(cls, graphs: Iterable[LabeledGraph]) -> "BuildingBlockSet":
        return cls(frozenset(canonical_form(g) for g in graphs))

    @classmethod
    def parse(cls, text: str) -> "BuildingBlockSet":
        graphs = [
            parse_graph(line, n) for n, line in enumerate(text.splitlines(), 1) if line.strip()
        ]
        return cls.from_graphs(graphs)

    def __contains__(self, g: LabeledGraph) -> bool:
        return canonical_form(g) in self.keys

    def __len__(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class Action:
    molecule_key: bytes
    rule_id: int
    embedding: Embedding
    prior: float
    products: tuple[LabeledGraph, ...] = field(default=(), compare=False, repr=False)


def is_solved(s: State, bb: BuildingBlockSet) -> bool:
    return all(canonical_form(m) in bb.keys for m in s.molecules)


def reward(s: State, terminal: bool, solved: bool | None = None, bb: BuildingBlockSet | None = None) -> int:
    """+1 terminal and solved, -1 terminal and unsolved, 0 otherwise.

    Pass ``solved`` directly, or ``bb`` to have it computed.
    """
    if not terminal:
        return 0
    if solved is None:
        if bb is None:
            raise ValueError("reward needs either solved or bb")
        solved = is_solved(s, bb)
    return 1 if solved else -1


def is_terminal(s: State, bb: BuildingBlockSet, has_actions: bool, max_depth: int = DEFAULT_MAX_DEPTH) -> bool:
    return is_solved(s, bb) or not has_actions or s.depth >= max_depth


def focus_molecule(s: State, bb: BuildingBlockSet) -> LabeledGraph | None:
    best = None
    best_rank = None
    for m in s.molecules:
        key = canonical_form(m)
        if key in bb.keys:
            continue
        rank = (-len(m), key)
        if best_rank is None or rank < best_rank:
            best, best_rank = m, rank
    return best


@dataclass
class _RuleShape:
    labels: Counter
    edge_types: frozenset
    n_vertices: int
    n_edges: int


def _edge_types(g: LabeledGraph) -> set[tuple[str, str, str]]:
    out = set()
    for i, j, lab in g.edges:
        a, b = sorted((g.labels[i], g.labels[j]))
        out.add((a, lab, b))
    return out


class Expander:
    """Computes legal actions for molecules, memoised by canonical key.

    One instance belongs to one search; the cache makes repeated focus
    molecules (common across branches and rollouts) free to re-expand.
    """

    def __init__(
        self,
        rules: Sequence[Production],
        policy: PolicyLike | None = None,
        k: int = DEFAULT_TOP_K,
        embedding_cap: int = DEFAULT_LIMIT,
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.rules = list(rules)
        self.policy = policy
        self.k = k
        self.embedding_cap = embedding_cap
        self._shapes = [
            _RuleShape(Counter(r.pattern.labels), frozenset(_edge_types(r.pattern)), len(r.pattern), len(r.pattern.edges))
            for r in self.rules
        ]
        self._cache: dict[bytes, list[tuple[int, Embedding, tuple[LabeledGraph, ...], float]]] = {}
        self.rules_tested = 0

    def _ranked_rules(self, mol: LabeledGraph) -> list[tuple[int, float]]:
        from .policy import top_k, uniform_policy

        if self.policy is None:
            probs = uniform_policy(len(self.rules))
        else:
            probs = self.policy.probabilities(mol)
        return top_k(probs, self.k)

    def _possible(self, rid: int, labels: Counter, etypes: set, n: int, m: int) -> bool:
        shape = self._shapes[rid]
        if shape.n_vertices > n or shape.n_edges > m:
            return False
        if not shape.edge_types <= etypes:
            return False
        return all(labels[lab] >= c for lab, c in shape.labels.items())

    def expansions(self, mol: LabeledGraph) -> list[tuple[int, Embedding, tuple[LabeledGraph, ...], float]]:
        key = canonical_form(mol)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        labels = Counter(mol.labels)
        etypes = _edge_types(mol)
        out: list[tuple[int, Embedding, tuple[LabeledGraph, ...], float]] = []
        seen: set[tuple[bytes, ...]] = set()
        for rid, prob in self._ranked_rules(mol):
            self.rules_tested += 1
            if not self._possible(rid, labels, etypes, len(mol), len(mol.edges)):
                continue
            rule = self.rules[rid]
            survivors: list[tuple[Embedding, tuple[LabeledGraph, ...], tuple[bytes, ...]]] = []
            local: set[tuple[bytes, ...]] = set()
            for emb in find_embeddings(rule.pattern, mol, self.embedding_cap):
                try:
                    prods = apply(rule, mol, emb)
                except RewriteError:
                    continue
                pkey = tuple(canonical_form(p) for p in prods)
                if pkey in local:
                    continue
                local.add(pkey)
                survivors.append((emb, prods, pkey))
            if not survivors:
                continue
            share = float(prob) / len(survivors)
            for emb, prods, pkey in survivors:
                if pkey in seen:
                    continue
                seen.add(pkey)
                out.append((rid, emb, prods, share))
        # top_k already yields rules by prior then id; shares keep that order
        # except where a rule's split drops it below a later rule.
        out.sort(key=lambda t: (-t[3], t[0], t[1]))
        self._cache[key] = out
        return out

    def legal_actions(self, s: State, bb: BuildingBlockSet) -> list[Action]:
        focus = focus_molecule(s, bb)
        if focus is None:
            return []
        key = canonical_form(focus)
        return [Action(key, rid, emb, prior, prods) for rid, emb, prods, prior in self.expansions(focus)]


def legal_actions(
    s: State,
    rules: Sequence[Production],
    policy: PolicyLike | None,
    k: int = DEFAULT_TOP_K,
    bb: BuildingBlockSet | None = None,
    embedding_cap: int = DEFAULT_LIMIT,
) -> list[Action]:
    """Actions on the focus molecule from the ``k`` most probable rules.

    ``policy=None`` means the uniform policy.  ``bb=None`` treats no molecule
    as a building block.
    """
    return Expander(rules, policy, k, embedding_cap).legal_actions(s, bb or BuildingBlockSet(frozenset()))


def step(s: State, a: Action, rules: Sequence[Production]) -> State:
    mols = list(s.molecules)
    for idx, m in enumerate(mols):
        if canonical_form(m) == a.molecule_key:
            focus = mols.pop(idx)
            break
    else:
        raise ValueError("action's molecule is not in the state")
    prods = a.products or apply(rules[a.rule_id], focus, a.embedding)
    mols.extend(prods)
    mols.sort(key=canonical_form)
    return State(tuple(mols), s.depth + 1)
