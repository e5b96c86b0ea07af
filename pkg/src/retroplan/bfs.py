"""Best-first search over branches, costed by a size heuristic or by policy priors."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from typing import Sequence

from .mdp import DEFAULT_MAX_DEPTH, DEFAULT_TOP_K, Action, BuildingBlockSet, Expander, PolicyLike, State, is_solved, step
from .molgraph import LabeledGraph, canonical_form
from .rewrite import Production
from .routes import SOLVED, TIMED_OUT, UNSOLVED, SearchResult

__all__ = ["HEURISTIC", "POLICY", "BFSConfig", "Branch", "best_first_search", "heuristic_cost", "policy_cost"]

HEURISTIC = "heuristic"
POLICY = "policy"


@dataclass
class BFSConfig:
    budget: int = 9000
    walltime: float = math.inf
    top_k: int = DEFAULT_TOP_K
    truncate: bool = True  # policy mode only; False tests every rule
    max_depth: int = DEFAULT_MAX_DEPTH
    record_pops: bool = False


@dataclass(frozen=True)
class Branch:
    state: State
    actions: tuple[Action, ...] = ()

    @property
    def priors(self) -> tuple[float, ...]:
        return tuple(a.prior for a in self.actions)


def policy_cost(branch: Branch) -> float:
    return sum(1.0 - p for p in branch.priors)


def heuristic_cost(branch: Branch, bb: BuildingBlockSet) -> float:
    remaining = sum(len(m) for m in branch.state.molecules if canonical_form(m) not in bb.keys)
    return float(branch.state.depth + remaining)


def best_first_search(
    target: LabeledGraph,
    rules: Sequence[Production],
    bb: BuildingBlockSet,
    cost_mode: str,
    policy: PolicyLike | None = None,
    cfg: BFSConfig | None = None,
) -> SearchResult:
    cfg = cfg or BFSConfig()
    if cost_mode == HEURISTIC:
        expander = Expander(rules, None, len(rules))
    elif cost_mode == POLICY:
        if policy is None:
            raise ValueError("policy cost needs a policy")
        expander = Expander(rules, policy, cfg.top_k if cfg.truncate else len(rules))
    else:
        raise ValueError(f"unknown cost mode {cost_mode!r}")

    def cost_of(b: Branch, parent_cost: float) -> float:
        if cost_mode == POLICY:
            return parent_cost + (1.0 - b.actions[-1].prior)
        return heuristic_cost(b, bb)

    t0 = time.perf_counter()
    counter = itertools.count()
    root = Branch(State.initial(target))
    start_cost = 0.0 if cost_mode == POLICY else heuristic_cost(root, bb)
    heap: list[tuple[float, int, Branch]] = [(start_cost, next(counter), root)]
    expansions = 0
    pops: list[float] = []
    status, route = UNSOLVED, []
    while heap:
        if time.perf_counter() - t0 > cfg.walltime:
            status = TIMED_OUT
            break
        cost, _, branch = heapq.heappop(heap)
        if cfg.record_pops:
            pops.append(cost)
        if is_solved(branch.state, bb):
            status, route = SOLVED, list(branch.actions)
            break
        if expansions >= cfg.budget:
            break
        expansions += 1
        if branch.state.depth >= cfg.max_depth:
            continue
        for a in expander.legal_actions(branch.state, bb):
            child = Branch(step(branch.state, a, rules), branch.actions + (a,))
            heapq.heappush(heap, (cost_of(child, cost), next(counter), child))
    elapsed = time.perf_counter() - t0
    stats = {
        "expansions": expansions,
        "queue_size": len(heap),
        "distinct_molecules_expanded": len(expander._cache),
        "rules_tested": expander.rules_tested,
    }
    if cfg.record_pops:
        stats["pop_costs"] = pops
    return SearchResult(status, route, elapsed, stats)
