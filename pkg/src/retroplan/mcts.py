"""Single-player MCTS with policy priors in selection, expansion and rollout."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Sequence

from .mdp import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_TOP_K,
    Action,
    BuildingBlockSet,
    Expander,
    PolicyLike,
    State,
    is_solved,
    step,
)
from .molgraph import LabeledGraph
from .rewrite import Production
from .routes import SOLVED, TIMED_OUT, UNSOLVED, SearchResult

__all__ = ["SearchConfig", "SearchNode", "backup", "expand", "rollout", "search", "select_child", "uct_score"]


@dataclass
class SearchConfig:
    c: float = 3.0
    top_k: int = DEFAULT_TOP_K
    rollout_depth: int = DEFAULT_MAX_DEPTH
    budget: int = 9000
    walltime: float = math.inf
    seed: int = 0
    stop_at_first: bool = True
    greedy_rollout: bool = False


@dataclass(eq=False)
class SearchNode:
    state: State
    action: Action | None = None
    prior: float = 1.0
    visits: int = 0
    value: float = 0.0
    children: list["SearchNode"] = field(default_factory=list)
    expanded: bool = False
    terminal: bool = False
    solved: bool = False

    def iter_nodes(self):
        stack = [self]
        while stack:
            v = stack.pop()
            yield v
            stack.extend(v.children)


def uct_score(child: SearchNode, parent_visits: int, c: float) -> float:
    mean = child.value / child.visits if child.visits else 0.0
    return mean + c * child.prior * math.sqrt(parent_visits) / (1 + child.visits)


def select_child(v: SearchNode, c: float = 3.0) -> SearchNode:
    best, best_score = None, -math.inf
    for child in v.children:
        score = uct_score(child, v.visits, c)
        if score > best_score:
            best, best_score = child, score
    assert best is not None, "select_child on a node without children"
    return best


def expand(v: SearchNode, expander: Expander, bb: BuildingBlockSet, max_depth: int = DEFAULT_MAX_DEPTH) -> None:
    v.expanded = True
    if is_solved(v.state, bb):
        v.terminal = v.solved = True
        return
    if v.state.depth >= max_depth:
        v.terminal = True
        return
    actions = expander.legal_actions(v.state, bb)
    if not actions:
        v.terminal = True
        return
    v.children = [SearchNode(step(v.state, a, expander.rules), a, a.prior) for a in actions]


def rollout(
    s: State,
    expander: Expander,
    bb: BuildingBlockSet,
    depth_cap: int,
    rng: random.Random,
    greedy: bool = False,
) -> tuple[int, list[Action]]:
    """Play out from ``s`` by sampling policy priors; returns (reward, actions taken)."""
    taken: list[Action] = []
    while True:
        if is_solved(s, bb):
            return 1, taken
        if s.depth >= depth_cap:
            return -1, taken
        actions = expander.legal_actions(s, bb)
        if not actions:
            return -1, taken
        if greedy:
            a = actions[0]
        else:
            a = rng.choices(actions, weights=[x.prior for x in actions])[0]
        s = step(s, a, expander.rules)
        taken.append(a)


def backup(path: Sequence[SearchNode], r: float) -> None:
    for v in path:
        v.visits += 1
        v.value += r


def search(
    target: LabeledGraph,
    rules: Sequence[Production],
    bb: BuildingBlockSet,
    policy: PolicyLike | None,
    cfg: SearchConfig | None = None,
) -> SearchResult:
    cfg = cfg or SearchConfig()
    t0 = time.perf_counter()
    rng = random.Random(cfg.seed)
    expander = Expander(rules, policy, cfg.top_k)
    root = SearchNode(State.initial(target))
    status, route = UNSOLVED, []
    sims = 0
    if is_solved(root.state, bb):
        status = SOLVED
    else:
        while sims < cfg.budget:
            if time.perf_counter() - t0 > cfg.walltime:
                status = TIMED_OUT
                break
            path = [root]
            v = root
            while v.expanded and v.children:
                v = select_child(v, cfg.c)
                path.append(v)
            if not v.expanded:
                expand(v, expander, bb, cfg.rollout_depth)
            if v.terminal:
                r, suffix = (1 if v.solved else -1), []
            else:
                r, suffix = rollout(v.state, expander, bb, cfg.rollout_depth, rng, cfg.greedy_rollout)
            backup(path, r)
            sims += 1
            if r > 0 and not route:
                route = [n.action for n in path[1:]] + suffix
                status = SOLVED
                if cfg.stop_at_first:
                    break
            if root.terminal:
                break
    elapsed = time.perf_counter() - t0
    stats = {
        "simulations": sims,
        "nodes": sum(1 for _ in root.iter_nodes()),
        "distinct_molecules_expanded": len(expander._cache),
        "rules_tested": expander.rules_tested,
        "root": root,
    }
    return SearchResult(status, route, elapsed, stats)
