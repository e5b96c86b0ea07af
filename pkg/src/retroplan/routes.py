"""Search results, the route text format, and route replay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

from .mdp import Action, BuildingBlockSet, State, is_solved, step
from .molgraph import LabeledGraph
from .rewrite import Production

__all__ = ["SOLVED", "TIMED_OUT", "UNSOLVED", "SearchResult", "format_route", "replay", "route_is_valid"]

SOLVED = "solved"
UNSOLVED = "unsolved"
TIMED_OUT = "timed-out"


@dataclass
class SearchResult:
    status: str
    route: list[Action]
    elapsed: float
    stats: dict[str, Any] = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


def replay(target: LabeledGraph, route: Sequence[Action], rules: Sequence[Production]) -> list[State]:
    """States visited by replaying ``route`` from ``target``; products are recomputed."""
    states = [State.initial(target)]
    for a in route:
        bare = Action(a.molecule_key, a.rule_id, a.embedding, a.prior)
        states.append(step(states[-1], bare, rules))
    return states


def route_is_valid(target: LabeledGraph, route: Sequence[Action], rules: Sequence[Production],
                   bb: BuildingBlockSet) -> bool:
    try:
        return is_solved(replay(target, route, rules)[-1], bb)
    except Exception:
        return False


def format_route(target: LabeledGraph, result: SearchResult, rules: Sequence[Production]) -> str:
    """``depth<TAB>ruleName<TAB>focusMoleculeKey<TAB>resultingStateKeys`` per step,
    then ``SOLVED`` or the upper-cased status."""
    lines = []
    states = replay(target, result.route, rules)
    for a, s in zip(result.route, states[1:]):
        lines.append(
            f"{s.depth}\t{rules[a.rule_id].name}\t{a.molecule_key.decode('ascii')}\t{s.key_text()}"
        )
    lines.append(result.status.upper())
    return "\n".join(lines) + "\n"
