import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import IDENTITY_C, SPLIT_BC, path_graph
from oracles import brute_embeddings
from retroplan.mdp import (
    Action,
    BuildingBlockSet,
    Expander,
    State,
    focus_molecule,
    is_solved,
    is_terminal,
    legal_actions,
    reward,
    step,
)
from retroplan.molgraph import LabeledGraph, canonical_form, parse_graph
from retroplan.policy import UniformPolicy
from retroplan.rewrite import RewriteError, apply, load_rules

TOY = """\
split_bc|2;B,C;0-1:1|1;B;;1;C;|0->0.0,1->1.0
split_nn|2;N,N;0-1:1|1;N;;1;N;|0->0.0,1->1.0
fgi_ab|2;A,B;0-1:1|2;A,B;0-1:2|0->0.0,1->0.1
strip_cx|2;C,X;0-1:1|1;C;|0->0.0
fgi_bb2|2;B,B;0-1:2|2;B,B;0-1:1|0->0.0,1->0.1
"""


def bb_of(*texts):
    return BuildingBlockSet.from_graphs(parse_graph(t) for t in texts)


class FixedPolicy:
    def __init__(self, probs):
        self.num_rules = len(probs)
        self._p = probs

    def probabilities(self, molecule):
        return self._p


def test_state_is_canonically_sorted():
    a, b = path_graph("A", "B"), path_graph("C")
    s1, s2 = State.of([a, b]), State.of([b, a])
    assert s1 == s2
    assert list(s1.key()) == sorted(s1.key())


def test_is_solved_cases():
    bb = bb_of("1;A;", "1;B;")
    assert is_solved(State.of([path_graph("A"), path_graph("B")]), bb)
    assert not is_solved(State.of([path_graph("A"), path_graph("C")]), bb)
    assert is_solved(State((), 3), bb)


@pytest.mark.parametrize("terminal,solved,expected", [(True, True, 1), (True, False, -1), (False, True, 0), (False, False, 0)])
def test_reward(terminal, solved, expected):
    assert reward(State(()), terminal, solved) == expected


def test_reward_from_bb():
    bb = bb_of("1;A;")
    assert reward(State.of([path_graph("A")]), True, bb=bb) == 1
    assert reward(State.of([path_graph("B")]), True, bb=bb) == -1
    with pytest.raises(ValueError):
        reward(State(()), True)


def test_terminal_conditions():
    bb = bb_of("1;A;")
    s = State.of([path_graph("B")], depth=3)
    assert not is_terminal(s, bb, True)
    assert is_terminal(s, bb, False)
    assert is_terminal(s, bb, True, max_depth=3)
    assert is_terminal(State.of([path_graph("A")]), bb, True)


def test_focus_molecule():
    bb = bb_of("1;A;")
    assert focus_molecule(State.of([path_graph("A")]), bb) is None
    five = path_graph(*"BBBBB")
    seven = path_graph(*"CCCCCCC")
    assert canonical_form(focus_molecule(State.of([five, seven]), bb)) == canonical_form(seven)
    one = path_graph("C", "N")
    assert canonical_form(focus_molecule(State.of([one]), bb)) == canonical_form(one)


def test_focus_tie_goes_to_smallest_key():
    x, y = path_graph("B", "C"), path_graph("A", "C")
    f = focus_molecule(State.of([x, y]), bb_of("1;Q;"))
    assert canonical_form(f) == min(canonical_form(x), canonical_form(y))


def test_uniform_split_over_three_rules():
    rules = load_rules(TOY)
    host = parse_graph("4;A,B,C,X;0-1:1,1-2:1,2-3:1")
    acts = legal_actions(State.initial(host), rules, None)
    assert sorted({a.rule_id for a in acts}) == [0, 2, 3]
    assert all(a.prior == pytest.approx(1 / len(rules)) for a in acts)


def test_toy_universe_matches_bruteforce():
    rules = load_rules(TOY)
    host = parse_graph("3;A,B,C;0-1:1,1-2:1")
    expect = set()
    for r in rules:
        for e in brute_embeddings(r.pattern, host):
            try:
                apply(r, host, e)
            except RewriteError:
                continue
            expect.add(r.id)
    assert expect == {0, 2}
    acts = legal_actions(State.initial(host), rules, None)
    assert {a.rule_id for a in acts} == expect


def test_k_larger_than_rule_count():
    rules = load_rules(TOY)
    host = parse_graph("3;A,B,C;0-1:1,1-2:1")
    assert legal_actions(State.initial(host), rules, None, k=1000) == legal_actions(
        State.initial(host), rules, None, k=len(rules)
    )


def test_top_k_truncates_by_policy():
    rules = load_rules(TOY)
    host = parse_graph("3;A,B,C;0-1:1,1-2:1")
    pol = FixedPolicy([0.1, 0.0, 0.6, 0.2, 0.1])
    acts = legal_actions(State.initial(host), rules, pol, k=1)
    assert [a.rule_id for a in acts] == [2]
    acts = legal_actions(State.initial(host), rules, pol, k=5)
    assert [a.rule_id for a in acts] == [2, 0]
    assert [a.prior for a in acts] == [0.6, 0.1]


def test_prior_split_among_distinct_embeddings():
    rules = load_rules("cut_cc|2;C,C;0-1:1|1;C;;1;C;|0->0.0,1->1.0\n")
    host = path_graph("C", "C", "C", "C", "N")
    acts = legal_actions(State.initial(host), rules, None)
    # three C-C bonds, each cut gives a different product pair
    assert len(acts) == 3
    assert sum(a.prior for a in acts) == pytest.approx(1.0)


def test_symmetric_embeddings_deduplicated():
    rules = load_rules("cut_cc|2;C,C;0-1:1|1;C;;1;C;|0->0.0,1->1.0\n")
    acts = legal_actions(State.initial(path_graph("C", "C")), rules, None)
    assert len(acts) == 1 and acts[0].prior == 1.0


def test_actions_on_solved_state_are_empty():
    rules = load_rules(TOY)
    assert legal_actions(State.of([path_graph("B", "C")]), rules, None, bb=bb_of("2;B,C;0-1:1")) == []


def test_step_identity_rule():
    rules = load_rules(IDENTITY_C)
    s = State.initial(path_graph("C"))
    (a,) = legal_actions(s, rules, None)
    t = step(s, a, rules)
    assert t.key() == s.key() and t.depth == 1


def test_step_binary_split():
    rules = load_rules(SPLIT_BC)
    s = State.initial(path_graph("A", "B", "C"))
    (a,) = legal_actions(s, rules, None)
    t = step(s, a, rules)
    assert t == State.of([path_graph("A", "B"), path_graph("C")], depth=1)
    assert step(s, a, rules) == t
    # recomputing products gives the same state
    bare = Action(a.molecule_key, a.rule_id, a.embedding, a.prior)
    assert step(s, bare, rules) == t


def test_step_rejects_foreign_action():
    rules = load_rules(SPLIT_BC)
    s = State.initial(path_graph("A", "B", "C"))
    with pytest.raises(ValueError):
        step(s, Action(b"nope", 0, (0, 1), 1.0), rules)


def test_expander_caches_per_molecule():
    rules = load_rules(TOY)
    ex = Expander(rules, UniformPolicy(len(rules)))
    host = parse_graph("3;A,B,C;0-1:1,1-2:1")
    first = ex.expansions(host)
    tested = ex.rules_tested
    assert ex.expansions(host) is first
    assert ex.rules_tested == tested


def test_expander_rejects_bad_k():
    with pytest.raises(ValueError):
        Expander(load_rules(TOY), None, 0)


def _random_host(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 7)
    edges = [(rng.randrange(v), v, rng.choice("12")) for v in range(1, n)]
    return LabeledGraph.build([rng.choice("ABCNX") for _ in range(n)], edges)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_action_invariants(seed, k):
    rules = load_rules(TOY)
    s = State.initial(_random_host(seed))
    acts = legal_actions(s, rules, None, k=k, embedding_cap=4)
    assert len(acts) <= k * 4
    assert all(0 < a.prior <= 1 for a in acts)
    assert sum(a.prior for a in acts) <= 1 + 1e-9
    keys = [tuple(canonical_form(p) for p in a.products) for a in acts]
    assert len(set(keys)) == len(keys)
    order = [(-a.prior, a.rule_id, a.embedding) for a in acts]
    assert order == sorted(order)
    for a in acts:
        t1, t2 = step(s, a, rules), step(s, a, rules)
        assert t1 == t2 and t1.depth == 1
