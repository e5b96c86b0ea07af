import pytest

from conftest import SPLIT_BC, path_graph
from retroplan.bench import UniverseParams, generate_target, generate_universe
from retroplan.bfs import HEURISTIC, POLICY, BFSConfig, Branch, best_first_search, heuristic_cost, policy_cost
from retroplan.mdp import Action, BuildingBlockSet, State
from retroplan.policy import UniformPolicy
from retroplan.rewrite import load_rules
from retroplan.routes import SOLVED, TIMED_OUT, UNSOLVED, route_is_valid


def act(p):
    return Action(b"", 0, (), p)


def test_policy_cost_values():
    root = Branch(State(()))
    assert policy_cost(root) == 0
    assert policy_cost(Branch(State(()), (act(1.0), act(1.0)))) == 0
    assert policy_cost(Branch(State(()), (act(0.62),))) == pytest.approx(0.38)


def test_heuristic_cost_values():
    bb = BuildingBlockSet.from_graphs([path_graph("C")])
    seven = path_graph(*"NNNNNNN")
    assert heuristic_cost(Branch(State.initial(seven)), bb) == 7
    split = State.of([path_graph(*"NNNN"), path_graph(*"NNN")], depth=1)
    assert heuristic_cost(Branch(split), bb) == 8
    assert heuristic_cost(Branch(State.of([path_graph("C"), path_graph("C")], depth=4)), bb) == 4


def test_toy_heuristic_and_policy_modes():
    rules = load_rules(SPLIT_BC)
    bb = BuildingBlockSet.from_graphs([path_graph("A", "B"), path_graph("C")])
    target = path_graph("A", "B", "C")
    for mode, pol in ((HEURISTIC, None), (POLICY, UniformPolicy(1))):
        res = best_first_search(target, rules, bb, mode, pol)
        assert res.status == SOLVED and len(res.route) == 1
        assert res.stats["expansions"] == 1
        assert route_is_valid(target, res.route, rules, bb)


def test_building_block_target_needs_no_expansion():
    rules = load_rules(SPLIT_BC)
    bb = BuildingBlockSet.from_graphs([path_graph("C")])
    res = best_first_search(path_graph("C"), rules, bb, HEURISTIC)
    assert res.status == SOLVED and res.route == [] and res.stats["expansions"] == 0


def test_zero_budget_and_walltime():
    rules = load_rules(SPLIT_BC)
    bb = BuildingBlockSet.from_graphs([path_graph("C")])
    target = path_graph("A", "B", "C")
    assert best_first_search(target, rules, bb, HEURISTIC, cfg=BFSConfig(budget=0)).status == UNSOLVED
    assert best_first_search(target, rules, bb, HEURISTIC, cfg=BFSConfig(walltime=-1)).status == TIMED_OUT


def test_bad_arguments():
    rules = load_rules(SPLIT_BC)
    bb = BuildingBlockSet(frozenset())
    with pytest.raises(ValueError):
        best_first_search(path_graph("C"), rules, bb, POLICY)
    with pytest.raises(ValueError):
        best_first_search(path_graph("C"), rules, bb, "astar")


@pytest.fixture(scope="module")
def instance():
    rules, bbs = generate_universe(5, UniverseParams(num_rules=40))
    return generate_target(rules, bbs, 4, 2)


def test_policy_pops_are_monotone(instance):
    pol = UniformPolicy(len(instance.rules))
    res = best_first_search(instance.target, instance.rules, instance.bb, POLICY, pol,
                            BFSConfig(budget=300, record_pops=True))
    pops = res.stats["pop_costs"]
    assert pops == sorted(pops)


def test_uniform_policy_cost_by_depth():
    # one embedding per rule application keeps every prior at exactly 1/R
    rules = load_rules(
        "a|1;C;|1;N;|0->0.0\n"
        "b|1;N;|1;O;|0->0.0\n"
        "c|1;O;|1;C;|0->0.0\n"
    )
    bb = BuildingBlockSet.from_graphs([path_graph("S")])
    res = best_first_search(path_graph("C"), rules, bb, POLICY, UniformPolicy(3),
                            BFSConfig(budget=10, record_pops=True, max_depth=20))
    for depth, cost in enumerate(res.stats["pop_costs"]):
        assert cost == pytest.approx(depth * (1 - 1 / 3))


@pytest.mark.parametrize("mode", [HEURISTIC, POLICY])
def test_generated_instance_route_replays(instance, mode):
    pol = UniformPolicy(len(instance.rules))
    res = best_first_search(instance.target, instance.rules, instance.bb, mode, pol, BFSConfig(budget=9000))
    assert res.solved
    assert route_is_valid(instance.target, res.route, instance.rules, instance.bb)


def test_determinism(instance):
    pol = UniformPolicy(len(instance.rules))
    runs = [best_first_search(instance.target, instance.rules, instance.bb, POLICY, pol,
                              BFSConfig(budget=200, record_pops=True)) for _ in range(2)]
    assert runs[0].route == runs[1].route
    assert runs[0].stats["pop_costs"] == runs[1].stats["pop_costs"]


def test_untruncated_policy_tests_all_rules(instance):
    pol = UniformPolicy(len(instance.rules))
    small = best_first_search(instance.target, instance.rules, instance.bb, POLICY, pol,
                              BFSConfig(budget=1, top_k=5))
    full = best_first_search(instance.target, instance.rules, instance.bb, POLICY, pol,
                             BFSConfig(budget=1, top_k=5, truncate=False))
    assert small.stats["rules_tested"] == 5
    assert full.stats["rules_tested"] == len(instance.rules)
