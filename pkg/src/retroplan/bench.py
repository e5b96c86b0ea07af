"""Synthetic rule universes, forward-generated targets, and the benchmark harness.

Targets are built in the synthesis direction: start from a building block and
run retro rules right-to-left, joining in further building blocks for binary
rules.  The recorded trace, read backwards, is a known retrosynthetic route.
"""

from __future__ import annotations

import math
import random
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bfs import HEURISTIC, POLICY, BFSConfig, best_first_search
from .matcher import DEFAULT_LIMIT, find_embeddings
from .mcts import SearchConfig, search
from .mdp import Action, BuildingBlockSet, Expander, State, focus_molecule, is_solved, step
from .molgraph import LabeledGraph, canonical_form, canonicalize, parse_graph, serialize_graph
from .policy import DEFAULT_FP_SIZE, NetworkPolicy, PolicyWeights, UniformPolicy, featurize
from .rewrite import Production, RewriteError, apply, apply_forward, dump_rules, load_rules
from .routes import SOLVED, TIMED_OUT, SearchResult, route_is_valid

__all__ = [
    "BenchConfig",
    "BenchReport",
    "BundleFormatError",
    "METHODS",
    "MethodRow",
    "ProblemInstance",
    "TraceStep",
    "UniverseParams",
    "canonical_method",
    "find_bundles",
    "generate_target",
    "generate_universe",
    "load_bundle",
    "mean_branching",
    "read_train_bin",
    "reference_route",
    "replay_trace",
    "run_benchmark",
    "run_method",
    "training_corpus",
    "training_pairs",
    "write_bundle",
    "write_train_bin",
]

METHODS = ("bfs-heuristic", "bfs-policy", "mcts-policy")
METHOD_ALIASES = {"mcts": "mcts-policy"}
EDGE_LABELS = ("1", "2")


@dataclass
class UniverseParams:
    num_rules: int = 300
    label_alphabet: int = 10
    num_building_blocks: int = 40
    bb_size: tuple[int, int] = (4, 7)
    pattern_size: tuple[int, int] = (2, 4)
    binary_fraction: float = 0.4
    relabel_fraction: float = 0.6
    leaving_group_prob: float = 0.5
    strip2_prob: float = 0.5


def _labels(n: int) -> list[str]:
    base = "CNOSPBFIKLMQRTUVWZ"
    if n > len(base):
        return [f"L{i}" for i in range(n)]
    return list(base[:n])


def _random_tree(rng: random.Random, n: int, labels: Sequence[str]) -> LabeledGraph:
    edges = [(rng.randrange(v), v, rng.choice(EDGE_LABELS)) for v in range(1, n)]
    return LabeledGraph.build([rng.choice(labels) for _ in range(n)], edges)


def _random_molecule(rng: random.Random, n: int, labels: Sequence[str], ring_prob: float = 0.3) -> LabeledGraph:
    g = _random_tree(rng, n, labels)
    if n >= 3 and rng.random() < ring_prob:
        present = {(i, j) for i, j, _ in g.edges}
        extra = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in present]
        if extra:
            i, j = rng.choice(extra)
            g = LabeledGraph(g.labels, g.edges | {(i, j, rng.choice(EDGE_LABELS))})
    return g


def _random_rule(rng: random.Random, rid: int, p: UniverseParams, labels: Sequence[str], leaving: str) -> Production:
    n = rng.randint(*p.pattern_size)
    pattern = _random_tree(rng, n, labels)
    roll = rng.random()
    if roll < p.binary_fraction and n >= 2:
        # Retro disconnection of one pattern edge into two fragments.
        i, j, _ = rng.choice(sorted(pattern.edges))
        rest = [(a, b, lab) for a, b, lab in pattern.edges if (a, b) != (i, j)]
        side = {i}
        grew = True
        while grew:
            grew = False
            for a, b, _ in rest:
                if (a in side) != (b in side):
                    side.add(b if a in side else a)
                    grew = True
        groups = [sorted(side), sorted(set(range(n)) - side)]
        cut = [i, j]
        products, iface = [], [None] * n
        for k, members in enumerate(groups):
            local = {v: q for q, v in enumerate(members)}
            plabels = [pattern.labels[v] for v in members]
            pedges = [(local[a], local[b], lab) for a, b, lab in rest if a in local and b in local]
            if rng.random() < p.leaving_group_prob:
                plabels.append(leaving)
                pedges.append((local[cut[k]], len(plabels) - 1, "1"))
            products.append(LabeledGraph.build(plabels, pedges))
            for v in members:
                iface[v] = (k, local[v])
        kind = "split"
    elif roll < p.binary_fraction + p.relabel_fraction:
        # Retro interconversion: one vertex or edge changes label.
        plabels = list(pattern.labels)
        pedges = sorted(pattern.edges)
        if pedges and rng.random() < 0.5:
            k = rng.randrange(len(pedges))
            a, b, lab = pedges[k]
            pedges[k] = (a, b, next(x for x in EDGE_LABELS if x != lab))
        else:
            v = rng.randrange(n)
            plabels[v] = rng.choice([x for x in labels if x != plabels[v]])
        products = [LabeledGraph.build(plabels, pedges)]
        iface = [(0, v) for v in range(n)]
        kind = "fgi"
    else:
        # Retro removal of a pendant vertex, or a pendant two-vertex chain.
        leaves = [v for v in range(n) if pattern.degree(v) == 1]
        drop = {rng.choice(leaves)}
        if rng.random() < p.strip2_prob:
            chains = [
                (v, u) for v in leaves for u, _ in pattern.neighbors(v)
                if pattern.degree(u) == 2 and n > 2
            ]
            if chains:
                drop = set(rng.choice(chains))
        keep = [v for v in range(n) if v not in drop]
        local = {v: q for q, v in enumerate(keep)}
        products = [LabeledGraph.build(
            [pattern.labels[v] for v in keep],
            [(local[a], local[b], lab) for a, b, lab in pattern.edges if a in local and b in local],
        )]
        iface = [None if v in drop else (0, local[v]) for v in range(n)]
        kind = "strip" if len(drop) == 1 else "strip2"
    rule = Production(rid, f"r{rid:04d}_{kind}", pattern, tuple(products), tuple(iface))
    rule.validate()
    return rule


def generate_universe(seed: int, params: UniverseParams | None = None) -> tuple[list[Production], list[LabeledGraph]]:
    """Random rules and building blocks; deterministic per seed."""
    p = params or UniverseParams()
    rng = random.Random(f"universe:{seed}")
    labels = _labels(p.label_alphabet)
    leaving = "X"
    bbs: list[LabeledGraph] = []
    seen: set[bytes] = set()
    while len(bbs) < p.num_building_blocks:
        g = canonicalize(_random_molecule(rng, rng.randint(*p.bb_size), labels))
        key = canonical_form(g)
        if key not in seen:
            seen.add(key)
            bbs.append(g)
    # Building blocks carrying a leaving group make binary rules with X usable forward.
    for k in range(0, len(bbs), 2):
        g = bbs[k]
        v = rng.randrange(len(g))
        with_x = canonicalize(LabeledGraph.build(list(g.labels) + [leaving], list(g.edges) + [(v, len(g), "1")]))
        if canonical_form(with_x) not in seen:
            seen.discard(canonical_form(g))
            seen.add(canonical_form(with_x))
            bbs[k] = with_x
    rules = [_random_rule(rng, rid, p, labels, leaving) for rid in range(p.num_rules)]
    # Round-trip through the text format so the universe is exactly what a bundle stores.
    rules = load_rules(dump_rules(rules))
    bbs = sorted(bbs, key=canonical_form)
    return rules, bbs


@dataclass(frozen=True)
class TraceStep:
    rule_id: int
    product: LabeledGraph
    precursors: tuple[LabeledGraph, ...]

    def to_line(self) -> str:
        pre = " ".join(serialize_graph(g) for g in self.precursors)
        return f"{self.rule_id}\t{serialize_graph(self.product)}\t{pre}"

    @classmethod
    def parse(cls, line: str) -> "TraceStep":
        rid, prod, pre = line.rstrip("\n").split("\t")
        return cls(int(rid), parse_graph(prod), tuple(parse_graph(t) for t in pre.split(" ")))


@dataclass
class ProblemInstance:
    rules: list[Production]
    building_blocks: list[LabeledGraph]
    target: LabeledGraph
    trace: list[TraceStep]
    seed: int
    name: str = ""
    bb: BuildingBlockSet = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.bb = BuildingBlockSet.from_graphs(self.building_blocks)


def _join(
    rng: random.Random,
    rule: Production,
    mols: Sequence[LabeledGraph],
    sites: Sequence[frozenset[int] | None],
    tries: int = 6,
) -> tuple[LabeledGraph, tuple[LabeledGraph, ...]] | None:
    """Run ``rule`` right-to-left on ``mols`` (in either slot order for binary rules).

    A precursor with a recorded reaction site must be matched on at least one
    site vertex.  Returns (new molecule, canonical precursors) only if the retro
    application at the pattern's position gives the precursors back exactly.
    The new molecule is not canonicalized: its reaction site is
    ``range(len(rule.pattern))``.
    """
    if len(mols) != rule.arity:
        return None
    slots = list(zip(mols, sites))
    perms = [slots] if rule.arity == 1 else [slots, slots[::-1]]
    rng.shuffle(perms)
    for order in perms:
        per_slot = []
        for k, (m, site) in enumerate(order):
            embs = find_embeddings(rule.products[k], m, DEFAULT_LIMIT)
            if site is not None:
                embs = [e for e in embs if not site.isdisjoint(e)]
            per_slot.append(embs)
        if not all(per_slot):
            continue
        precursors = [m for m, _ in order]
        for _ in range(tries):
            embeddings = [rng.choice(e) for e in per_slot]
            try:
                mol = apply_forward(rule, precursors, embeddings)
                back = apply(rule, mol, tuple(range(len(rule.pattern))))
            except RewriteError:
                continue
            want = sorted(canonical_form(g) for g in precursors)
            if [canonical_form(g) for g in back] == want:
                pre = tuple(sorted((canonicalize(g) for g in precursors), key=canonical_form))
                return mol, pre
    return None


class _Builder:
    """Recursive forward construction.  Intermediates are kept uncanonicalized
    together with their last reaction site, so the next step can be required to
    touch it (``locality``); local steps cannot be reordered in the retro route."""

    def __init__(self, rules: Sequence[Production], bbs: Sequence[LabeledGraph], rng: random.Random,
                 unary_prob: float, max_size: int, popularity: float, locality: float,
                 rule_tries: int | None):
        self.rules = rules
        self.bbs = bbs
        self.bb_keys = {canonical_form(b) for b in bbs}
        self.rng = rng
        self.unary_prob = unary_prob
        self.max_size = max_size
        self.locality = locality
        self.rule_tries = rule_tries
        self.by_arity = {k: [r.id for r in rules if r.arity == k] for k in (1, 2)}
        self.weight = [(r.id + 1) ** -popularity for r in rules]

    def _rule_order(self, arity: int) -> list[int]:
        # Weighted random permutation: popular (low-id) rules tend to come first.
        keyed = [(self.rng.random() ** (1.0 / self.weight[rid]), rid) for rid in self.by_arity[arity]]
        return [rid for _, rid in sorted(keyed, reverse=True)]

    def build(self, d: int, tries: int = 8) -> tuple[LabeledGraph, frozenset[int] | None, list[TraceStep]] | None:
        rng = self.rng
        if d == 0:
            return rng.choice(self.bbs), None, []
        for _ in range(tries):
            if rng.random() < self.unary_prob:
                split = [d - 1]
            else:
                d1 = rng.randint(0, d - 1)
                split = [d1, d - 1 - d1]
            parts = [self.build(k, max(1, tries // 2)) for k in split]
            if any(p is None for p in parts):
                continue
            mols = [p[0] for p in parts]
            local = rng.random() < self.locality
            sites = [p[1] if local else None for p in parts]
            steps = [s for p in parts for s in p[2]]
            avoid = self.bb_keys | {canonical_form(s.product) for s in steps}
            for rid in self._rule_order(len(mols))[:self.rule_tries]:
                got = _join(rng, self.rules[rid], mols, sites)
                if got is None:
                    continue
                mol, pre = got
                if canonical_form(mol) in avoid or len(mol) > self.max_size:
                    continue
                site = frozenset(range(len(self.rules[rid].pattern)))
                return mol, site, steps + [TraceStep(rid, canonicalize(mol), pre)]
        return None


def generate_target(
    rules: Sequence[Production],
    building_blocks: Sequence[LabeledGraph],
    depth: int,
    seed: int,
    max_size: int = 40,
    unary_prob: float = 0.85,
    popularity: float = 2.0,
    locality: float = 1.0,
    rule_tries: int | None = None,
) -> ProblemInstance:
    """Forward-generate a target whose reference route has exactly ``depth`` steps.

    Construction is recursive: a step either transforms one intermediate
    (probability ``unary_prob``) or joins two, each built the same way from
    building blocks, so routes can be convergent.  Dead ends retry with a new
    seed offset.  Rules are tried in a random order weighted by
    ``(rule_id + 1) ** -popularity``, giving the power-law rule usage of
    reaction corpora; ``popularity=0`` is uniform.  With probability
    ``locality`` a step must act on the previous step's reaction site.  Only
    the first ``rule_tries`` rules of the weighted order are tried per step
    (all if None), which keeps rare rules rare.
    """
    bbs = list(building_blocks)
    for attempt in range(200):
        rng = random.Random(f"target:{seed}:{attempt}")
        got = _Builder(rules, bbs, rng, unary_prob, max_size, popularity, locality,
                       rule_tries).build(depth)
        if got is not None:
            break
    else:
        raise RuntimeError(f"could not generate a depth-{depth} target from seed {seed}")
    target, _, trace = got
    inst = ProblemInstance(list(rules), bbs, canonicalize(target), trace, seed, name=f"seed{seed}")
    if not replay_trace(inst):
        raise RuntimeError(f"generated instance {seed} fails its replay check")
    return inst


def replay_trace(inst: ProblemInstance) -> bool:
    """Follow the reversed trace through ``mdp.step`` from the target; True if it ends solved."""
    by_product = {canonical_form(t.product): t for t in inst.trace}
    s = State.initial(inst.target)
    for _ in range(len(inst.trace) + 1):
        if is_solved(s, inst.bb):
            return True
        focus = focus_molecule(s, inst.bb)
        t = by_product.get(canonical_form(focus))
        if t is None:
            return False
        rule = inst.rules[t.rule_id]
        want = tuple(canonical_form(g) for g in t.precursors)
        for emb in find_embeddings(rule.pattern, focus, 10_000):
            try:
                prods = apply(rule, focus, emb)
            except RewriteError:
                continue
            if tuple(canonical_form(g) for g in prods) == want:
                s = step(s, Action(canonical_form(focus), t.rule_id, emb, 1.0), inst.rules)
                break
        else:
            return False
    return is_solved(s, inst.bb)


def reference_route(inst: ProblemInstance) -> list[tuple[LabeledGraph, int]]:
    """(focus molecule, rule id) pairs in retro order along the reversed trace."""
    return [(t.product, t.rule_id) for t in reversed(inst.trace)]


def training_pairs(inst: ProblemInstance, fp_size: int = DEFAULT_FP_SIZE) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([featurize(t.product, fp_size) for t in inst.trace]) if inst.trace else np.zeros((0, fp_size), np.float32)
    y = np.array([t.rule_id for t in inst.trace], dtype=np.int64)
    return x, y


TRAIN_SEED_OFFSET = 100_000


def training_corpus(
    rules: Sequence[Production],
    building_blocks: Sequence[LabeledGraph],
    pairs: int,
    depth: int,
    first_seed: int = TRAIN_SEED_OFFSET,
    fp_size: int = DEFAULT_FP_SIZE,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Trace pairs from targets seeded ``first_seed`` onward, kept apart from
    benchmark seeds.  Returns features, labels and the number of targets used."""
    xs, ys, seed = [], [], first_seed
    while sum(len(y) for y in ys) < pairs:
        x, y = training_pairs(generate_target(rules, building_blocks, max(depth, 1), seed), fp_size)
        xs.append(x)
        ys.append(y)
        seed += 1
    if not xs:
        return np.zeros((0, fp_size), np.float32), np.zeros(0, np.int64), 0
    return np.concatenate(xs)[:pairs], np.concatenate(ys)[:pairs], seed - first_seed


def mean_branching(inst: ProblemInstance) -> float:
    """Mean number of applicable (rule, embedding) actions over the reference route molecules."""
    if not inst.trace:
        return 0.0
    exp = Expander(inst.rules, None, len(inst.rules))
    return float(np.mean([len(exp.expansions(t.product)) for t in inst.trace]))


# ---------------------------------------------------------------------------
# Bundle files


def write_train_bin(path: Path, x: np.ndarray, y: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(y)))
        for row, label in zip(np.asarray(x, dtype="<f4"), y):
            fh.write(row.tobytes())
            fh.write(struct.pack("<I", int(label)))


class BundleFormatError(ValueError):
    pass


def read_train_bin(path: Path) -> tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise BundleFormatError(f"{path}: truncated header")
    (count,) = struct.unpack_from("<I", data)
    if count == 0:
        if len(data) != 4:
            raise BundleFormatError(f"{path}: trailing bytes after empty header")
        return np.zeros((0, 0), np.float32), np.zeros(0, np.int64)
    body = len(data) - 4
    if body % count or (body // count) % 4 or body // count < 8:
        raise BundleFormatError(f"{path}: size {len(data)} inconsistent with {count} records")
    width = body // count // 4 - 1
    rec = np.dtype([("x", "<f4", (width,)), ("y", "<u4")])
    arr = np.frombuffer(data, dtype=rec, offset=4, count=count)
    x = np.array(arr["x"], dtype=np.float32)
    if not np.isfinite(x).all() or (x < 0).any():
        raise BundleFormatError(f"{path}: fingerprints must be finite and non-negative")
    return x, arr["y"].astype(np.int64)


def write_bundle(inst: ProblemInstance, out: Path, fp_size: int = DEFAULT_FP_SIZE) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rules.txt").write_text(dump_rules(inst.rules))
    (out / "building_blocks.txt").write_text("".join(serialize_graph(b) + "\n" for b in inst.building_blocks))
    (out / "target.txt").write_text(serialize_graph(inst.target) + "\n")
    (out / "trace.txt").write_text("".join(t.to_line() + "\n" for t in inst.trace))
    x, y = training_pairs(inst, fp_size)
    write_train_bin(out / "train.bin", x, y)


def load_bundle(path: Path) -> ProblemInstance:
    path = Path(path)
    rules = load_rules((path / "rules.txt").read_text())
    bbs = [parse_graph(line, n) for n, line in enumerate((path / "building_blocks.txt").read_text().splitlines(), 1) if line.strip()]
    target = parse_graph((path / "target.txt").read_text())
    trace_file = path / "trace.txt"
    trace = []
    if trace_file.exists():
        trace = [TraceStep.parse(line) for line in trace_file.read_text().splitlines() if line.strip()]
    return ProblemInstance(rules, bbs, target, trace, seed=-1, name=path.name)


def find_bundles(root: Path) -> list[Path]:
    root = Path(root)
    return sorted({p.parent for p in root.rglob("target.txt")})


# ---------------------------------------------------------------------------
# Benchmark


@dataclass
class BenchConfig:
    budget: int = 2000
    walltime: float = 60.0
    c: float = 3.0
    top_k: int = 50
    rollout_depth: int = 20
    seed: int = 0
    workers: int = 1
    total_walltime: float = math.inf


@dataclass
class MethodRow:
    method: str
    instances: int
    solved: int
    timed_out: int
    total_time: float
    iterations: int
    valid_routes: int

    @property
    def unsolved(self) -> int:
        return self.instances - self.solved - self.timed_out

    def pct(self, k: int) -> Fraction:
        return Fraction(100 * k, self.instances) if self.instances else Fraction(0)

    @property
    def mean_time(self) -> float:
        return self.total_time / self.instances if self.instances else 0.0


@dataclass
class BenchReport:
    rows: list[MethodRow]
    results: dict[str, list[SearchResult]] = field(default_factory=dict, repr=False)
    mean_branching: float | None = None

    HEADER = ("method", "instances", "solved_pct", "timed_out_pct", "unsolved_pct",
              "mean_time_s", "mean_iterations", "valid_routes")

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def _cells(self, r: MethodRow) -> list[str]:
        return [
            r.method,
            str(r.instances),
            f"{float(r.pct(r.solved)):.1f}",
            f"{float(r.pct(r.timed_out)):.1f}",
            f"{float(r.pct(r.unsolved)):.1f}",
            f"{r.mean_time:.3f}",
            f"{r.iterations / r.instances if r.instances else 0:.1f}",
            f"{r.valid_routes}/{r.solved}",
        ]

    def to_tsv(self) -> str:
        lines = ["\t".join(self.HEADER)] + ["\t".join(self._cells(r)) for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        table = [list(self.HEADER)] + [self._cells(r) for r in self.rows]
        widths = [max(len(row[k]) for row in table) for k in range(len(self.HEADER))]
        out = []
        for n, row in enumerate(table):
            out.append("  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(row, widths))))
            if n == 0:
                out.append("  ".join("-" * w for w in widths))
        if self.mean_branching is not None:
            out.append(f"mean branching (all rules, reference route): {self.mean_branching:.1f}")
        return "\n".join(out) + "\n"


def canonical_method(name: str) -> str:
    name = METHOD_ALIASES.get(name, name)
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return name


def run_method(method: str, inst: ProblemInstance, weights: PolicyWeights | None, cfg: BenchConfig) -> SearchResult:
    method = canonical_method(method)
    policy = NetworkPolicy(weights) if weights is not None else UniformPolicy(len(inst.rules))
    if method == "mcts-policy":
        scfg = SearchConfig(c=cfg.c, top_k=cfg.top_k, rollout_depth=cfg.rollout_depth,
                            budget=cfg.budget, walltime=cfg.walltime, seed=cfg.seed)
        result = search(inst.target, inst.rules, inst.bb, policy, scfg)
        result.stats.pop("root", None)
        result.stats["iterations"] = result.stats["simulations"]
        return result
    bcfg = BFSConfig(budget=cfg.budget, walltime=cfg.walltime, top_k=cfg.top_k, max_depth=cfg.rollout_depth)
    mode = HEURISTIC if method == "bfs-heuristic" else POLICY
    result = best_first_search(inst.target, inst.rules, inst.bb, mode, policy if mode == POLICY else None, bcfg)
    result.stats["iterations"] = result.stats["expansions"]
    return result


def _job(args: tuple[str, ProblemInstance, PolicyWeights | None, BenchConfig]) -> SearchResult:
    return run_method(*args)


def run_benchmark(
    instances: Sequence[ProblemInstance],
    methods: Iterable[str] = METHODS,
    cfg: BenchConfig | None = None,
    weights: PolicyWeights | None = None,
) -> BenchReport:
    """Run every method on every instance; rows follow the order of ``methods``.

    Every instance must pass its replay check first.  Without ``weights`` the
    policy methods fall back to the uniform policy.
    """
    cfg = cfg or BenchConfig()
    methods = [canonical_method(m) for m in methods]
    for inst in instances:
        if inst.trace and not replay_trace(inst):
            raise ValueError(f"instance {inst.name} fails its replay check")
    rows, results = [], {}
    for method in methods:
        jobs = [(method, inst, weights, cfg) for inst in instances]
        if cfg.workers > 1:
            with ProcessPoolExecutor(cfg.workers) as pool:
                res = list(pool.map(_job, jobs))
        else:
            res = []
            t_start = time.perf_counter()
            for job in jobs:
                if time.perf_counter() - t_start > cfg.total_walltime:
                    res.append(SearchResult(TIMED_OUT, [], 0.0, {"iterations": 0}))
                    continue
                res.append(_job(job))
        valid = sum(
            1 for inst, r in zip(instances, res)
            if r.status == SOLVED and route_is_valid(inst.target, r.route, inst.rules, inst.bb)
        )
        rows.append(MethodRow(
            method=method,
            instances=len(instances),
            solved=sum(r.status == SOLVED for r in res),
            timed_out=sum(r.status == TIMED_OUT for r in res),
            total_time=sum(r.elapsed for r in res),
            iterations=sum(r.stats.get("iterations", 0) for r in res),
            valid_routes=valid,
        ))
        results[method] = res
    return BenchReport(rows, results)
