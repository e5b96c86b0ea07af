"""Graph productions: a connected pattern rewritten into one or two products.

Context handling: host vertices outside the match keep their labels and mutual
edges.  A context edge touching a matched vertex is re-attached to that pattern
vertex's interface image, so the molecular remainder follows its fragment.
A context edge onto a deleted pattern vertex, or a context component that would
end up bridging both products, is an :class:`InvalidCut`.

Rule file, one rule per line::

    name|<pattern graph>|<product graph>{;<product graph>}|<pIdx>-><prodIdx>.<vIdx>,...
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .matcher import Embedding
from .molgraph import GraphParseError, LabeledGraph, canonical_form, canonicalize, parse_graph, serialize_graph

__all__ = [
    "DisconnectedProduct",
    "ForwardError",
    "InvalidCut",
    "Production",
    "RewriteError",
    "RuleError",
    "apply",
    "apply_forward",
    "dump_rules",
    "load_rules",
]


class RewriteError(Exception):
    pass


class InvalidCut(RewriteError):
    pass


class DisconnectedProduct(RewriteError):
    pass


class ForwardError(RewriteError):
    """The precursors cannot be combined by running the rule right-to-left."""


class RuleError(ValueError):
    def __init__(self, name: str, reason: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"rule {name!r}{where}: {reason}")
        self.name = name
        self.reason = reason


@dataclass(frozen=True)
class Production:
    id: int
    name: str
    pattern: LabeledGraph
    products: tuple[LabeledGraph, ...]
    # interface[p] = (product index, product vertex) or None if p is deleted
    interface: tuple[tuple[int, int] | None, ...]
    # preimage[i][v] = pattern vertex mapped onto product i vertex v, None if fresh
    preimage: tuple[tuple[int | None, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pre: list[list[int | None]] = [[None] * len(prod) for prod in self.products]
        for p, img in enumerate(self.interface):
            # out-of-range images are left for validate() to report
            if img is not None and 0 <= img[0] < len(pre) and 0 <= img[1] < len(pre[img[0]]):
                pre[img[0]][img[1]] = p
        object.__setattr__(self, "preimage", tuple(tuple(x) for x in pre))

    @property
    def arity(self) -> int:
        return len(self.products)

    def validate(self) -> None:
        name = self.name
        if len(self.pattern) < 1:
            raise RuleError(name, "empty pattern")
        if not self.pattern.is_connected():
            raise RuleError(name, "pattern is not connected")
        if not 1 <= len(self.products) <= 2:
            raise RuleError(name, f"{len(self.products)} products; rules must be unary or binary")
        if len(self.interface) != len(self.pattern):
            raise RuleError(name, "interface length differs from pattern size")
        seen: set[tuple[int, int]] = set()
        for p, img in enumerate(self.interface):
            if img is None:
                continue
            i, v = img
            if not (0 <= i < len(self.products)) or not (0 <= v < len(self.products[i])):
                raise RuleError(name, f"interface image {i}.{v} of pattern vertex {p} does not exist")
            if img in seen:
                raise RuleError(name, f"interface is not injective at {i}.{v}")
            seen.add(img)

    def to_line(self) -> str:
        prods = ";".join(serialize_graph(g) for g in self.products)
        iface = ",".join(
            f"{p}->{img[0]}.{img[1]}" for p, img in enumerate(self.interface) if img is not None
        )
        return f"{self.name}|{serialize_graph(self.pattern)}|{prods}|{iface}"


def _components(n: int, edges: Sequence[tuple[int, int, str]]) -> list[int]:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, _ in edges:
        a, b = find(i), find(j)
        if a != b:
            parent[max(a, b)] = min(a, b)
    return [find(v) for v in range(n)]


def _extract(labels: list[str], edges: list[tuple[int, int, str]], members: list[int]) -> LabeledGraph:
    local = {v: k for k, v in enumerate(members)}
    sub = [(local[i], local[j], lab) for i, j, lab in edges if i in local and j in local]
    return LabeledGraph.build([labels[v] for v in members], sub)


def apply(rule: Production, host: LabeledGraph, e: Embedding) -> tuple[LabeledGraph, ...]:
    """Apply ``rule`` at embedding ``e``; returns canonical product molecules sorted by key."""
    inv = {h: p for p, h in enumerate(e)}
    labels: list[str] = []
    edges: list[tuple[int, int, str]] = []
    prod_ids: list[list[int]] = []
    for prod in rule.products:
        base = len(labels)
        labels.extend(prod.labels)
        edges.extend((base + i, base + j, lab) for i, j, lab in prod.edges)
        prod_ids.append(list(range(base, base + len(prod))))

    def image(p: int) -> int | None:
        img = rule.interface[p]
        return None if img is None else prod_ids[img[0]][img[1]]

    ctx_id: dict[int, int] = {}
    for h, lab in enumerate(host.labels):
        if h not in inv:
            ctx_id[h] = len(labels)
            labels.append(lab)

    product_edges = {(min(a, b), max(a, b)) for a, b, _ in edges}
    for i, j, lab in host.edges:
        pi, pj = inv.get(i), inv.get(j)
        if pi is None and pj is None:
            edges.append((ctx_id[i], ctx_id[j], lab))
        elif pi is not None and pj is not None:
            if rule.pattern.edge_label(pi, pj) is not None:
                continue
            a, b = image(pi), image(pj)
            same = a is not None and b is not None and rule.interface[pi][0] == rule.interface[pj][0]
            if not same:
                raise InvalidCut(f"{rule.name}: unmatched host edge {i}-{j} between matched vertices")
            if (min(a, b), max(a, b)) not in product_edges:
                edges.append((a, b, lab))
        else:
            p, c = (pi, j) if pi is not None else (pj, i)
            a = image(p)
            if a is None:
                raise InvalidCut(f"{rule.name}: context attached to deleted pattern vertex {p}")
            edges.append((a, ctx_id[c], lab))

    comp = _components(len(labels), edges)
    roots = []
    for ids in prod_ids:
        rs = {comp[v] for v in ids}
        if len(rs) != 1:
            raise DisconnectedProduct(f"{rule.name}: product is not connected")
        roots.append(rs.pop())
    if len(set(roots)) != len(roots):
        raise InvalidCut(f"{rule.name}: context component bridges both products")
    root_set = set(roots)
    if any(comp[v] not in root_set for v in ctx_id.values()):
        raise DisconnectedProduct(f"{rule.name}: context fragment detached from every product")

    out = []
    for r in roots:
        members = [v for v in range(len(labels)) if comp[v] == r]
        out.append(canonicalize(_extract(labels, edges, members)))
    out.sort(key=canonical_form)
    return tuple(out)


def apply_forward(
    rule: Production, precursors: Sequence[LabeledGraph], embeddings: Sequence[Embedding]
) -> LabeledGraph:
    """Run ``rule`` right-to-left: product ``i`` is matched in ``precursors[i]`` at
    ``embeddings[i]`` and the precursors are joined into one molecule.

    Fresh product vertices (leaving groups) are consumed and must carry no context.
    The pattern occupies vertices ``0..len(pattern)-1`` of the (non-canonical) result.
    """
    if len(precursors) != rule.arity or len(embeddings) != rule.arity:
        raise ForwardError(f"{rule.name}: expected {rule.arity} precursors")
    labels = list(rule.pattern.labels)
    edges = [(i, j, lab) for i, j, lab in rule.pattern.edges]
    for idx, (mol, emb) in enumerate(zip(precursors, embeddings)):
        prod = rule.products[idx]
        pre = rule.preimage[idx]
        inv = {h: v for v, h in enumerate(emb)}
        ctx: dict[int, int] = {}
        for h, lab in enumerate(mol.labels):
            if h not in inv:
                ctx[h] = len(labels)
                labels.append(lab)
        for i, j, lab in mol.edges:
            vi, vj = inv.get(i), inv.get(j)
            if vi is None and vj is None:
                edges.append((ctx[i], ctx[j], lab))
            elif vi is not None and vj is not None:
                if prod.edge_label(vi, vj) is None:
                    raise ForwardError(f"{rule.name}: extra edge inside matched product {idx}")
            else:
                v, c = (vi, j) if vi is not None else (vj, i)
                p = pre[v]
                if p is None:
                    raise ForwardError(f"{rule.name}: context attached to leaving vertex")
                edges.append((p, ctx[c], lab))
    mol = LabeledGraph.build(labels, edges)
    if not mol.is_connected():
        raise ForwardError(f"{rule.name}: forward product is disconnected")
    return mol


def _parse_interface(text: str, name: str, n: int, line: int) -> tuple[tuple[int, int] | None, ...]:
    iface: list[tuple[int, int] | None] = [None] * n
    if not text:
        return tuple(iface)
    for item in text.split(","):
        try:
            src, dst = item.split("->")
            pi, vi = dst.split(".")
            p, i, v = int(src), int(pi), int(vi)
        except ValueError:
            raise RuleError(name, f"bad interface entry {item!r}", line) from None
        if not 0 <= p < n:
            raise RuleError(name, f"interface names pattern vertex {p} >= {n}", line)
        if iface[p] is not None:
            raise RuleError(name, f"pattern vertex {p} mapped twice", line)
        iface[p] = (i, v)
    return tuple(iface)


def load_rules(text: str) -> list[Production]:
    rules: list[Production] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 4:
            raise RuleError(parts[0] if parts else "?", "expected 4 '|'-separated fields", lineno)
        name, pat_text, prod_text, iface_text = parts
        try:
            pattern = parse_graph(pat_text, lineno)
            fields = prod_text.split(";")
            if len(fields) % 3:
                raise RuleError(name, "product section is not a list of 3-field graphs", lineno)
            products = tuple(
                parse_graph(";".join(fields[k:k + 3]), lineno) for k in range(0, len(fields), 3)
            )
        except GraphParseError as exc:
            raise RuleError(name, str(exc), lineno) from None
        if not 1 <= len(products) <= 2:
            raise RuleError(name, f"{len(products)} products; rules must be unary or binary", lineno)
        iface = _parse_interface(iface_text, name, len(pattern), lineno)
        rule = Production(len(rules), name, pattern, products, iface)
        try:
            rule.validate()
        except RuleError as exc:
            raise RuleError(name, exc.reason, lineno) from None
        rules.append(rule)
    return rules


def dump_rules(rules: Sequence[Production]) -> str:
    return "".join(r.to_line() + "\n" for r in rules)
