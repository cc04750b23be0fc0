"""Partially directed graphs over named nodes.

:class:`Pdag` is the mutable working representation used by the search;
:class:`Cpdag` and :class:`Dag` are immutable results. Edge text format is
one edge per line, ``A -> B`` or ``A -- B``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import ParseError, UnknownNodeError, ValidationError


class Pdag:
    def __init__(self, nodes, directed=(), undirected=()):
        self.nodes = tuple(nodes)
        self._pa = {v: set() for v in self.nodes}
        self._ch = {v: set() for v in self.nodes}
        self._nb = {v: set() for v in self.nodes}
        for a, b in directed:
            self.add_directed(a, b)
        for a, b in undirected:
            self.add_undirected(a, b)

    def copy(self):
        g = Pdag(self.nodes)
        for v in self.nodes:
            g._pa[v] = set(self._pa[v])
            g._ch[v] = set(self._ch[v])
            g._nb[v] = set(self._nb[v])
        return g

    # queries
    def parents(self, v):
        return self._pa[v]

    def children(self, v):
        return self._ch[v]

    def neighbors(self, v):
        """Nodes joined to ``v`` by an undirected edge."""
        return self._nb[v]

    def adjacent(self, v):
        return self._pa[v] | self._ch[v] | self._nb[v]

    def is_adjacent(self, a, b):
        return b in self._pa[a] or b in self._ch[a] or b in self._nb[a]

    def has_directed(self, a, b):
        return b in self._ch[a]

    def has_undirected(self, a, b):
        return b in self._nb[a]

    def directed_edges(self):
        return sorted((a, b) for a in self.nodes for b in self._ch[a])

    def undirected_edges(self):
        return sorted((a, b) for a in self.nodes for b in self._nb[a] if a < b)

    # edits
    def add_directed(self, a, b):
        self.remove_edge(a, b)
        self._ch[a].add(b)
        self._pa[b].add(a)

    def add_undirected(self, a, b):
        self.remove_edge(a, b)
        self._nb[a].add(b)
        self._nb[b].add(a)

    def remove_edge(self, a, b):
        for x, y in ((a, b), (b, a)):
            self._ch[x].discard(y)
            self._pa[y].discard(x)
            self._nb[x].discard(y)

    def orient(self, a, b):
        """Turn ``a -- b`` into ``a -> b``."""
        if not self.has_undirected(a, b):
            raise ValidationError(f"{a} -- {b} is not an undirected edge")
        self.add_directed(a, b)

    def is_clique(self, vs):
        vs = list(vs)
        return all(self.is_adjacent(a, b) for a, b in itertools.combinations(vs, 2))

    def key(self):
        return (tuple(self.directed_edges()), tuple(self.undirected_edges()))


@dataclass(frozen=True)
class Dag:
    nodes: tuple
    edges: frozenset  # of (parent, child)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        known = set(self.nodes)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValidationError(f"edge {a} -> {b} uses an unknown node")
        if topological_order(self.nodes, self.edges) is None:
            raise ValidationError("graph has a directed cycle")

    def parents(self, v):
        return {a for a, b in self.edges if b == v}

    def children(self, v):
        return {b for a, b in self.edges if a == v}

    def to_text(self):
        return "".join(f"{a} -> {b}\n" for a, b in sorted(self.edges))

    def to_dict(self):
        return {"nodes": list(self.nodes), "directed": [list(e) for e in sorted(self.edges)], "undirected": []}


@dataclass(frozen=True)
class Cpdag:
    nodes: tuple
    directed: frozenset
    undirected: frozenset  # of frozenset({a, b})

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "directed", frozenset(tuple(e) for e in self.directed))
        object.__setattr__(self, "undirected", frozenset(frozenset(e) for e in self.undirected))
        for a, b in self.directed:
            if frozenset((a, b)) in self.undirected:
                raise ValidationError(f"{a} - {b} is both directed and undirected")
        if topological_order(self.nodes, self.directed) is None:
            raise ValidationError("directed part has a cycle")

    @classmethod
    def from_pdag(cls, g: Pdag):
        return cls(g.nodes, frozenset(g.directed_edges()),
                   frozenset(frozenset(e) for e in g.undirected_edges()))

    def to_pdag(self):
        return Pdag(self.nodes, sorted(self.directed), sorted(tuple(sorted(e)) for e in self.undirected))

    def adjacencies(self):
        adj = {frozenset(e) for e in self.directed} | set(self.undirected)
        return {tuple(sorted(e)) for e in adj}

    def to_text(self):
        lines = [f"{a} -> {b}" for a, b in sorted(self.directed)]
        lines += [f"{a} -- {b}" for a, b in sorted(tuple(sorted(e)) for e in self.undirected)]
        return "".join(line + "\n" for line in lines)

    def to_dict(self):
        return {
            "nodes": list(self.nodes),
            "directed": [list(e) for e in sorted(self.directed)],
            "undirected": [sorted(e) for e in sorted(tuple(sorted(e)) for e in self.undirected)],
        }


def parse_edge_text(text, nodes=None):
    """Parse the edge-list format into a :class:`Cpdag` (a :class:`Dag`
    when no undirected edge is present)."""
    directed, undirected, seen = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if "->" in line:
            a, b = (s.strip() for s in line.split("->", 1))
            directed.append((a, b))
        elif "--" in line:
            a, b = (s.strip() for s in line.split("--", 1))
            undirected.append(frozenset((a, b)))
        else:
            raise ParseError(f"expected 'A -> B' or 'A -- B', got {line!r}", line=lineno)
        if not a or not b:
            raise ParseError("empty node name", line=lineno)
        seen += [a, b]
    if nodes is None:
        nodes = sorted(set(seen))
    if undirected:
        return Cpdag(nodes, frozenset(directed), frozenset(undirected))
    return Dag(nodes, frozenset(directed))


def topological_order(nodes, edges):
    """Kahn's algorithm with lexicographic tie-breaks; None on a cycle."""
    indeg = {v: 0 for v in nodes}
    out = {v: [] for v in nodes}
    for a, b in edges:
        indeg[b] += 1
        out[a].append(b)
    ready = sorted(v for v in nodes if indeg[v] == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort()
    return order if len(order) == len(nodes) else None


# ---------------------------------------------------------------- Meek rules

def _rule1(g):
    for a in g.nodes:
        for b in sorted(g.children(a)):
            for c in sorted(g.neighbors(b)):
                if c != a and not g.is_adjacent(a, c):
                    g.orient(b, c)
                    return True
    return False


def _rule2(g):
    for a in g.nodes:
        for c in sorted(g.neighbors(a)):
            if any(c in g.children(b) for b in g.children(a)):
                g.orient(a, c)
                return True
    return False


def _rule3(g):
    for a in g.nodes:
        for b in sorted(g.neighbors(a)):
            cands = sorted(v for v in g.neighbors(a) if v != b and b in g.children(v))
            for c, d in itertools.combinations(cands, 2):
                if not g.is_adjacent(c, d):
                    g.orient(a, b)
                    return True
    return False


def _rule4(g):
    for a in g.nodes:
        for b in sorted(g.neighbors(a)):
            for d in sorted(g.parents(b)):
                if d == a or not g.is_adjacent(a, d):
                    continue
                for c in sorted(g.parents(d)):
                    if c not in (a, b) and g.is_adjacent(a, c) and not g.is_adjacent(c, b):
                        g.orient(a, b)
                        return True
    return False


def meek_closure(g: Pdag) -> Pdag:
    """Apply Meek's rules 1-4 in place until none fires."""
    while _rule1(g) or _rule2(g) or _rule3(g) or _rule4(g):
        pass
    return g


# ------------------------------------------------------------- conversions

def pdag_to_dag(g: Pdag, priority=None) -> Dag:
    """Consistent DAG extension (Dor & Tarsi).

    Sinks are peeled off in lexicographic order, or, given ``priority``
    (a node sequence, earliest = most upstream), latest-ranked first, so
    undirected edges point down the priority order wherever the
    equivalence class allows.
    """
    work = g.copy()
    result = set(tuple(e) for e in g.directed_edges())
    remaining = list(g.nodes)
    if priority is None:
        key = None
    else:
        rank = {v: i for i, v in enumerate(priority)}
        key = lambda v: (-rank.get(v, len(rank)), v)  # noqa: E731
    while remaining:
        for x in sorted(remaining, key=key):
            if work.children(x):
                continue
            nbrs = work.neighbors(x)
            others = work.adjacent(x)
            if all(others - {y} <= work.adjacent(y) for y in nbrs):
                for y in sorted(nbrs):
                    result.discard((x, y))
                    result.add((y, x))
                for y in list(work.adjacent(x)):
                    work.remove_edge(x, y)
                remaining.remove(x)
                break
        else:
            raise ValidationError("PDAG admits no consistent DAG extension")
    return Dag(g.nodes, frozenset(result))


def dag_to_cpdag(dag: Dag) -> Cpdag:
    """Keep the v-structures, undirect the rest, close under Meek's rules."""
    g = Pdag(dag.nodes)
    for a, b in dag.edges:
        g.add_undirected(a, b)
    for c in dag.nodes:
        pa = sorted(dag.parents(c))
        for a, b in itertools.combinations(pa, 2):
            if (a, b) not in dag.edges and (b, a) not in dag.edges:
                if g.has_undirected(a, c):
                    g.add_directed(a, c)
                if g.has_undirected(b, c):
                    g.add_directed(b, c)
    return Cpdag.from_pdag(meek_closure(g))


def complete(g: Pdag) -> Pdag:
    """Re-derive the CPDAG of a PDAG's equivalence class."""
    return dag_to_cpdag(pdag_to_dag(g)).to_pdag()


# ------------------------------------------------------------- enumeration

def enumerate_dags(nodes):
    """Yield every labeled DAG over ``nodes``."""
    nodes = tuple(nodes)
    pairs = list(itertools.combinations(nodes, 2))
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (a, b), s in zip(pairs, states):
            if s == 1:
                edges.append((a, b))
            elif s == 2:
                edges.append((b, a))
        if topological_order(nodes, edges) is not None:
            yield edges


# ------------------------------------------------------------ blanket

def markov_blanket(dag: Dag, node) -> set:
    if node not in dag.nodes:
        raise UnknownNodeError(f"unknown node {node!r}")
    children = dag.children(node)
    blanket = set(dag.parents(node)) | set(children)
    for c in children:
        blanket |= dag.parents(c)
    blanket.discard(node)
    return blanket


def markov_equivalent(a: Dag, b: Dag) -> bool:
    return dag_to_cpdag(a) == dag_to_cpdag(b)
