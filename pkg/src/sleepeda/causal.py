"""Score-based structure search over mixed continuous/discrete data.

The conditional-Gaussian BIC scores a variable set by splitting rows on
the joint configuration of its discrete members and fitting a Gaussian
to its continuous members within each cell. A node's local score given
its parents is ``joint(parents + child) - joint(parents)``, which makes
the total DAG score decomposable and equal across Markov-equivalent DAGs.

:func:`fgs_search` is a greedy equivalence search (forward insertion,
backward deletion, repeated until neither phase changes the graph);
:func:`exhaustive_search` enumerates every DAG and serves as its oracle
on small problems.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import graphs
from .dataset import MixedDataset
from .errors import ConfigError, DegenerateCellError, NumericalError, TooLargeError
from .graphs import Cpdag, Dag, Pdag

log = logging.getLogger(__name__)

MAX_EXHAUSTIVE = 5
_TIE = 1e-10


@dataclass(frozen=True)
class ScoreConfig:
    structure_prior: float = 1.0
    penalty_discount: float = 1.0

    def __post_init__(self):
        if not (self.structure_prior > 0 and self.penalty_discount > 0):
            raise ConfigError("structure_prior and penalty_discount must be positive")


class CGScore:
    """Memoized conditional-Gaussian BIC over one dataset.

    ``on_degenerate`` is ``"raise"`` (default) or ``"pool"``; pooling
    replaces per-cell covariances with the pooled within-cell covariance
    for any variable set that has a cell too small to estimate its own,
    and records the set in :attr:`pooled`.
    """

    def __init__(self, data: MixedDataset, config: ScoreConfig = ScoreConfig(), on_degenerate="raise"):
        if on_degenerate not in ("raise", "pool"):
            raise ConfigError("on_degenerate must be 'raise' or 'pool'")
        self.data = data
        self.config = config
        self.on_degenerate = on_degenerate
        self.n = data.n
        self.pooled = set()
        self._joint = {}
        self._cont = {c: np.asarray(data.columns[c], dtype=np.float64) for c in data.names if not data.is_discrete(c)}
        self._disc = {}
        self._levels = {}
        for c in data.names:
            if data.is_discrete(c):
                levels, codes = np.unique(data.columns[c], return_inverse=True)
                self._disc[c] = codes
                self._levels[c] = len(levels)

    def joint(self, variables) -> float:
        key = frozenset(variables)
        if key not in self._joint:
            self._joint[key] = self._compute_joint(key)
        return self._joint[key]

    def local(self, child, parents) -> float:
        parents = frozenset(parents)
        if child in parents:
            raise ConfigError(f"{child} cannot be its own parent")
        return self.joint(parents | {child}) - self.joint(parents)

    def dag_score(self, dag_nodes, edges) -> float:
        pa = {v: set() for v in dag_nodes}
        for a, b in edges:
            pa[b].add(a)
        return sum(self.local(v, pa[v]) for v in dag_nodes)

    def _compute_joint(self, key) -> float:
        if not key:
            return 0.0
        n = self.n
        disc = sorted(c for c in key if c in self._disc)
        cont = sorted(c for c in key if c in self._cont)
        d = len(cont)
        if disc:
            n_cells = math.prod(self._levels[c] for c in disc)
            codes = np.zeros(n, dtype=np.int64)
            for c in disc:
                codes = codes * self._levels[c] + self._disc[c]
            cells, cell_of = np.unique(codes, return_inverse=True)
        else:
            n_cells = 1
            cells = np.zeros(1, dtype=np.int64)
            cell_of = np.zeros(n, dtype=np.int64)
        counts = np.bincount(cell_of, minlength=cells.size)
        ll = float(np.sum(counts * np.log(counts / n)))
        n_params = n_cells - 1
        if d:
            X = np.column_stack([self._cont[c] for c in cont])
            small = [int(cells[i]) for i in range(cells.size) if counts[i] < d + 1]
            if small and self.on_degenerate == "raise":
                i = int(np.argmax(counts < d + 1))
                raise DegenerateCellError(self._cell_label(disc, int(cells[i])), int(counts[i]), d + 1)
            if small:
                self.pooled.add(key)
                resid = np.empty_like(X)
                for i in range(cells.size):
                    rows = cell_of == i
                    resid[rows] = X[rows] - X[rows].mean(axis=0)
                cov = resid.T @ resid / n
                ll += _gauss_ll(cov, n, d)
                n_params += n_cells * d + d * (d + 1) // 2
            else:
                for i in range(cells.size):
                    Xi = X[cell_of == i]
                    resid = Xi - Xi.mean(axis=0)
                    cov = resid.T @ resid / counts[i]
                    ll += _gauss_ll(cov, int(counts[i]), d)
                n_params += n_cells * (d + d * (d + 1) // 2)
        return ll - self.config.penalty_discount * 0.5 * n_params * math.log(n)

    def _cell_label(self, disc, code):
        label = {}
        for c in reversed(disc):
            label[c] = code % self._levels[c]
            code //= self._levels[c]
        return {c: label[c] for c in disc}


def _gauss_ll(cov, m, d):
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        raise NumericalError("singular within-cell covariance")
    return -0.5 * m * (d * math.log(2 * math.pi) + logdet + d)


def cg_local_score(data: MixedDataset, child, parents, config: ScoreConfig = ScoreConfig(),
                   on_degenerate="raise") -> float:
    return CGScore(data, config, on_degenerate).local(child, parents)


# ------------------------------------------------------------------ search

@dataclass
class SearchResult:
    cpdag: Cpdag
    dag: Dag
    score: float
    steps: list = field(default_factory=list)
    pooled_sets: list = field(default_factory=list)

    def to_dict(self):
        return {
            "cpdag": self.cpdag.to_dict(),
            "dag": self.dag.to_dict(),
            "edges": self.cpdag.to_text().splitlines(),
            "score": self.score,
            "steps": self.steps,
            "pooled_covariance_sets": self.pooled_sets,
        }


def _subsets(items):
    items = sorted(items)
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def _semi_directed_path_blocked(g: Pdag, start, end, blockers):
    """True if every semi-directed path start ~> end meets ``blockers``."""
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in g.children(v) | g.neighbors(v):
            if w == end:
                return False
            if w in seen or w in blockers:
                continue
            seen.add(w)
            stack.append(w)
    return True


def _insert_candidates(g: Pdag, score: CGScore):
    for x in g.nodes:
        for y in g.nodes:
            if x == y or g.is_adjacent(x, y):
                continue
            na = g.neighbors(y) & g.adjacent(x)
            t0 = g.neighbors(y) - g.adjacent(x) - {x}
            pa = g.parents(y)
            for t in _subsets(t0):
                cond = na | set(t)
                if not g.is_clique(cond):
                    continue
                if not _semi_directed_path_blocked(g, y, x, cond):
                    continue
                base = cond | pa
                gain = score.local(y, base | {x}) - score.local(y, base)
                yield gain, ("insert", x, y, tuple(t))


def _delete_candidates(g: Pdag, score: CGScore):
    for x in g.nodes:
        for y in g.nodes:
            if x == y or not (g.has_directed(x, y) or g.has_undirected(x, y)):
                continue
            na = g.neighbors(y) & g.adjacent(x)
            pa = g.parents(y)
            for h in _subsets(na):
                rest = na - set(h)
                if not g.is_clique(rest):
                    continue
                base = (rest | pa) - {x}
                gain = score.local(y, base) - score.local(y, base | {x})
                yield gain, ("delete", x, y, tuple(h))


def _apply(g: Pdag, op) -> Pdag:
    kind, x, y, s = op
    g = g.copy()
    if kind == "insert":
        g.add_directed(x, y)
        for t in s:
            g.orient(t, y)
    else:
        g.remove_edge(x, y)
        for h in s:
            if g.has_undirected(y, h):
                g.orient(y, h)
            if g.has_undirected(x, h):
                g.orient(x, h)
    return graphs.complete(g)


def _best(candidates):
    best = None
    for gain, op in candidates:
        if best is None or gain > best[0] + _TIE or (abs(gain - best[0]) <= _TIE and op < best[1]):
            best = (gain, op)
    return best


def fgs_search(data: MixedDataset, config: ScoreConfig = ScoreConfig(), on_degenerate="pool",
               score: CGScore | None = None, max_rounds=50) -> SearchResult:
    """Greedy equivalence search with the conditional-Gaussian BIC.

    Returns the CPDAG, a deterministic DAG extension of it and the DAG's
    total score. Ties between operators are broken lexicographically by
    (operation, x, y, conditioning set).
    """
    if len(data.names) < 2:
        raise ConfigError("structure search needs at least 2 variables")
    if data.n < 10:
        raise ConfigError("structure search needs at least 10 rows")
    if score is None:
        score = CGScore(data, config, on_degenerate)
    g = Pdag(sorted(data.names))
    steps = []
    for _ in range(max_rounds):
        changed = False
        for phase in (_insert_candidates, _delete_candidates):
            while True:
                best = _best(phase(g, score))
                if best is None or best[0] <= _TIE:
                    break
                g = _apply(g, best[1])
                kind, x, y, s = best[1]
                steps.append({"op": kind, "x": x, "y": y, "set": list(s), "gain": best[0]})
                log.debug("%s %s %s %s gain %.6f", kind, x, y, s, best[0])
                changed = True
        if not changed:
            break
    cpdag = Cpdag.from_pdag(g)
    dag = graphs.pdag_to_dag(g)
    total = score.dag_score(dag.nodes, dag.edges)
    return SearchResult(cpdag, dag, total, steps, sorted(sorted(s) for s in score.pooled))


@dataclass
class ExhaustiveResult:
    dag: Dag
    score: float
    n_dags: int


def exhaustive_search(data: MixedDataset, config: ScoreConfig = ScoreConfig(), on_degenerate="pool",
                      score: CGScore | None = None) -> ExhaustiveResult:
    """Score every labeled DAG (at most 5 variables) and keep the best."""
    names = sorted(data.names)
    if len(names) > MAX_EXHAUSTIVE:
        raise TooLargeError(f"exhaustive search is limited to {MAX_EXHAUSTIVE} variables, got {len(names)}")
    if score is None:
        score = CGScore(data, config, on_degenerate)
    best_edges, best_score, count = None, -math.inf, 0
    for edges in graphs.enumerate_dags(names):
        count += 1
        s = score.dag_score(names, edges)
        if s > best_score + _TIE:
            best_edges, best_score = edges, s
    return ExhaustiveResult(Dag(names, frozenset(best_edges)), best_score, count)
