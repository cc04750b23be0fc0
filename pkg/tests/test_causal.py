import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_cg_dataset
from sleepeda import graphs
from sleepeda.causal import (
    _TIE,
    CGScore,
    ScoreConfig,
    _delete_candidates,
    _insert_candidates,
    cg_local_score,
    exhaustive_search,
    fgs_search,
)
from sleepeda.dataset import Kind, MixedDataset
from sleepeda.errors import ConfigError, DegenerateCellError, TooLargeError


def _cont(**cols):
    return MixedDataset.from_arrays(continuous=cols)


def test_linear_gaussian_hand_example():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([1.0, 3.0, 2.0, 5.0])
    n = 4
    X = np.column_stack([np.ones(n), x])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    rss = float(np.sum((y - X @ beta) ** 2))
    # slope 1.1, intercept 0: residuals (-0.1, 0.8, -1.3, 0.6), rss 2.7
    assert rss == pytest.approx(2.7, abs=1e-12)
    expected = -0.5 * n * (math.log(2 * math.pi) + math.log(rss / n) + 1) - 0.5 * 3 * math.log(n)
    assert cg_local_score(_cont(X=x, Y=y), "Y", ["X"]) == pytest.approx(expected, abs=1e-12)


def test_binary_no_parent_hand_example():
    ds = MixedDataset.from_arrays(discrete={"B": [1, 1, 1, 0]})
    expected = 3 * math.log(0.75) + math.log(0.25) - 0.5 * 1 * math.log(4)
    assert cg_local_score(ds, "B", []) == pytest.approx(expected, abs=1e-12)


def test_continuous_child_binary_parent():
    rng = np.random.default_rng(0)
    b = rng.integers(0, 2, 60)
    y = b * 1.5 + rng.standard_normal(60)
    ds = MixedDataset.from_arrays(continuous={"Y": y}, discrete={"B": b})
    # joint {B, Y}: 1 cell probability + 2 x (mean, variance) = 5; joint {B}: 1
    ll = 0.0
    for v in (0, 1):
        r = y[b == v]
        ll += -0.5 * r.size * (math.log(2 * math.pi) + math.log(r.var()) + 1)
    expected = ll - 0.5 * 4 * math.log(60)
    assert cg_local_score(ds, "Y", ["B"]) == pytest.approx(expected, abs=1e-9)


def test_degenerate_cell():
    y = np.arange(8, dtype=float) ** 1.3
    z = np.sin(np.arange(8.0))
    b = [0, 0, 0, 0, 0, 0, 0, 1]
    ds = MixedDataset.from_arrays(continuous={"Y": y, "Z": z}, discrete={"B": b})
    with pytest.raises(DegenerateCellError):
        cg_local_score(ds, "Y", ["B", "Z"])
    sc = CGScore(ds, on_degenerate="pool")
    assert math.isfinite(sc.local("Y", ["B", "Z"]))
    assert frozenset({"B", "Y", "Z"}) in sc.pooled


def test_config_validation():
    with pytest.raises(ConfigError):
        ScoreConfig(penalty_discount=0)
    with pytest.raises(ConfigError):
        CGScore(_cont(A=[1.0, 2.0]), on_degenerate="skip")


def test_independent_columns_empty():
    rng = np.random.default_rng(1)
    res = fgs_search(_cont(X=rng.standard_normal(1000), Y=rng.standard_normal(1000)))
    assert res.cpdag.adjacencies() == set()


def test_two_node_unoriented():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(1000)
    res = fgs_search(_cont(X=x, Y=x + 0.3 * rng.standard_normal(1000)))
    assert res.cpdag.directed == frozenset()
    assert res.cpdag.undirected == {frozenset({"X", "Y"})}


def test_collider_oriented():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(2000), rng.standard_normal(2000)
    z = x + y + 0.5 * rng.standard_normal(2000)
    ds = _cont(X=x, Y=y, Z=z)
    res = fgs_search(ds)
    assert res.cpdag.directed == {("X", "Z"), ("Y", "Z")}
    ex = exhaustive_search(ds)
    assert ex.n_dags == 25
    assert graphs.dag_to_cpdag(ex.dag) == res.cpdag
    assert res.score == pytest.approx(ex.score, abs=1e-9)


def test_exhaustive_limits():
    ds = _cont(A=np.arange(12.0) ** 2)
    ex = exhaustive_search(ds)
    assert ex.n_dags == 1 and ex.dag.edges == frozenset()
    assert ex.score == pytest.approx(CGScore(ds).joint({"A"}))
    rng = np.random.default_rng(0)
    big = _cont(**{c: rng.standard_normal(20) for c in "ABCDEF"})
    with pytest.raises(TooLargeError):
        exhaustive_search(big)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_score_equivalence_continuous(seed):
    rng = np.random.default_rng(seed)
    n = 150
    a = rng.standard_normal(n)
    b = 0.8 * a + rng.standard_normal(n)
    c = 0.5 * b - 0.6 * a + rng.standard_normal(n)
    d = rng.standard_normal(n) + 0.4 * c
    ds = _cont(A=a, B=b, C=c, D=d)
    res = fgs_search(ds)
    sc = CGScore(ds)
    scores = []
    for edges in graphs.enumerate_dags(res.cpdag.nodes):
        dag = graphs.Dag(res.cpdag.nodes, frozenset(edges))
        if graphs.dag_to_cpdag(dag) == res.cpdag:
            scores.append(sc.dag_score(dag.nodes, dag.edges))
    assert max(scores) - min(scores) <= 1e-9
    assert res.score == pytest.approx(scores[0], abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_search_result_is_a_dag_in_its_class(seed):
    ds = random_cg_dataset(seed, n=120)
    res = fgs_search(ds)
    assert graphs.dag_to_cpdag(res.dag) == res.cpdag
    assert graphs.topological_order(res.dag.nodes, res.dag.edges) is not None


def test_determinism_and_name_order():
    ds = random_cg_dataset(7)
    a, b = fgs_search(ds), fgs_search(ds)
    assert a.to_dict() == b.to_dict()
    reordered = ds.subset(list(reversed(ds.names)))
    assert fgs_search(reordered).cpdag == a.cpdag


@pytest.mark.parametrize("seed", range(20))
def test_dense_family_local_optimum(seed):
    # greedy search is not globally optimal on dense graphs; it must never
    # beat the exhaustive maximum and must stop at a local optimum
    ds = random_cg_dataset(1000 + seed, edge_prob=0.5)
    sc = CGScore(ds, on_degenerate="pool")
    res = fgs_search(ds, score=sc)
    ex = exhaustive_search(ds, score=sc)
    assert res.score <= ex.score + 1e-9
    g = res.cpdag.to_pdag()
    assert all(gain <= _TIE for gain, _ in _insert_candidates(g, sc))
    assert all(gain <= _TIE for gain, _ in _delete_candidates(g, sc))


def test_search_needs_two_columns():
    with pytest.raises(ConfigError):
        fgs_search(_cont(A=np.arange(20.0)))


def test_to_dict_keys():
    d = fgs_search(random_cg_dataset(0)).to_dict()
    assert set(d) == {"cpdag", "dag", "edges", "score", "steps", "pooled_covariance_sets"}
    assert all(" -> " in e or " -- " in e for e in d["edges"])
