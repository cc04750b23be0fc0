import numpy as np
import pytest

from sleepeda.dataset import Kind, MixedDataset
from sleepeda.ingest import Channel, SignalTrace

NAMES4 = ("A", "B", "C", "D")


def random_cg_dataset(seed, n=200, edge_prob=0.3, lo=0.3, hi=1.0, names=NAMES4):
    """Random conditional-Gaussian network: one binary root, the other
    columns linear-Gaussian in a random order with each earlier column a
    parent with probability ``edge_prob`` (|weight| in [lo, hi])."""
    rng = np.random.default_rng(seed)
    binary = names[rng.integers(len(names))]
    rest = [v for v in rng.permutation(names) if v != binary]
    order = [binary, *rest]
    vals = {binary: rng.integers(0, 2, n)}
    while np.unique(vals[binary]).size < 2:
        vals[binary] = rng.integers(0, 2, n)
    for i, v in enumerate(order[1:], start=1):
        x = rng.standard_normal(n)
        for u in order[:i]:
            if rng.uniform() < edge_prob:
                w = rng.choice([-1, 1]) * rng.uniform(lo, hi)
                par = vals[u] - vals[u].mean()
                x = x + w * par / par.std()
        vals[v] = x
    kinds = {k: Kind.DISCRETE if k == binary else Kind.CONTINUOUS for k in names}
    return MixedDataset({k: vals[k] for k in names}, kinds)


def eda_trace(samples, rate=4.0, start=0.0):
    return SignalTrace(Channel.EDA, start, rate, np.asarray(samples, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
