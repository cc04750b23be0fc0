import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sleepeda.dataset import MixedDataset
from sleepeda.errors import ConfigError, ContractError, NumericalError
from sleepeda.sem import (
    PathModelSpec,
    _Ram,
    figure_model,
    fit_indices,
    fit_path_model,
    ml_discrepancy,
)
from sleepeda.synth import GroundTruthModel, generate_tabular


def _chain_data(seed=0, n=300):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = 0.5 * x + rng.standard_normal(n)
    z = -0.7 * y + rng.standard_normal(n)
    return MixedDataset.from_arrays(continuous=dict(X=x, Y=y, Z=z))


CHAIN = PathModelSpec({}, [("X", "Y"), ("Y", "Z")])


def test_fit_indices_rmsea_0_0633():
    rmsea, cfi, p = fit_indices(28.69, 22, 77, 500.0, 28)
    assert 0.062 <= rmsea <= 0.065
    assert round(rmsea, 4) == 0.0633
    assert p > 0.1


def test_fit_indices_clamps():
    rmsea, cfi, _ = fit_indices(10.0, 22, 77, 500.0, 28)
    assert rmsea == 0.0 and cfi == 1.0
    _, cfi, _ = fit_indices(22.0, 22, 77, 1e4, 28)
    assert cfi == 1.0
    _, _, p = fit_indices(22.0, 22, 77, 1e4, 28)
    assert p > 0.4


def test_fit_indices_contract():
    with pytest.raises(ContractError):
        fit_indices(1.0, 0, 77, 10.0, 3)
    with pytest.raises(ContractError):
        fit_indices(1.0, -1, 77, 10.0, 3)
    assert fit_indices(0.0, 0, 77, 10.0, 3)[0] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 500), st.integers(1, 60), st.integers(10, 5000), st.floats(0, 5000), st.integers(1, 80))
def test_fit_indices_ranges(chi, df, n, chi_b, df_b):
    rmsea, cfi, p = fit_indices(chi, df, n, chi_b, df_b)
    assert rmsea >= 0 and 0 <= cfi <= 1 and 0 <= p <= 1


def test_chain_matches_regression():
    ds = _chain_data()
    fit = fit_path_model(CHAIN, ds)
    X = ds.matrix(["X", "Y", "Z"])
    S = np.cov(X, rowvar=False)
    n = ds.n
    b_xy = S[0, 1] / S[0, 0]
    b_yz = S[1, 2] / S[1, 1]
    assert fit.path("X", "Y").estimate == pytest.approx(b_xy, abs=1e-6)
    assert fit.path("Y", "Z").estimate == pytest.approx(b_yz, abs=1e-6)
    resid = S[1, 1] - S[0, 1] ** 2 / S[0, 0]
    assert fit.path("X", "Y").std_error == pytest.approx(math.sqrt(resid / ((n - 1) * S[0, 0])), rel=1e-5)
    # the only restriction is X _||_ Z | Y: chi2 is the partial-correlation LR
    R = np.corrcoef(X, rowvar=False)
    r = (R[0, 2] - R[0, 1] * R[1, 2]) / math.sqrt((1 - R[0, 1] ** 2) * (1 - R[1, 2] ** 2))
    assert fit.df == 1
    assert fit.chi_square == pytest.approx(-(n - 1) * math.log(1 - r * r), rel=1e-6)
    assert fit.converged


def test_saturated_model():
    ds = _chain_data(1)
    spec = PathModelSpec({}, [("X", "Y"), ("Y", "Z"), ("X", "Z")])
    fit = fit_path_model(spec, ds)
    assert fit.df == 0 and fit.chi_square == 0.0
    assert fit.rmsea == 0.0 and fit.cfi == 1.0


def test_one_factor_three_indicators_closed_form():
    rng = np.random.default_rng(4)
    f = rng.standard_normal(500)
    X = np.column_stack([l * f + rng.standard_normal(500) * s for l, s in [(1, 0.5), (0.8, 0.6), (0.6, 0.7)]])
    ds = MixedDataset.from_arrays(continuous=dict(a=X[:, 0], b=X[:, 1], c=X[:, 2]))
    fit = fit_path_model(PathModelSpec({"F": ("a", "b", "c")}), ds)
    S = np.cov(X, rowvar=False)
    assert fit.df == 0 and fit.chi_square == 0.0
    assert fit.parameter("loading", "F", "b").estimate == pytest.approx(S[1, 2] / S[0, 2], rel=1e-5)
    assert fit.parameter("loading", "F", "c").estimate == pytest.approx(S[1, 2] / S[0, 1], rel=1e-5)
    assert fit.parameter("variance", "F", "F").estimate == pytest.approx(S[0, 1] * S[0, 2] / S[1, 2], rel=1e-5)
    assert not fit.parameter("loading", "F", "a").free


def test_gradient_matches_finite_differences():
    ds, _ = generate_tabular(n=400, seed=5)
    ram = _Ram(figure_model())
    S = np.cov(ds.matrix(ram.observed), rowvar=False)
    rng = np.random.default_rng(0)
    theta = ram.start(S) + 0.05 * rng.standard_normal(ram.q)
    f, g = ram.objective(theta, S)
    h = 1e-6
    num = np.array([
        (ram.objective(theta + h * e, S)[0] - ram.objective(theta - h * e, S)[0]) / (2 * h)
        for e in np.eye(ram.q)
    ])
    np.testing.assert_allclose(g, num, atol=1e-5, rtol=1e-4)


def test_discrepancy_non_negative_and_zero_at_s():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert ml_discrepancy(S, S) == pytest.approx(0.0, abs=1e-12)
    assert ml_discrepancy(np.eye(2), S) > 0
    assert ml_discrepancy(-np.eye(2), S) == math.inf


def test_figure_model_recovery():
    ds, _ = generate_tabular(n=5000, seed=21)
    fit = fit_path_model(figure_model(extra_edges=[("Magnitude", "SQ")]), ds)
    assert fit.converged
    assert fit.path("Magnitude", "SE").standardized == pytest.approx(0.31, abs=0.05)
    assert fit.path("SE", "SQ").standardized == pytest.approx(0.61, abs=0.05)
    assert fit.path("Magnitude", "SQ").standardized == pytest.approx(0.0, abs=0.05)
    assert fit.discrepancy >= 0


@settings(max_examples=5, deadline=None)
@given(st.floats(0.1, 50))
def test_standardized_loading_scale_invariant(c):
    ds, _ = generate_tabular(n=400, seed=8)
    cols = dict(ds.columns)
    cols["storm_sd"] = cols["storm_sd"] * c
    scaled = MixedDataset(cols, ds.kinds)
    a = fit_path_model(figure_model(), ds).parameter("loading", "Magnitude", "storm_sd").standardized
    b = fit_path_model(figure_model(), scaled).parameter("loading", "Magnitude", "storm_sd").standardized
    assert b == pytest.approx(a, abs=1e-6)


def test_spec_validation():
    with pytest.raises(ConfigError):
        PathModelSpec({"F": ("a", "b"), "G": ("b", "c")})
    with pytest.raises(ConfigError):
        PathModelSpec({"F": ("a", "b")}, [("a", "Y")])
    with pytest.raises(ConfigError):
        PathModelSpec({}, [("X", "Y"), ("Y", "X")])
    with pytest.raises(ConfigError):
        PathModelSpec({"F": ()})


def test_missing_variable_and_singular():
    ds = _chain_data()
    with pytest.raises(ConfigError):
        fit_path_model(PathModelSpec({}, [("X", "W")]), ds)
    x = ds.columns["X"]
    bad = MixedDataset.from_arrays(continuous=dict(X=x, Y=2 * x, Z=ds.columns["Z"]))
    with pytest.raises(NumericalError):
        fit_path_model(CHAIN, bad)


def test_report_outputs():
    fit = fit_path_model(CHAIN, _chain_data())
    d = fit.to_dict()
    assert d["df"] == 1 and len(d["parameters"]) == 5
    assert "X -> Y" in fit.table() and "RMSEA" in fit.table()
