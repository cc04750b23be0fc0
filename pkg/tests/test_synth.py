import numpy as np
import pytest
from scipy import stats

from sleepeda.eda_features import FEATURE_NAMES, trace_features
from sleepeda.errors import ConfigError, ScriptError
from sleepeda.factors import StandardizedMatrix, efa_fit, ml_extract, promax_rotate
from sleepeda.synth import (
    MAX_BINARY_CORRELATION,
    GroundTruthModel,
    Link,
    TraceScript,
    generate_eda_trace,
    generate_tabular,
    link_slope,
    parse_trace_script,
    replicate_seed,
    scr_shape,
    with_overrides,
)


def test_population_eigenvalues_4_5_and_1_2():
    m = GroundTruthModel()
    R = m.implied_correlation()[:6, :6]
    eig = np.sort(np.linalg.eigvalsh(R))[::-1]
    assert eig[0] == pytest.approx(4.5, abs=0.1) and eig[1] == pytest.approx(1.2, abs=0.1)
    assert eig[2] < 1
    assert 0.90 <= eig[:2].sum() / 6 <= 0.99


def test_population_promax_returns_the_pattern():
    m = GroundTruthModel()
    R = m.implied_correlation()[:6, :6]
    L, psi, _ = ml_extract(R, 2)
    P, phi = promax_rotate(L)
    np.testing.assert_allclose(P, m.pattern(), atol=2e-3)
    assert phi[0, 1] == pytest.approx(m.factor_correlation, abs=2e-3)


def test_determinism_and_replicate_seed():
    a, _ = generate_tabular(n=50, seed=3)
    b, _ = generate_tabular(n=50, seed=3)
    assert a.to_csv() == b.to_csv()
    assert replicate_seed(10, 4) == 14


@pytest.mark.parametrize("link", [Link.PROBIT, Link.LOGIT])
def test_link_calibration(link):
    model = GroundTruthModel(sq_link=link)
    ds, truth = generate_tabular(model, n=200000, seed=1)
    r = np.corrcoef(ds.columns["SE"], ds.columns["SQ"])[0, 1]
    assert r == pytest.approx(0.61, abs=0.01)
    assert np.corrcoef(truth.magnitude, ds.columns["SE"])[0, 1] == pytest.approx(0.31, abs=0.01)


def test_link_slope_closed_form():
    g = 0.61 * 0.5 / stats.norm.pdf(0)
    assert link_slope(0.61) == pytest.approx(g / np.sqrt(1 - g * g), abs=1e-12)
    assert link_slope(0.0) == 0.0
    assert link_slope(-0.3, Link.LOGIT) == pytest.approx(-link_slope(0.3, Link.LOGIT))


def test_model_validation():
    with pytest.raises(ConfigError):
        GroundTruthModel(path_se_sq=MAX_BINARY_CORRELATION)
    with pytest.raises(ConfigError):
        GroundTruthModel(magnitude_loadings=(1.2, 1, 1, 1, 1))
    with pytest.raises(ConfigError):
        generate_tabular(n=5)
    assert with_overrides(GroundTruthModel(), path_mag_se=0.2).path_mag_se == 0.2


def test_scr_shape():
    assert scr_shape(np.array([-1.0, 0.0]), 1.0).tolist() == [0.0, 0.0]
    assert scr_shape(np.array([2.0]), 0.3)[0] == pytest.approx(0.3)


def test_trace_script_parse():
    script = parse_trace_script(
        "# night\nduration_s = 3600\nrate_hz = 4\nevents = 100:0.2, 500:0.3\nstorms = 1000-1300@10:0.2\n"
    )
    assert script.duration_s == 3600 and len(script.events) == 2
    assert len(script.all_events()) == 32
    trace, truth = generate_eda_trace(script)
    assert truth.count == 32
    assert trace_features(trace).peak_count == 32


@pytest.mark.parametrize("text", ["bogus = 1", "events = 1:2:3", "duration_s", "storms = 1-2"])
def test_trace_script_errors(text):
    with pytest.raises(ScriptError):
        parse_trace_script(text)


def test_trace_generator_errors():
    with pytest.raises(ScriptError):
        generate_eda_trace(TraceScript(duration_s=100, events=((10, 0.2), (10.5, 0.2))))
    with pytest.raises(ScriptError):
        generate_eda_trace(TraceScript(duration_s=100, events=((99.5, 0.2),)))


@pytest.mark.parametrize("seed", range(2017, 2025))
def test_fixture_seeds_give_two_factors(seed):
    ds, _ = generate_tabular(n=77, seed=seed)
    assert efa_fit(StandardizedMatrix.from_array(ds.matrix(FEATURE_NAMES))).k == 2
