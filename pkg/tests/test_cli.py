import json
from pathlib import Path

import pytest

from sleepeda import cli
from sleepeda.errors import ConfigError


def _run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


@pytest.fixture(scope="module")
def pipeline_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    assert cli.main(["pipeline", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_pipeline_outputs(pipeline_out):
    names = {p.name for p in pipeline_out.iterdir()}
    assert {"report.json", "summary.md", "features.csv", "loadings.csv", "graph.txt",
            "sem_table.txt", "roc.csv", "eval_folds.csv"} <= names
    rep = json.loads((pipeline_out / "report.json").read_text())
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert rep["efa"]["k"] == 2
    assert rep["markov_blankets"]["SQ"] == ["SE"]
    assert set(rep["markov_blankets"]["SE"]) == {"Magnitude", "SQ"}
    assert "->" in (pipeline_out / "graph.txt").read_text() or "--" in (pipeline_out / "graph.txt").read_text()


@pytest.mark.parametrize("command", ["extract", "efa", "search", "sem", "predict"])
def test_slices_equal_pipeline_keys(tmp_path, pipeline_out, command):
    assert _run(tmp_path, command, "--seed", "7") == 0
    sl = json.loads((tmp_path / f"{command}.json").read_text())
    full = json.loads((pipeline_out / "report.json").read_text())
    assert sl["command"] == command
    for key in cli.SLICES[command]:
        if key in full:
            assert sl[key] == full[key]


def test_pipeline_byte_identical(tmp_path, pipeline_out):
    assert _run(tmp_path, "pipeline", "--seed", "7") == 0
    for name in ("report.json", "summary.md", "roc.csv", "eval_folds.csv"):
        assert (tmp_path / name).read_bytes() == (pipeline_out / name).read_bytes()


def test_predict_needs_seed(tmp_path, capsys):
    assert _run(tmp_path, "predict") == 2
    assert "predict" in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    code = _run(tmp_path, "extract", "--input", str(tmp_path / "nope.csv"))
    assert code == 2
    assert "nope.csv" in capsys.readouterr().err


def test_malformed_features_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("participant_id,night_date,peak_count\nP1,n1,3\n")
    code = _run(tmp_path, "efa", "--input", str(bad))
    assert code == 3
    assert "extract" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    assert _run(tmp_path, "efa", "--set", "efa.nope=1") == 2
    with pytest.raises(ConfigError):
        cli.build_config(sets=["search.variables"])


def test_set_overrides_reach_report(tmp_path):
    assert _run(tmp_path, "search", "--set", "search.variables=\"raw\"") == 0
    sl = json.loads((tmp_path / "search.json").read_text())
    assert "peak_count" in sl["graph"]["variables"]


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"efa": {"n_factors": 1}}))
    assert _run(tmp_path, "efa", "--config", str(cfg)) == 0
    assert json.loads((tmp_path / "efa.json").read_text())["efa"]["k"] == 1


def test_synth_tabular_roundtrip(tmp_path):
    assert _run(tmp_path, "synth", "--seed", "3", "--n", "120", "--model", "path_mag_se=0.2") == 0
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["model"]["path_mag_se"] == 0.2 and truth["n"] == 120
    out2 = tmp_path / "run"
    assert cli.main(["efa", "--input", str(tmp_path / "features.csv"), "--out", str(out2)]) == 0


def test_synth_needs_seed(tmp_path):
    assert _run(tmp_path, "synth") == 2


def test_synth_trace(tmp_path):
    script = tmp_path / "s.txt"
    script.write_text("duration_s = 600\nevents = 30:0.2, 90:0.2, 200:0.3\n")
    assert _run(tmp_path, "synth", "--seed", "1", "--kind", "trace", "--script", str(script)) == 0
    assert json.loads((tmp_path / "truth.json").read_text())["count"] == 3
    assert (tmp_path / "EDA.csv").read_bytes().startswith(b"0")


def test_sessions_end_to_end(tmp_path):
    tree = tmp_path / "tree"
    assert cli.main(["synth", "--seed", "5", "--kind", "sessions", "--participants", "2", "--nights", "3",
                     "--duration", "600", "--out", str(tree)]) == 0
    out = tmp_path / "x"
    assert cli.main(["extract", "--input", str(tree), "--out", str(out)]) == 0
    sl = json.loads((out / "extract.json").read_text())
    assert sl["input"]["n_nights"] == 6
    assert "cole" in sl
    header = (out / "features.csv").read_text().splitlines()[0].split(",")
    assert {"peak_count", "se_selfreport", "se_sensor", "sq_binary"} <= set(header)


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "sleepeda" in capsys.readouterr().out
