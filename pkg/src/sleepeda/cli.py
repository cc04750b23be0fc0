"""Command-line pipeline: features -> EFA -> search -> SEM -> prediction.

Every subcommand runs the pipeline up to its own stage and writes that
stage's slice of the report, so ``sleepeda efa`` and the ``efa`` key of
``sleepeda pipeline`` are the same object for the same inputs and seed.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, actigraphy, causal, factors, graphs, predictors, sem, synth
from .dataset import MixedDataset
from .eda_features import FEATURE_NAMES, FeatureConfig, extract_night_features
from .errors import ConfigError, DataError, NumericalError, ParseError, SleepEdaError
from .ingest import format_channel_file, load_session_tree

log = logging.getLogger("sleepeda")

SCHEMA_VERSION = 1
BUNDLED_FIXTURE = "features_77.csv"
FACTOR_NAMES = ("Magnitude", "Storms")
SE, SQ = "SE", "SQ"

DEFAULT_CONFIG = {
    "input": {"features_csv": None, "sessions_dir": None, "report_log": None, "utc_offset_hours": 0.0},
    "features": asdict(FeatureConfig()),
    "cole": {"scale": 1e-5, "weights": list(actigraphy.ColeWeights().w), "count_gain": 100.0},
    "efa": {"promax_power": 4, "n_factors": None},
    "search": {"variables": "scores", "structure_prior": 1.0, "penalty_discount": 1.0, "on_degenerate": "pool"},
    "cv": {"k": 10, "threshold": 0.5, "ridge": 0.0},
    "seed": None,
}

STAGES = ("extract", "efa", "search", "sem", "predict")


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc
        self.exit_code = getattr(exc, "exit_code", 4 if isinstance(exc, (ArithmeticError, np.linalg.LinAlgError)) else 1)
        super().__init__(f"[{stage}] {exc}")


# ------------------------------------------------------------------ config

def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _parse_set(item):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    tree = value
    for part in reversed(key.strip().split(".")):
        tree = {part: tree}
    return tree


def build_config(config_path=None, sets=(), seed=None, input_path=None):
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cfg = _merge(cfg, json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    for item in sets:
        cfg = _merge(cfg, _parse_set(item))
    if seed is not None:
        cfg["seed"] = int(seed)
    if input_path:
        p = Path(input_path)
        key = "sessions_dir" if p.is_dir() else "features_csv"
        cfg["input"]["sessions_dir" if key == "features_csv" else "features_csv"] = None
        cfg["input"][key] = str(p)
    return cfg


@dataclass
class PipelineConfig:
    raw: dict
    features: FeatureConfig
    cole: actigraphy.ColeWeights
    score: causal.ScoreConfig
    seed: int | None

    @classmethod
    def from_dict(cls, cfg):
        try:
            feats = FeatureConfig(**cfg["features"])
        except TypeError as exc:
            raise ConfigError(f"features: {exc}") from None
        cole = actigraphy.ColeWeights(float(cfg["cole"]["scale"]), tuple(float(w) for w in cfg["cole"]["weights"]))
        s = cfg["search"]
        score = causal.ScoreConfig(float(s["structure_prior"]), float(s["penalty_discount"]))
        if s["variables"] not in ("scores", "raw"):
            raise ConfigError("search.variables must be 'scores' or 'raw'")
        if s["on_degenerate"] not in ("pool", "raise"):
            raise ConfigError("search.on_degenerate must be 'pool' or 'raise'")
        inp = cfg["input"]
        if inp["features_csv"] and inp["sessions_dir"]:
            raise ConfigError("give input.features_csv or input.sessions_dir, not both")
        for key in ("features_csv", "sessions_dir", "report_log"):
            if inp[key] and not Path(inp[key]).exists():
                raise ConfigError(f"input path not found: {inp[key]}")
        seed = cfg["seed"]
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        return cls(cfg, feats, cole, score, seed)


# ----------------------------------------------------------------- stages

@dataclass
class NightTable:
    ids: list
    features: np.ndarray  # (n, 6) in FEATURE_NAMES order
    se: np.ndarray
    sq: np.ndarray
    se_sensor: np.ndarray | None = None
    source: str = ""
    warnings: list = field(default_factory=list)

    def rows(self):
        out = []
        for i, (pid, night) in enumerate(self.ids):
            row = {"participant_id": pid, "night_date": night}
            row.update({name: float(self.features[i, j]) for j, name in enumerate(FEATURE_NAMES)})
            row["se_selfreport"] = float(self.se[i])
            if self.se_sensor is not None:
                row["se_sensor"] = float(self.se_sensor[i])
            row["sq_binary"] = int(self.sq[i])
            out.append(row)
        return out

    def to_csv(self):
        cols = ["participant_id", "night_date", *FEATURE_NAMES, "se_selfreport"]
        if self.se_sensor is not None:
            cols.append("se_sensor")
        cols.append("sq_binary")
        buf = io.StringIO()
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()


def read_feature_table(text, source=""):
    reader = csv.DictReader(io.StringIO(text))
    need = [*FEATURE_NAMES, "se_selfreport", "sq_binary"]
    header = reader.fieldnames or []
    missing = [c for c in need if c not in header]
    if missing:
        raise ParseError(f"{source}: missing columns {', '.join(missing)}", line=1)
    ids, feats, se, sq, sensor = [], [], [], [], []
    has_sensor = "se_sensor" in header
    for lineno, row in enumerate(reader, start=2):
        try:
            feats.append([float(row[c]) for c in FEATURE_NAMES])
            se.append(float(row["se_selfreport"]))
            sq.append(int(float(row["sq_binary"])))
            if has_sensor:
                sensor.append(float(row["se_sensor"]))
        except (TypeError, ValueError):
            raise ParseError(f"{source}: bad numeric value", line=lineno) from None
        ids.append((row.get("participant_id") or f"row{lineno - 1}", row.get("night_date") or ""))
    if not ids:
        raise DataError(f"{source}: no rows")
    if not set(sq) <= {0, 1}:
        raise DataError(f"{source}: sq_binary must be 0/1")
    return NightTable(ids, np.asarray(feats), np.asarray(se), np.asarray(sq, dtype=np.int64),
                      np.asarray(sensor) if has_sensor else None, source)


def bundled_fixture_text():
    return resources.files("sleepeda").joinpath("data", BUNDLED_FIXTURE).read_text()


def stage_extract(cfg: PipelineConfig):
    inp = cfg.raw["input"]
    if inp["sessions_dir"]:
        sessions, warnings = load_session_tree(inp["sessions_dir"], inp["report_log"], float(inp["utc_offset_hours"]))
        if not sessions:
            raise DataError(f"no complete nights under {inp['sessions_dir']}")
        ids, feats, se, sensor, sq = [], [], [], [], []
        for s in sessions:
            fv = extract_night_features(s, cfg.features)
            t = actigraphy.night_targets(s, cfg.features.epoch_len_s, cfg.cole, float(cfg.raw["cole"]["count_gain"]))
            ids.append((s.participant_id, s.night_date.isoformat()))
            feats.append([float(v) for v in fv.as_tuple()])
            se.append(t["se_selfreport"])
            sensor.append(t["se_sensor"])
            sq.append(t["sq_binary"])
        return NightTable(ids, np.asarray(feats), np.asarray(se), np.asarray(sq, dtype=np.int64),
                          np.asarray(sensor), f"sessions:{Path(inp['sessions_dir']).name}", warnings)
    if inp["features_csv"]:
        path = Path(inp["features_csv"])
        return read_feature_table(path.read_text(), path.name)
    return read_feature_table(bundled_fixture_text(), f"bundled:{BUNDLED_FIXTURE}")


def _standardize(x):
    x = np.asarray(x, dtype=np.float64)
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DataError("SE has zero variance")
    return (x - x.mean()) / sd


def factor_names(k):
    return tuple(FACTOR_NAMES[j] if j < len(FACTOR_NAMES) else f"Factor{j + 1}" for j in range(k))


@dataclass
class EfaStage:
    solution: factors.FactorSolution
    scores: np.ndarray
    names: tuple

    def to_dict(self):
        d = self.solution.to_dict()
        d["factor_names"] = list(self.names)
        d["assignment"] = self.assignment()
        return d

    def assignment(self):
        """Feature -> factor with the largest absolute pattern loading."""
        L = self.solution.loadings
        return {f: self.names[int(np.argmax(np.abs(L[j])))] for j, f in enumerate(FEATURE_NAMES)}


def stage_efa(cfg: PipelineConfig, table: NightTable) -> EfaStage:
    e = cfg.raw["efa"]
    data = factors.StandardizedMatrix.from_array(table.features, FEATURE_NAMES)
    sol = factors.efa_fit(data, power=int(e["promax_power"]), n_factors=e["n_factors"])
    return EfaStage(sol, factors.factor_scores(data, sol), factor_names(sol.k))


def search_dataset(cfg: PipelineConfig, table: NightTable, efa: EfaStage) -> MixedDataset:
    if cfg.raw["search"]["variables"] == "raw":
        cont = {name: table.features[:, j] for j, name in enumerate(FEATURE_NAMES)}
    else:
        cont = {name: efa.scores[:, j] for j, name in enumerate(efa.names)}
    cont[SE] = _standardize(table.se)
    return MixedDataset.from_arrays(cont, {SQ: table.sq}, order=[*cont, SQ])


def stage_search(cfg: PipelineConfig, data: MixedDataset) -> causal.SearchResult:
    return causal.fgs_search(data, cfg.score, on_degenerate=cfg.raw["search"]["on_degenerate"])


def sem_spec(cfg: PipelineConfig, efa: EfaStage, dag: graphs.Dag):
    notes = []
    if cfg.raw["search"]["variables"] == "raw":
        return sem.PathModelSpec({}, tuple(sorted(dag.edges)), tuple(dag.nodes)), notes
    groups = {name: [] for name in efa.names}
    for feature, factor in efa.assignment().items():
        groups[factor].append(feature)
    dropped = [f for f, inds in groups.items() if not inds]
    for f in dropped:
        notes.append(f"factor {f} has no indicator with its largest loading; left out of the path model")
        del groups[f]
    edges = tuple(sorted(e for e in dag.edges if not set(e) & set(dropped)))
    observed = tuple(v for v in (SE, SQ) if v in dag.nodes)
    return sem.PathModelSpec(groups, edges, observed), notes


def stage_sem(cfg: PipelineConfig, table: NightTable, efa: EfaStage, dag: graphs.Dag):
    spec, notes = sem_spec(cfg, efa, dag)
    cont = {name: table.features[:, j] for j, name in enumerate(FEATURE_NAMES)}
    cont[SE] = _standardize(table.se)
    data = MixedDataset.from_arrays(cont, {SQ: table.sq}, order=[*cont, SQ])
    fit = sem.fit_path_model(spec, data)
    return spec, fit, notes


def feature_sets(target, blanket, eda_vars, primary):
    """Named predictor sets for one target."""
    blanket = tuple(sorted(blanket))
    eda_in = tuple(v for v in blanket if v in eda_vars)
    other = tuple(v for v in blanket if v not in eda_vars)
    sets = {"blanket": blanket}
    with_eda = tuple(sorted(set(other) | set(eda_in) | ({primary} if primary else set())))
    sets["with_eda"] = with_eda
    sets["without_eda"] = other
    if target == SE:
        sets["sensor_only"] = eda_in or ((primary,) if primary else ())
    return sets


@dataclass
class PredictStage:
    blankets: dict
    evals: dict  # target -> model -> set -> EvalReport
    fits: dict
    partial: dict
    skipped: list

    def eval_dict(self):
        return {t: {m: {s: r.to_dict() for s, r in sets.items()} for m, sets in models.items()}
                for t, models in self.evals.items()}


def stage_predict(cfg: PipelineConfig, data: MixedDataset, dag: graphs.Dag, eda_vars):
    if cfg.seed is None:
        raise ConfigError("cross-validation needs a seed (--seed or config 'seed')")
    cv = cfg.raw["cv"]
    k, thr, ridge = int(cv["k"]), float(cv["threshold"]), float(cv["ridge"])
    primary = FEATURE_NAMES[0] if cfg.raw["search"]["variables"] == "raw" else FACTOR_NAMES[0]
    primary = primary if primary in data.names else None
    blankets = {t: sorted(predictors.blanket_predictors(dag, t)) for t in (SE, SQ)}
    evals, fits, skipped = {}, {}, []
    models = {SE: ("ols",), SQ: ("logistic", "nb")}
    for target in (SE, SQ):
        y = np.asarray(data.columns[target], dtype=np.float64)
        evals[target], fits[target] = {}, {}
        sets = feature_sets(target, blankets[target], eda_vars, primary)
        for set_name, cols in sets.items():
            if not cols:
                skipped.append(f"{target}/{set_name}: empty predictor set")
                continue
            X = data.matrix(cols)
            if target == SE:
                fits[target][set_name] = predictors.ols_fit(y, X, cols).to_dict()
            else:
                fits[target][set_name] = predictors.logistic_fit(y, X, cols, ridge=ridge).to_dict()
            for m in models[target]:
                rep = predictors.cross_validate(m, y, X, k=k, seed=cfg.seed, names=cols, threshold=thr, ridge=ridge)
                evals[target].setdefault(m, {})[set_name] = rep
    partial = {}
    if primary:
        r, p = predictors.partial_correlation(data.columns[primary], data.columns[SE],
                                              data.matrix([SQ]))
        partial = {"x": primary, "y": SE, "controls": [SQ], "r": r, "p_value": p}
    return PredictStage(blankets, evals, fits, partial, skipped)


def cole_agreement(table: NightTable):
    if table.se_sensor is None or table.se.size < 3:
        return None
    if table.se_sensor.std() == 0 or table.se.std() == 0:
        return {"r": None, "note": "constant SE column"}
    fit = predictors.ols_fit(table.se, table.se_sensor, ["se_sensor"])
    r = float(np.corrcoef(table.se_sensor, table.se)[0, 1])
    return {"r": r, "f_statistic": fit.f_statistic, "df": list(fit.df), "p_value": fit.p_value}


# ----------------------------------------------------------------- driver

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except SleepEdaError as exc:
        raise StageError(name, exc) from exc
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        raise StageError(name, NumericalError(str(exc))) from exc
    except FileNotFoundError as exc:
        raise StageError(name, ConfigError(f"file not found: {exc.filename}")) from exc


def run_pipeline(cfg: PipelineConfig, until="predict"):
    """Run the stages in order up to ``until``; returns (report, artifacts)."""
    if until not in STAGES:
        raise ConfigError(f"unknown stage {until!r}")
    stop = STAGES.index(until)
    report = {
        "schema_version": SCHEMA_VERSION,
        "software": {"name": "sleepeda", "version": __version__},
        "config": cfg.raw,
    }
    art = {}
    table = _stage("extract", stage_extract, cfg)
    art["table"] = table
    report["input"] = {"source": table.source, "n_nights": len(table.ids), "warnings": list(table.warnings)}
    report["features"] = table.rows()
    cole = cole_agreement(table)
    if cole is not None:
        report["cole"] = cole
    if stop < 1:
        return report, art

    efa = _stage("efa", stage_efa, cfg, table)
    art["efa"] = efa
    report["efa"] = efa.to_dict()
    if stop < 2:
        return report, art

    data = _stage("search", search_dataset, cfg, table, efa)
    result = _stage("search", stage_search, cfg, data)
    art["search"], art["data"] = result, data
    report["graph"] = {"variables": list(data.names), **result.to_dict()}
    if stop < 3:
        return report, art

    # an extension oriented factors -> SE -> SQ where the class allows
    sem_dag = graphs.pdag_to_dag(result.cpdag.to_pdag(), priority=data.names)
    spec, fit, notes = _stage("sem", stage_sem, cfg, table, efa, sem_dag)
    art["sem"] = fit
    report["sem"] = {"model": spec.to_dict(), "notes": notes, **fit.to_dict()}
    if stop < 4:
        return report, art

    eda_vars = set(FEATURE_NAMES) | set(efa.names)
    pred = _stage("predict", stage_predict, cfg, data, result.dag, eda_vars)
    art["predict"] = pred
    report["markov_blankets"] = pred.blankets
    report["eval"] = pred.eval_dict()
    report["regression"] = pred.fits
    report["partial_correlation"] = pred.partial
    report["eval_skipped"] = pred.skipped
    return report, art


SLICES = {
    "extract": ("input", "features", "cole"),
    "efa": ("efa",),
    "search": ("graph",),
    "sem": ("sem",),
    "predict": ("markov_blankets", "eval", "regression", "partial_correlation", "eval_skipped"),
}


def report_slice(report, command):
    out = {k: report[k] for k in ("schema_version", "software", "config")}
    out["command"] = command
    for key in SLICES[command]:
        if key in report:
            out[key] = report[key]
    return out


# ------------------------------------------------------------- artifacts

def _csv(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    return buf.getvalue()


def loadings_csv(efa: EfaStage):
    L = efa.solution.loadings
    rows = [(f, efa.names[j], float(L[i, j]), float(efa.solution.uniquenesses[i]))
            for i, f in enumerate(FEATURE_NAMES) for j in range(L.shape[1])]
    return _csv(rows, ["feature", "factor", "loading", "uniqueness"])


def roc_csv(pred: PredictStage, data: MixedDataset):
    rows = []
    y = np.asarray(data.columns[SQ])
    for model, sets in sorted(pred.evals.get(SQ, {}).items()):
        for set_name, rep in sorted(sets.items()):
            for fpr, tpr, thr in predictors.roc_points(rep.predictions, y):
                rows.append((SQ, model, set_name, fpr, tpr, "inf" if math.isinf(thr) else thr))
    return _csv(rows, ["target", "model", "feature_set", "fpr", "tpr", "threshold"])


def folds_csv(pred: PredictStage):
    cols = ["rmse", "mae", "accuracy", "brier"]
    rows = []
    for target, models in sorted(pred.evals.items()):
        for model, sets in sorted(models.items()):
            for set_name, rep in sorted(sets.items()):
                for f in rep.folds:
                    rows.append((target, model, set_name, f["fold"], f["n_test"], *[f.get(c) for c in cols]))
    return _csv(rows, ["target", "model", "feature_set", "fold", "n_test", *cols])


def _fmt(v, spec=".3f"):
    return "n/a" if v is None or (isinstance(v, float) and not math.isfinite(v)) else format(v, spec)


def markdown_summary(report, art):
    lines = ["# Sleep EDA pipeline report", ""]
    lines.append(f"Input: {report['input']['source']}, {report['input']['n_nights']} nights. "
                 f"Seed: {report['config']['seed']}.")
    for w in report["input"]["warnings"]:
        lines.append(f"- warning: {w}")
    if "cole" in report and report["cole"].get("r") is not None:
        lines.append(f"\nSensor (Cole) SE vs self-report SE: r = {_fmt(report['cole']['r'])}.")
    if "efa" in art:
        e = art["efa"]
        sol = e.solution
        lines += ["", "## Factor analysis", "",
                  f"Retained {sol.k} factor(s); eigenvalues "
                  + ", ".join(_fmt(v, ".2f") for v in sol.eigenvalues)
                  + f"; variance explained {_fmt(100 * float(np.sum(sol.variance_explained)), '.1f')}%.", "",
                  "| feature | " + " | ".join(e.names) + " |",
                  "|---|" + "---|" * len(e.names)]
        for i, f in enumerate(FEATURE_NAMES):
            lines.append(f"| {f} | " + " | ".join(_fmt(float(v), ".2f") for v in sol.loadings[i]) + " |")
    if "graph" in report:
        lines += ["", "## Searched graph", "", "```", *report["graph"]["edges"], "```"]
    if "sem" in art:
        lines += ["", "## Path model", "", "```", art["sem"].table().rstrip(), "```"]
    if "markov_blankets" in report:
        lines += ["", "## Prediction", ""]
        for t, b in report["markov_blankets"].items():
            lines.append(f"- Markov blanket of {t}: {{{', '.join(b)}}}")
        lines += ["", "| target | model | features | AUC | F1 | precision | recall | RMSE | MAE |",
                  "|---|---|---|---|---|---|---|---|---|"]
        for t, models in report["eval"].items():
            for m, sets in models.items():
                for s, r in sets.items():
                    lines.append(f"| {t} | {m} | {s}: {', '.join(r['predictors'])} | {_fmt(r['auc'])} | "
                                 f"{_fmt(r['f1'])} | {_fmt(r['precision'])} | {_fmt(r['recall'])} | "
                                 f"{_fmt(r['rmse'])} | {_fmt(r['mae'])} |")
        pc = report.get("partial_correlation")
        if pc:
            lines.append(f"\nPartial correlation {pc['x']}-{pc['y']} given {', '.join(pc['controls'])}: "
                         f"r = {_fmt(pc['r'])}, p = {_fmt(pc['p_value'])}.")
    return "\n".join(lines) + "\n"


def write_outputs(command, report, art, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    if command == "pipeline":
        (out / "report.json").write_text(dumps(report))
        (out / "summary.md").write_text(markdown_summary(report, art))
    else:
        (out / f"{command}.json").write_text(dumps(report_slice(report, command)))
    if command in ("pipeline", "extract"):
        (out / "features.csv").write_text(art["table"].to_csv())
    if command in ("pipeline", "efa"):
        (out / "loadings.csv").write_text(loadings_csv(art["efa"]))
    if command in ("pipeline", "search"):
        (out / "graph.txt").write_text(art["search"].cpdag.to_text())
    if command in ("pipeline", "sem"):
        (out / "sem_table.txt").write_text(art["sem"].table())
    if command in ("pipeline", "predict"):
        (out / "roc.csv").write_text(roc_csv(art["predict"], art["data"]))
        (out / "eval_folds.csv").write_text(folds_csv(art["predict"]))


# ------------------------------------------------------------------ synth

def run_synth(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]
    if seed is None:
        raise ConfigError("synth needs a seed (--seed)")
    if args.kind == "tabular":
        overrides = {}
        for item in args.model or ():
            key, _, raw = item.partition("=")
            try:
                overrides[key] = json.loads(raw)
            except json.JSONDecodeError:
                overrides[key] = raw
        try:
            model = synth.GroundTruthModel(**{k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()})
        except TypeError as exc:
            raise ConfigError(f"model: {exc}") from None
        data, truth = synth.generate_tabular(model, args.n, seed)
        table = NightTable(
            [(f"P{i % 6 + 1:02d}", f"n{i:04d}") for i in range(data.n)],
            data.matrix(FEATURE_NAMES), np.asarray(data.columns[synth.SE]),
            np.asarray(data.columns[synth.SQ]), None, "synth",
        )
        (out / "features.csv").write_text(table.to_csv())
        m = asdict(model)
        m["sq_link"] = synth.Link(model.sq_link).value
        sidecar = {"model": m, "n": args.n, "seed": seed, "truth": truth.to_dict(),
                   "implied_correlation": model.implied_correlation()}
        (out / "truth.json").write_text(dumps(sidecar))
        return [out / "features.csv", out / "truth.json"]
    if args.kind == "trace":
        if not args.script:
            raise ConfigError("--kind trace needs --script FILE")
        path = Path(args.script)
        if not path.is_file():
            raise ConfigError(f"script not found: {path}")
        script = synth.parse_trace_script(path.read_text())
        trace, truth = synth.generate_eda_trace(script, seed)
        (out / "EDA.csv").write_bytes(format_channel_file([trace]))
        (out / "truth.json").write_text(dumps({
            "onsets_s": truth.onsets_s, "peak_times_s": truth.peak_times_s,
            "amplitudes_us": truth.amplitudes_us, "count": truth.count, "seed": seed,
        }))
        return [out / "EDA.csv", out / "truth.json"]
    synth.generate_session_tree(out, args.participants, args.nights, seed, args.duration)
    return [out]


# ------------------------------------------------------------------- main

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="seed for every stochastic step")
    common.add_argument("--out", default="sleepeda-out", help="output directory")
    common.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted key, JSON value); repeatable")
    common.add_argument("--input", help="features CSV or session directory (overrides config input)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="sleepeda", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sleepeda {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("pipeline", "run every stage and write the full report"),
        ("extract", "per-night EDA features and sleep targets"),
        ("efa", "factor analysis of the six features"),
        ("search", "causal structure search"),
        ("sem", "fit the searched graph as a path model"),
        ("predict", "Markov-blanket predictors, cross-validated models"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    s = sub.add_parser("synth", parents=[common], help="generate synthetic data with ground truth")
    s.add_argument("--kind", choices=("tabular", "trace", "sessions"), default="tabular")
    s.add_argument("--n", type=int, default=77, help="rows for --kind tabular")
    s.add_argument("--model", action="append", metavar="FIELD=VALUE", help="GroundTruthModel override")
    s.add_argument("--script", help="trace script (key = value lines) for --kind trace")
    s.add_argument("--participants", type=int, default=2)
    s.add_argument("--nights", type=int, default=2)
    s.add_argument("--duration", type=float, default=3600.0, help="seconds per night for --kind sessions")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = build_config(args.config, args.sets, args.seed, args.input)
        if args.command == "synth":
            for path in run_synth(args, raw):
                print(path)
            return 0
        cfg = PipelineConfig.from_dict(raw)
        until = "predict" if args.command == "pipeline" else args.command
        report, art = run_pipeline(cfg, until)
        write_outputs(args.command, report, art, Path(args.out))
        print(Path(args.out) / ("report.json" if args.command == "pipeline" else f"{args.command}.json"))
        return 0
    except StageError as exc:
        print(f"sleepeda: error in stage {exc.stage}: {exc.exc}", file=sys.stderr)
        return exc.exit_code
    except SleepEdaError as exc:
        print(f"sleepeda: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
