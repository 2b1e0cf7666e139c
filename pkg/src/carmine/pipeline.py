"""Run configuration and the persisted pipeline stages.

Every stage reads its inputs from files and writes its outputs into the run
directory, so running the stages one by one (the CLI subcommands) produces
the same files as :func:`run_pipeline`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Any

import numpy as np

from . import discretizer, render, rules, som, stats, tabular

log = logging.getLogger(__name__)

DATA_DIR = files("carmine") / "data"
PARTIAL = ".partial"


def bundled(name: str) -> Path:
    return Path(str(DATA_DIR / name))


class ConfigError(ValueError):
    """Invalid run configuration; detected before any stage runs."""


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# -- configuration ------------------------------------------------------------

_DEFAULT_MINING = {"min_support": 0.065, "min_confidence": 0.9, "min_len": 2, "max_len": 5, "lift_floor": None}
_DEFAULT_SOM = {
    "rows": 8,
    "cols": 8,
    "epochs": 500,
    "eta0": 0.5,
    "sigma0": None,
    "workers": 1,
    "runs": {"covid": ["DpM", "CpM", "TpM"], "all": None},
}


@dataclass
class RunConfig:
    input: Path | None = None
    schema: Path | None = None
    blocklist: Path | None = None
    iqr_k: float = 1.5
    outlier_columns: list[str] = field(default_factory=lambda: ["TpM"])
    drop_row: bool = False
    normalize_columns: list[str] | None = None
    thresholds: Path | None = None
    auto_quantiles: dict | None = None
    class_attribute: str = "DpM"
    target_classes: list[str] = field(default_factory=lambda: ["high", "low", "Minor"])
    antecedent_role: str = "demographic"
    mining: dict = field(default_factory=lambda: dict(_DEFAULT_MINING))
    chi2_pairs: list[list[str]] | None = None
    yates: bool = False
    som: dict = field(default_factory=lambda: json.loads(json.dumps(_DEFAULT_SOM)))
    seed: int = 42
    run_id: str = "carmine"
    out: Path = Path("carmine-out")

    @classmethod
    def from_json(cls, obj: dict, base: Path | None = None) -> RunConfig:
        base = base or Path.cwd()
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(obj)
        for key in ("input", "schema", "blocklist", "thresholds"):
            if kw.get(key) is not None:
                p = Path(kw[key])
                kw[key] = p if p.is_absolute() else base / p
        if "mining" in kw:
            kw["mining"] = {**_DEFAULT_MINING, **kw["mining"]}
        if "som" in kw:
            kw["som"] = {**json.loads(json.dumps(_DEFAULT_SOM)), **kw["som"]}
        return cls(**kw)

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(obj, base=path.parent)

    # resolved paths
    @property
    def input_path(self) -> Path:
        return self.input or bundled("demo_snapshot.csv")

    @property
    def schema_path(self) -> Path:
        return self.schema or bundled("schema.json")

    @property
    def thresholds_path(self) -> Path:
        return self.thresholds or bundled("thresholds.json")

    @property
    def blocklist_path(self) -> Path | None:
        return self.blocklist if self.blocklist is not None else bundled("blocklist.txt")

    def mining_params(self, target: str | None = None) -> rules.MiningParams:
        m = self.mining
        return rules.MiningParams(
            min_support=m["min_support"],
            min_confidence=m["min_confidence"],
            min_len=m["min_len"],
            max_len=m["max_len"],
            consequent=self.class_attribute,
            classes=(target,) if target is not None else None,
            lift_floor=m.get("lift_floor"),
        )

    def validate(self) -> list[tabular.AttributeMeta]:
        """Check paths, attribute references and parameter ranges; return the schema."""
        for label, p in (("input", self.input_path), ("schema", self.schema_path), ("thresholds", self.thresholds_path)):
            if not Path(p).is_file():
                raise ConfigError(f"{label} file not found: {p}")
        if self.blocklist is not None and not Path(self.blocklist).is_file():
            raise ConfigError(f"blocklist file not found: {self.blocklist}")
        try:
            schema = tabular.load_schema(self.schema_path)
            thresholds = discretizer.ThresholdConfig.load(self.thresholds_path)
            self.mining_params()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        names = {a.name for a in schema if a.role != "identifier"}

        def check(where, attrs):
            bad = [a for a in attrs if a not in names]
            if bad:
                raise ConfigError(f"{where} references unknown attributes: {bad}")

        check("outlier_columns", self.outlier_columns)
        check("normalize_columns", self.normalize_columns or [])
        check("class_attribute", [self.class_attribute])
        check("thresholds", list(thresholds))
        if self.class_attribute not in thresholds:
            raise ConfigError(f"class attribute {self.class_attribute!r} has no thresholds")
        bad_classes = [c for c in self.target_classes if c not in thresholds[self.class_attribute].labels]
        if bad_classes:
            raise ConfigError(f"target_classes {bad_classes} are not labels of {self.class_attribute!r}")
        for pair in self.chi2_pairs or []:
            if len(pair) != 2:
                raise ConfigError(f"chi2 pair must have two attributes: {pair}")
            check("chi2_pairs", pair)
            bad = [a for a in pair if a not in thresholds]
            if bad:
                raise ConfigError(f"chi2_pairs use attributes without thresholds: {bad}")
        for run_name, feats in self.som.get("runs", {}).items():
            check(f"som run {run_name!r}", feats or [])
        if self.antecedent_role not in tabular.ROLES:
            raise ConfigError(f"unknown antecedent_role {self.antecedent_role!r}")
        if self.iqr_k < 0:
            raise ConfigError("iqr_k must be non-negative")
        if self.auto_quantiles is not None:
            points = self.auto_quantiles.get("points")
            labels = self.auto_quantiles.get("labels")
            if not points or not labels or len(labels) != len(points) + 1:
                raise ConfigError("auto_quantiles needs 'points' and len(points)+1 'labels'")
            check("auto_quantiles", self.auto_quantiles.get("attributes") or [])
        if int(self.som["rows"]) < 1 or int(self.som["cols"]) < 1 or int(self.som["epochs"]) < 1:
            raise ConfigError("som rows, cols and epochs must be positive")
        return schema


def check_out_dir(out) -> Path:
    """Create ``out`` if needed and make sure it is a writable directory."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory is not writable: {out}")
    return out


# -- file helpers -------------------------------------------------------------


class StageOutputs:
    """Collects a stage's files under a ``.partial`` name until the stage succeeds."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.pending: list[Path] = []

    def path(self, name: str) -> Path:
        final = self.out_dir / name
        self.pending.append(final)
        return final.with_name(final.name + PARTIAL)

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    def write_json(self, name: str, obj: Any) -> None:
        self.write_text(name, json.dumps(obj, indent=2) + "\n")

    def commit(self) -> list[str]:
        for final in self.pending:
            os.replace(final.with_name(final.name + PARTIAL), final)
        return [p.name for p in self.pending]


@contextmanager
def stage(name: str, out_dir: Path, timings: dict | None = None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = StageOutputs(out_dir)
    start = time.perf_counter()
    try:
        yield outputs
    except StageError:
        raise
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        raise StageError(name, str(exc)) from exc
    outputs.commit()
    if timings is not None:
        timings[name] = round(time.perf_counter() - start, 6)
    log.info("stage %s wrote %d files", name, len(outputs.pending))


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _numeric_columns(schema):
    return [a for a in schema if a.role != "identifier"]


def _load_numeric(path, schema) -> tabular.NumericTable:
    table, report = tabular.load_csv(path, schema)
    if report:
        raise StageError("load", f"{path}: expected a clean numeric table, found unparseable cells")
    return table


# -- stages -----------------------------------------------------------------------


def stage_ingest(input_path, schema, out_dir, timings=None) -> dict:
    with stage("ingest", out_dir, timings) as out:
        table, report = tabular.load_csv(input_path, schema)
        tabular.write_csv(table, out.path("ingested.csv"), _id_column(schema))
        out.write_json("ingest_report.json", [a.to_json() for a in report])
    return {"rows": len(table.row_ids), "unparseable_cells": len(report)}


def _finite(v):
    return v if np.isfinite(v) else None


def _id_column(schema) -> str:
    ids = [a.name for a in schema if a.role == "identifier"]
    return ids[0] if ids else "Country"


def stage_clean(
    ingested, schema, out_dir, blocklist=None, iqr_k=1.5, outlier_columns=("TpM",), drop_row=False,
    normalize_columns=None, timings=None,
) -> dict:
    with stage("clean", out_dir, timings) as out:
        table = _load_numeric(ingested, schema)
        patterns = tabular.load_blocklist(blocklist) if blocklist else []
        table, dropped = tabular.drop_invalid_rows(table, patterns)
        table, outliers = tabular.remove_outliers(table, list(outlier_columns), iqr_k, drop_row=drop_row)
        z = tabular.zscore_normalize(table, normalize_columns)
        idc = _id_column(schema)
        tabular.write_csv(table, out.path("cleaned.csv"), idc)
        tabular.write_csv(z.table, out.path("normalized.csv"), idc)
        actions = [a.to_json() for a in dropped + outliers]
        for c in z.degenerate:
            actions.append({"row_id": None, "column": c, "action": "zscore-degenerate", "reason": "constant column"})
        out.write_json("cleaning_report.json", actions)
        out.write_json(
            "zscore.json",
            {c: {"mean": _finite(m), "std": _finite(s), "degenerate": c in z.degenerate} for c, (m, s) in z.stats.items()},
        )
    return {
        "rows": len(table.row_ids),
        "dropped_rows": [a.row_id for a in dropped] + [a.row_id for a in outliers if a.action == "drop-row"],
        "outlier_cells": sum(1 for a in outliers if a.action == "set-missing"),
    }


def stage_discretize(cleaned, schema, thresholds_path, out_dir, auto_quantiles=None, timings=None) -> dict:
    with stage("discretize", out_dir, timings) as out:
        table = _load_numeric(cleaned, schema)
        config = discretizer.ThresholdConfig.load(thresholds_path)
        if auto_quantiles:
            labels = tuple(auto_quantiles["labels"])
            attrs = auto_quantiles.get("attributes") or table.column_names
            for a in attrs:
                cuts = discretizer.auto_thresholds(table.column(a), auto_quantiles["points"])
                if len(cuts) + 1 != len(labels):
                    raise StageError("discretize", f"{a}: quantile cuts collapsed to {cuts}; use fewer bins")
                config[a] = discretizer.Bins(cuts, labels)
        cat = discretizer.discretize_table(table, config)
        discretizer.write_categorical_csv(cat, out.path("categorical.csv"), _id_column(schema))
        out.write_json("thresholds_used.json", cat.config.to_json())
        hists = {a: discretizer.category_histogram(cat, a) for a in cat.attributes}
        out.write_json("histograms.json", hists)
    return {"attributes": len(cat.attributes)}


def default_chi2_pairs(schema, class_attribute, thresholds) -> list[list[str]]:
    pairs = [[a.name, class_attribute] for a in schema if a.role == "demographic" and a.name in thresholds]
    for extra in (["DpM", "CpM"], ["TpM", "CpM"]):
        if all(a in thresholds for a in extra) and extra not in pairs:
            pairs.append(extra)
    return pairs


def stage_chi2(
    categorical, thresholds_used, pairs, out_dir, yates=False, name="chi2.json", single=False, timings=None
) -> list[dict]:
    with stage("chi2", out_dir, timings) as out:
        config = discretizer.ThresholdConfig.load(thresholds_used)
        cat = discretizer.read_categorical_csv(categorical, config)
        report = []
        for x, y in pairs:
            try:
                report.append(stats.pair_report(cat, x, y, yates=yates))
            except ValueError as exc:
                report.append({"x": x, "y": y, "statistic": None, "dof": None, "p_value": None, "warning": str(exc)})
        out.write_json(name, report[0] if single else report)
    return report


def stage_som(
    normalized, schema, out_dir, name, features=None, categorical=None, thresholds_used=None,
    label_attribute="DpM", rows=8, cols=8, epochs=500, eta0=0.5, sigma0=None, seed=42, workers=1, timings=None,
) -> dict:
    with stage(f"som:{name}", out_dir, timings) as out:
        table = _load_numeric(normalized, schema)
        features = list(features) if features else table.column_names
        data, ids, excluded = som.complete_rows(table, features)
        if data.shape[0] == 0:
            raise StageError(f"som:{name}", "no complete rows over the selected features")
        grid = som.init_som(rows, cols, len(features), seed, data, features)
        schedule = som.TrainingSchedule.default(rows, cols, data.shape[0], epochs=epochs, eta0=eta0)
        if sigma0 is not None:
            schedule = som.TrainingSchedule(epochs, eta0, float(sigma0), schedule.tau_eta, schedule.tau_sigma)
        grid, qe = som.train(grid, data, schedule, workers=workers)

        labels = None
        if categorical is not None and thresholds_used is not None:
            cat = discretizer.read_categorical_csv(categorical, discretizer.ThresholdConfig.load(thresholds_used))
            if label_attribute in cat.attributes:
                by_id = dict(zip(cat.row_ids, cat.column(label_attribute)))
                labels = [by_id.get(r) for r in ids]
        overlay = som.map_samples(grid, data, ids, labels)
        umat = som.u_matrix(grid)
        grid.save(out.path(f"som_{name}_grid.json"))
        overlay.values = umat
        out.write_json(f"som_{name}_overlay.json", {"excluded": excluded, "nodes": overlay.to_json()})
        out.write_json(f"som_{name}_umatrix.json", som.node_values_json(umat))
        out.write_json(
            f"som_{name}_planes.json", {f: som.node_values_json(som.component_plane(grid, f)) for f in features}
        )
        out.write_json(f"som_{name}_qe.json", {"schedule": schedule.to_json(), "quantization_error": qe.tolist()})
    return {"rows": len(ids), "excluded": excluded, "qe_first": float(qe[0]), "qe_last": float(qe[-1])}


def _rules_stem(class_attribute, target):
    return f"rules_{class_attribute}-{target}"


def stage_mine(categorical, thresholds_used, params: rules.MiningParams, targets, out_dir, antecedents=None,
               timings=None) -> dict:
    with stage("mine", out_dir, timings) as out:
        config = discretizer.ThresholdConfig.load(thresholds_used)
        cat = discretizer.read_categorical_csv(categorical, config)
        ts, excluded = rules.encode_transactions(cat, params.consequent, antecedents)
        summary = {"transactions": ts.n, "excluded": excluded, "classes": {}}
        for target in targets:
            p = rules.MiningParams(**{**params.to_json(), "classes": (target,)})
            result = rules.mine(ts, p)
            stem = _rules_stem(params.consequent, target)
            out.write_text(f"{stem}.json", rules.rules_to_json(result.rules))
            out.write_text(f"{stem}.txt", rules.rules_to_text(result.rules))
            summary["classes"][target] = result.filter_counts
        out.write_json("mining_summary.json", {**summary, "params": params.to_json()})
    return summary


def stage_render(out_dir, run_id="carmine", timings=None) -> list[str]:
    """Draw every figure whose source file exists in ``out_dir``."""
    out_dir = Path(out_dir)
    with stage("render", out_dir, timings) as out:
        hists = out_dir / "histograms.json"
        if hists.exists():
            for attr, counts in _read_json(hists).items():
                svg = render.render_histogram(counts, title=f"{attr} categories")
                out.write_text(render.figure_name(run_id, "histogram", attr), svg)
        for grid_file in sorted(out_dir.glob("som_*_grid.json")):
            name = grid_file.name[len("som_") : -len("_grid.json")]
            grid = som.SomGrid.load(grid_file)
            overlay_raw = _read_json(out_dir / f"som_{name}_overlay.json")["nodes"]
            members = {
                int(k): [(m["row_id"], m["label"]) for m in v["members"]] for k, v in overlay_raw.items()
            }
            overlay = som.MapOverlay(members)
            label_order = _label_order(out_dir, [lb for v in members.values() for _, lb in v])
            umat = som.u_matrix(grid)
            svg = render.render_node_map(
                umat, grid.rows, grid.cols, overlay, render.GRAYS, f"SOM distance map ({name})", label_order
            )
            out.write_text(render.figure_name(run_id, "umatrix", name), svg)
            for f in grid.features:
                svg = render.render_node_map(
                    som.component_plane(grid, f), grid.rows, grid.cols, None, render.BLUE_RED, f"{f} ({name})"
                )
                out.write_text(render.figure_name(run_id, f"plane-{name}", f), svg)
        for rules_file in sorted(out_dir.glob("rules_*.json")):
            stem = rules_file.stem[len("rules_") :]
            mined = rules.rules_from_json(rules_file.read_text(encoding="utf-8"))
            svg = render.render_rule_graph(mined, title=f"Class rules for {stem}")
            out.write_text(render.figure_name(run_id, "rulegraph", stem), svg)
            hist = {it.name(): c for it, c in rules.antecedent_histogram(mined).items()}
            svg = render.render_histogram(hist, title=f"Antecedents for {stem}")
            out.write_text(render.figure_name(run_id, "antecedents", stem), svg)
    return [p.name for p in out.pending]


def _label_order(out_dir, present):
    used = out_dir / "thresholds_used.json"
    present = {p for p in present if p is not None}
    if used.exists():
        for spec in _read_json(used).values():
            if present and present <= set(spec["labels"]):
                return list(spec["labels"])
    return sorted(present)


# -- orchestration ----------------------------------------------------------------------


@dataclass
class RunReport:
    stages: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"stages": self.stages, "timings": self.timings, "manifest": self.manifest}


def antecedent_attributes(schema, role: str, class_attribute: str) -> list[str]:
    return [a.name for a in schema if a.role == role and a.name != class_attribute]


def run_pipeline(config: RunConfig, out_dir=None, seed=None) -> RunReport:
    """Validate, then run every stage in order into ``out_dir``."""
    schema = config.validate()
    out = check_out_dir(out_dir or config.out)
    seed = config.seed if seed is None else seed
    report = RunReport()
    t = report.timings
    numeric = _numeric_columns(schema)

    report.stages["ingest"] = stage_ingest(config.input_path, schema, out, t)
    report.stages["clean"] = stage_clean(
        out / "ingested.csv", schema, out, config.blocklist_path, config.iqr_k, config.outlier_columns,
        config.drop_row, config.normalize_columns, t,
    )
    report.stages["discretize"] = stage_discretize(
        out / "cleaned.csv", schema, config.thresholds_path, out, config.auto_quantiles, t
    )
    used = out / "thresholds_used.json"
    thresholds = discretizer.ThresholdConfig.load(used)
    pairs = config.chi2_pairs or default_chi2_pairs(schema, config.class_attribute, thresholds)
    report.stages["chi2"] = stage_chi2(out / "categorical.csv", used, pairs, out, config.yates, timings=t)

    s = config.som
    report.stages["som"] = {}
    for name, feats in s["runs"].items():
        report.stages["som"][name] = stage_som(
            out / "normalized.csv", schema, out, name, feats or [a.name for a in numeric],
            out / "categorical.csv", used, config.class_attribute, int(s["rows"]), int(s["cols"]),
            int(s["epochs"]), float(s["eta0"]), s.get("sigma0"), seed, int(s.get("workers", 1)), t,
        )
    report.stages["mine"] = stage_mine(
        out / "categorical.csv", used, config.mining_params(), config.target_classes, out,
        antecedent_attributes(schema, config.antecedent_role, config.class_attribute), t,
    )
    report.stages["render"] = stage_render(out, config.run_id, t)
    report.manifest = {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(out.iterdir())
        if p.is_file() and not p.name.endswith(PARTIAL) and p.name != "run_report.json"
    }
    (out / "run_report.json").write_text(json.dumps(report.to_json(), indent=2, default=_json_default) + "\n")
    return report


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(type(obj))
