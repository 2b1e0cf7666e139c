"""``carmine`` command-line front end.

``carmine run`` executes every stage; the subcommands run one stage each and
read the previous stage's files from ``--out``. Settings come from an
optional ``--config`` JSON file, and explicit flags override it.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, discretizer, pipeline, rules, tabular
from .pipeline import ConfigError, RunConfig, StageError

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in _csv_list(text)]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carmine", description="Demographic association pipeline: chi-square, SOM, class rules.")
    ap.add_argument("--version", action="version", version=f"carmine {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run config JSON; flags override its values")
    common.add_argument("--out", type=Path, help="run directory (stage inputs and outputs)")

    p = sub.add_parser("run", parents=[common], help="run every stage")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("ingest", parents=[common], help="parse the raw CSV against the schema")
    p.add_argument("input", nargs="?", type=Path, help="raw CSV (default: config input or bundled demo)")
    p.add_argument("--schema", type=Path)

    p = sub.add_parser("clean", parents=[common], help="blocklist, IQR outliers and z-scores")
    p.add_argument("--input", type=Path, help="default: OUT/ingested.csv")
    p.add_argument("--schema", type=Path)
    p.add_argument("--blocklist", type=Path)
    p.add_argument("--iqr-k", type=float)
    p.add_argument("--outlier-columns", type=_csv_list)
    p.add_argument("--drop-row", action="store_true", default=None)
    p.add_argument("--normalize-columns", type=_csv_list)

    p = sub.add_parser("discretize", parents=[common], help="bin the cleaned table into categories")
    p.add_argument("--input", type=Path, help="default: OUT/cleaned.csv")
    p.add_argument("--schema", type=Path)
    p.add_argument("--thresholds", type=Path)
    p.add_argument("--auto-quantiles", type=_float_list, help="quantile cut points, e.g. 0.33,0.67")
    p.add_argument("--labels", type=_csv_list, help="labels for --auto-quantiles bins")

    p = sub.add_parser("chi2", parents=[common], help="chi-square tests of independence")
    p.add_argument("--input", type=Path, help="default: OUT/categorical.csv")
    p.add_argument("--thresholds", type=Path, help="default: OUT/thresholds_used.json")
    p.add_argument("--schema", type=Path)
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--yates", action="store_true", default=None)

    p = sub.add_parser("som", parents=[common], help="train self-organizing maps on normalized data")
    p.add_argument("--input", type=Path, help="default: OUT/normalized.csv")
    p.add_argument("--schema", type=Path)
    p.add_argument("--name", help="train only this configured run, or name a --features run")
    p.add_argument("--features", type=_csv_list)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--eta0", type=float)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("mine", parents=[common], help="class association rules")
    p.add_argument("--input", type=Path, help="default: OUT/categorical.csv")
    p.add_argument("--thresholds", type=Path, help="default: OUT/thresholds_used.json")
    p.add_argument("--schema", type=Path)
    p.add_argument("--consequent", action="append", help="ATTR=CLASS; repeatable")
    p.add_argument("--params", type=Path, help="mining params JSON")
    p.add_argument("--min-support", type=float)
    p.add_argument("--min-conf", type=float)
    p.add_argument("--min-len", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--lift-floor", type=float)
    p.add_argument("--antecedents", type=_csv_list, help="antecedent attributes (default: schema role)")

    p = sub.add_parser("render", parents=[common], help="draw SVG figures from the run directory")
    p.add_argument("--run-id")
    return ap


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    for attr, key in (("schema", "schema"), ("blocklist", "blocklist"), ("iqr_k", "iqr_k"),
                      ("outlier_columns", "outlier_columns"), ("drop_row", "drop_row"),
                      ("normalize_columns", "normalize_columns"), ("run_id", "run_id")):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, key, value)
    if args.command == "discretize":
        if args.thresholds is not None:
            cfg.thresholds = args.thresholds
        if args.auto_quantiles is not None:
            labels = args.labels or list(discretizer.DEMOGRAPHIC_LABELS[: len(args.auto_quantiles) + 1])
            cfg.auto_quantiles = {"points": args.auto_quantiles, "labels": labels}
    if args.command == "chi2" and args.yates is not None:
        cfg.yates = args.yates
    if args.command in ("run", "som") and args.seed is not None:
        cfg.seed = args.seed
    if args.command == "som":
        for key in ("rows", "cols", "epochs", "eta0", "sigma0", "workers"):
            if getattr(args, key) is not None:
                cfg.som[key] = getattr(args, key)
        if args.features is not None:
            cfg.som["runs"] = {args.name or "custom": args.features}
        elif args.name is not None:
            if args.name not in cfg.som["runs"]:
                raise ConfigError(f"no SOM run named {args.name!r}; configured: {sorted(cfg.som['runs'])}")
            cfg.som["runs"] = {args.name: cfg.som["runs"][args.name]}
    if args.command == "mine":
        if args.params is not None:
            try:
                params = rules.MiningParams.from_json(json.loads(args.params.read_text(encoding="utf-8")))
            except (OSError, ValueError, TypeError) as exc:
                raise ConfigError(f"bad params file {args.params}: {exc}") from exc
            cfg.mining.update({k: v for k, v in params.to_json().items() if k in cfg.mining})
            cfg.class_attribute = params.consequent
            if params.classes:
                cfg.target_classes = list(params.classes)
        for flag, key in (("min_support", "min_support"), ("min_conf", "min_confidence"),
                          ("min_len", "min_len"), ("max_len", "max_len"), ("lift_floor", "lift_floor")):
            if getattr(args, flag) is not None:
                cfg.mining[key] = getattr(args, flag)
        if args.consequent:
            attrs, classes = set(), []
            for spec in args.consequent:
                attr, sep, cls = spec.partition("=")
                if not sep or not attr or not cls:
                    raise ConfigError(f"--consequent expects ATTR=CLASS, got {spec!r}")
                attrs.add(attr)
                classes.append(cls)
            if len(attrs) != 1:
                raise ConfigError("all --consequent values must name the same attribute")
            cfg.class_attribute = attrs.pop()
            cfg.target_classes = classes
    if args.command == "ingest" and args.input is not None:
        cfg.input = args.input
    return cfg


def _stage_input(args, default: Path) -> Path:
    path = getattr(args, "input", None) or default
    if not Path(path).is_file():
        raise ConfigError(f"stage input not found: {path} (run the previous stage first)")
    return Path(path)


def _require_normalized(table_path, schema, features):
    """SOM training is only defined on z-scored features."""
    table = pipeline._load_numeric(table_path, schema)
    for f in features:
        col = table.column(f)
        col = col[~(col != col)]
        if col.size < 2:
            continue
        mean, std = float(col.mean()), float(col.std(ddof=1))
        if abs(mean) > 1e-6 or not (abs(std - 1.0) < 1e-6 or std < 1e-12):
            raise ConfigError(f"{table_path}: feature {f!r} is not z-score normalized; run 'carmine clean' first")


def dispatch(args) -> int:
    cfg = _load_config(args)
    schema = cfg.validate()
    out = pipeline.check_out_dir(cfg.out)
    cmd = args.command

    if cmd == "run":
        report = pipeline.run_pipeline(cfg, out)
        counts = {k: v["redundancy"] for k, v in report.stages["mine"]["classes"].items()}
        print(f"run complete: {out} ({len(report.manifest)} files; rules per class {counts})")
        return EXIT_OK

    if cmd == "ingest":
        info = pipeline.stage_ingest(cfg.input_path, schema, out)
    elif cmd == "clean":
        info = pipeline.stage_clean(
            _stage_input(args, out / "ingested.csv"), schema, out, cfg.blocklist_path, cfg.iqr_k,
            cfg.outlier_columns, cfg.drop_row, cfg.normalize_columns,
        )
    elif cmd == "discretize":
        info = pipeline.stage_discretize(
            _stage_input(args, out / "cleaned.csv"), schema, cfg.thresholds_path, out, cfg.auto_quantiles
        )
    elif cmd == "chi2":
        cat_path = _stage_input(args, out / "categorical.csv")
        used = args.thresholds or out / "thresholds_used.json"
        thresholds = discretizer.ThresholdConfig.load(used)
        if (args.x is None) != (args.y is None):
            raise ConfigError("--x and --y go together")
        if args.x is not None:
            missing = [a for a in (args.x, args.y) if a not in thresholds]
            if missing:
                raise ConfigError(f"unknown attributes for chi2: {missing}")
            result = pipeline.stage_chi2(cat_path, used, [[args.x, args.y]], out, cfg.yates,
                                         name=f"chi2_{args.x}_{args.y}.json", single=True)
            print(json.dumps(result[0], indent=2))
            return EXIT_OK
        pairs = cfg.chi2_pairs or pipeline.default_chi2_pairs(schema, cfg.class_attribute, thresholds)
        info = pipeline.stage_chi2(cat_path, used, pairs, out, cfg.yates)
    elif cmd == "som":
        norm = _stage_input(args, out / "normalized.csv")
        numeric = [a.name for a in schema if a.role != "identifier"]
        s = cfg.som
        info = {}
        for name, feats in s["runs"].items():
            feats = feats or numeric
            _require_normalized(norm, schema, feats)
            info[name] = pipeline.stage_som(
                norm, schema, out, name, feats, out / "categorical.csv" if (out / "categorical.csv").exists() else None,
                out / "thresholds_used.json" if (out / "thresholds_used.json").exists() else None,
                cfg.class_attribute, int(s["rows"]), int(s["cols"]), int(s["epochs"]), float(s["eta0"]),
                s.get("sigma0"), cfg.seed, int(s.get("workers", 1)),
            )
    elif cmd == "mine":
        cat_path = _stage_input(args, out / "categorical.csv")
        used = args.thresholds or out / "thresholds_used.json"
        antecedents = args.antecedents or pipeline.antecedent_attributes(schema, cfg.antecedent_role, cfg.class_attribute)
        info = pipeline.stage_mine(cat_path, used, cfg.mining_params(), cfg.target_classes, out, antecedents)
        for target in cfg.target_classes:
            path = out / f"{pipeline._rules_stem(cfg.class_attribute, target)}.txt"
            print(f"# {cfg.class_attribute}={target}")
            print(path.read_text(encoding="utf-8"), end="")
        return EXIT_OK
    elif cmd == "render":
        info = pipeline.stage_render(out, cfg.run_id)
    else:  # pragma: no cover - argparse rejects unknown commands
        raise ConfigError(f"unknown command {cmd}")
    print(json.dumps(info, indent=2, default=str))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except ConfigError as exc:
        print(f"carmine: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except tabular.SchemaError as exc:
        print(f"carmine: [{args.command}] input schema error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except StageError as exc:
        print(f"carmine: stage failed: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
