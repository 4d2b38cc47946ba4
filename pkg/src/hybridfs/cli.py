"""Command line entry point.

Every subcommand reads a JSON run configuration; flags override its keys.
Exit status: 0 ok, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .classifiers import train
from .dataset import DataError, load_csv, project, write_csv
from .evaluation import MaskSelection, evaluate_selection
from .pipeline import (ConfigError, Prepared, RunConfig, StageError, _atomic_write, _dumps, compare,
                       prepare, run_pipeline, select_features, selection_dict, sweep, trajectory_csv)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--omega", type=float, help="feature-count penalty weight")
    common.add_argument("--pop", type=int, help="GA population size")
    common.add_argument("--iters", type=int, help="GA iterations")
    common.add_argument("--workers", type=int, help="parallel workers")

    p = argparse.ArgumentParser(prog="hybridfs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="impute, scale, drop outliers, split, oversample")
    s = sub.add_parser("select", parents=[common], help="run the GA on the training partition")
    s.add_argument("--data", help="directory written by `preprocess`")
    e = sub.add_parser("evaluate", parents=[common], help="train the classifier on a saved selection")
    e.add_argument("--data", help="directory written by `preprocess`")
    e.add_argument("--selection", required=True, help="selected_features.json")
    c = sub.add_parser("compare", parents=[common], help="compare baselines (and a saved selection)")
    c.add_argument("--data", help="directory written by `preprocess`")
    c.add_argument("--selection", help="selected_features.json of the proposed method")
    sub.add_parser("sweep", parents=[common], help="crossover/mutation/population/neuron grid")
    sub.add_parser("run", parents=[common], help="full pipeline")
    return p


def _config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    try:
        if args.omega is not None:
            cfg = replace(cfg, cost=replace(cfg.cost, omega=args.omega))
        if args.pop is not None:
            cfg = replace(cfg, ga=replace(cfg.ga, population_size=args.pop))
        if args.iters is not None:
            cfg = replace(cfg, ga=replace(cfg.ga, max_iterations=args.iters))
        if args.workers is not None and args.command != "sweep":
            cfg = replace(cfg, ga=replace(cfg.ga, workers=args.workers))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _prepared(cfg: RunConfig, data_dir) -> Prepared:
    if data_dir is None:
        return prepare(cfg)
    d = Path(data_dir)
    for name in ("train.csv", "test.csv"):
        if not (d / name).is_file():
            raise ConfigError(f"{d / name} not found; run `preprocess` first")
    info = json.loads((d / "preprocess.json").read_text()) if (d / "preprocess.json").is_file() else {}
    return Prepared(load_csv(d / "train.csv", "label"), load_csv(d / "test.csv", "label"), info)


def _read_selection(path, m: int) -> np.ndarray:
    try:
        mask = np.asarray(json.loads(Path(path).read_text())["mask"], dtype=bool)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read selection {path}: {exc}") from exc
    if mask.size != m:
        raise ConfigError(f"selection has {mask.size} genes, data has {m} features")
    return mask


def _write(out: Path, texts: dict) -> None:
    for name, text in texts.items():
        _atomic_write(out / name, text)


def _cmd_preprocess(cfg, args):
    prep = prepare(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(prep.train, out / "train.csv")
    write_csv(prep.test, out / "test.csv")
    _write(out, {"preprocess.json": _dumps(prep.info)})
    print(f"train {prep.train.n} rows, test {prep.test.n} rows, {prep.train.m} features -> {out}")


def _cmd_select(cfg, args):
    prep = _prepared(cfg, args.data)
    res = select_features(cfg, prep.train)
    _write(Path(cfg.out_dir), {
        "selected_features.json": _dumps(selection_dict(res, prep.train.feature_names)),
        "trajectory.csv": trajectory_csv(res),
    })
    print(f"selected {res.n_selected} features, best cost {res.best_cost:.6g}, nfe {res.nfe_used}")


def _cmd_evaluate(cfg, args):
    cfg = cfg.seeded()
    prep = _prepared(cfg, args.data)
    mask = _read_selection(args.selection, prep.train.m)
    row = evaluate_selection("proposed", MaskSelection(mask), prep.train, prep.test,
                             cfg.classifier, cfg.train)
    model = train(cfg.classifier, project(prep.train, mask), cfg.train)
    texts = {"metrics.json": _dumps({"rows": [row.to_dict()]}), "model.json": model.to_json() + "\n"}
    if row.roc is not None:
        texts["roc_proposed.csv"] = row.roc.to_csv()
    _write(Path(cfg.out_dir), texts)
    print(f"test accuracy {row.test_accuracy:.2f}%")


def _cmd_compare(cfg, args):
    prep = _prepared(cfg, args.data)
    mask = _read_selection(args.selection, prep.train.m) if args.selection else None
    report = compare(cfg, prep, mask)
    texts = {"metrics.json": report.to_json() + "\n"}
    for r in report.rows:
        if r.roc is not None:
            texts[f"roc_{r.method}.csv"] = r.roc.to_csv()
    _write(Path(cfg.out_dir), texts)
    for r in report.rows:
        print(f"{r.method:12s} " + (f"error: {r.error}" if r.error else
                                    f"{r.n_selected:4d} features  test {r.test_accuracy:.1f}%"))


def _cmd_sweep(cfg, args):
    rows = sweep(cfg, workers=args.workers or 1)
    failed = sum(r["error"] is not None for r in rows)
    print(f"{len(rows)} cells, {failed} failed -> {cfg.out_dir}/sweep.csv")


def _cmd_run(cfg, args):
    res = run_pipeline(cfg)
    for r in res.report.rows:
        print(f"{r.method:12s} " + (f"error: {r.error}" if r.error else
                                    f"{r.n_selected:4d} features  test {r.test_accuracy:.1f}%"))


COMMANDS = {
    "preprocess": _cmd_preprocess,
    "select": _cmd_select,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, DataError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
