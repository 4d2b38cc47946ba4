"""End-to-end runs: configuration, preprocessing, selection, comparison,
artifacts, and the parameter sweep."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (cfs, cv_accuracy, lasso_cv, lasso_path, lasso_select, pca_fit, sbs, select_fdr,
                        select_fwe, select_percentile, sfs, univariate_scores)
from .classifiers import KINDS, PRESETS, TrainConfig
from .dataset import (Dataset, SplitSpec, impute_missing, load_csv, load_secom, standardize,
                      stratified_split)
from .evaluation import ComparisonReport, MaskSelection, MethodSpec, PcaSelection, compare_on_split
from .ga import GaConfig, GaResult, config_dict, run_ga
from .neuro import CostConfig, LmConfig
from .preprocess import SmoteConfig, dbsmote_oversample, remove_outliers

__all__ = [
    "ConfigError",
    "StageError",
    "RunConfig",
    "Prepared",
    "PipelineResult",
    "DEFAULT_SWEEP_GRID",
    "BASELINES",
    "prepare",
    "select_features",
    "compare",
    "run_pipeline",
    "sweep",
]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, (StageError, KeyboardInterrupt)):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# configuration

_BASELINE_PARAMS = {
    "alpha": 0.05,
    "percentile": None,
    "percentile_features": 71,
    "pca_components": 48,
    "lasso_lambda": None,
    "sequential_max_features": 20,
}


@dataclass(frozen=True)
class RunConfig:
    data_format: str = "secom"
    features_path: str | None = None
    labels_path: str | None = None
    csv_path: str | None = None
    label_column: str = "label"
    impute_policy: str = "drop"
    missing_threshold: float = 0.4
    outlier_quantile: float | None = 0.975
    oversample: bool = True
    smote: SmoteConfig = field(default_factory=SmoteConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    ga: GaConfig = field(default_factory=GaConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    baselines: tuple = ("fwe", "fdr", "percentile", "pca", "lasso")
    baseline_params: dict = field(default_factory=dict)
    classifier: str = "gaussian_svm"
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "run"
    seed: int = 0
    # [[crossover_rate, mutation_rate, [[population, neurons], ...]], ...]; None is the default grid
    sweep_grid: tuple | None = None

    def validate(self, check_files: bool = True) -> "RunConfig":
        if self.data_format not in ("secom", "csv"):
            raise ConfigError("data_format must be 'secom' or 'csv'")
        paths = (("features_path", "labels_path") if self.data_format == "secom" else ("csv_path",))
        for name in paths:
            p = getattr(self, name)
            if not p:
                raise ConfigError(f"{name} is required for data_format={self.data_format!r}")
            if check_files and not os.path.isfile(p):
                raise ConfigError(f"{name} does not exist: {p}")
        if self.impute_policy not in ("mean", "median", "drop"):
            raise ConfigError("impute_policy must be mean, median or drop")
        if self.outlier_quantile is not None and not 0 < self.outlier_quantile < 1:
            raise ConfigError("outlier_quantile must lie in (0, 1)")
        unknown = [b for b in self.baselines if b not in BASELINES]
        if unknown:
            raise ConfigError(f"unknown baselines: {unknown}")
        bad = set(self.baseline_params) - set(_BASELINE_PARAMS)
        if bad:
            raise ConfigError(f"unknown baseline_params: {sorted(bad)}")
        if self.classifier not in PRESETS and self.classifier not in KINDS:
            raise ConfigError(f"unknown classifier {self.classifier!r}")
        if self.sweep_grid is not None:
            try:
                grid_cells(self.sweep_grid)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"malformed sweep_grid: {exc}") from exc
        return self

    def params(self) -> dict:
        return {**_BASELINE_PARAMS, **self.baseline_params}

    def seeded(self) -> "RunConfig":
        """Push the global seed into every sub-configuration."""
        s = self.seed
        return replace(
            self,
            smote=replace(self.smote, seed=s),
            split=replace(self.split, seed=s),
            ga=replace(self.ga, seed=s),
            cost=replace(self.cost, lm=replace(self.cost.lm, seed=s)),
            train=replace(self.train, seed=s),
        )

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["smote"] = asdict(self.smote)
        d["split"] = asdict(self.split)
        d["ga"] = config_dict(self.ga)
        d["cost"] = asdict(self.cost)
        d["train"] = asdict(self.train)
        d["baselines"] = list(self.baselines)
        d["baseline_params"] = self.params()
        if self.sweep_grid is not None:
            d["sweep_grid"] = [[t, u, [list(r) for r in rows]] for t, u, rows in self.sweep_grid]
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | None = None, check_files: bool = True) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = dict(d)
        try:
            if "smote" in kw:
                kw["smote"] = SmoteConfig(**kw["smote"])
            if "split" in kw:
                kw["split"] = SplitSpec(**kw["split"])
            if "ga" in kw:
                kw["ga"] = GaConfig(**kw["ga"])
            if "cost" in kw:
                c = dict(kw["cost"])
                if "lm" in c:
                    c["lm"] = LmConfig(**c["lm"])
                kw["cost"] = CostConfig(**c)
            if "train" in kw:
                kw["train"] = TrainConfig(**kw["train"])
            if "baselines" in kw:
                kw["baselines"] = tuple(kw["baselines"])
            if kw.get("sweep_grid") is not None:
                kw["sweep_grid"] = tuple((float(t), float(u), tuple((int(p), int(h)) for p, h in rows))
                                         for t, u, rows in kw["sweep_grid"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if base_dir is not None:
            for name in ("features_path", "labels_path", "csv_path"):
                p = kw.get(name)
                if p and not os.path.isabs(p):
                    kw[name] = os.path.normpath(os.path.join(base_dir, p))
        return cls(**kw).validate(check_files)

    @classmethod
    def from_json(cls, path, check_files: bool = True) -> "RunConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d, os.path.dirname(os.path.abspath(path)), check_files)


# ---------------------------------------------------------------------------
# artifacts

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def trajectory_csv(result: GaResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "best_cost", "nfe"])
    for i, (c, n) in enumerate(zip(result.best_cost_trajectory, result.nfe_trajectory)):
        w.writerow([i, repr(float(c)), n])
    return buf.getvalue()


def selection_dict(result: GaResult, names) -> dict:
    idx = np.flatnonzero(result.best_mask)
    return {
        "n_selected": int(idx.size),
        "indices": [int(i) for i in idx],
        "names": [names[i] for i in idx],
        "mask": [int(v) for v in result.best_mask],
        "best_cost": result.best_cost,
        "nfe_used": result.nfe_used,
    }


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


# ---------------------------------------------------------------------------
# stages

@dataclass
class Prepared:
    train: Dataset
    test: Dataset
    info: dict


def load(config: RunConfig) -> Dataset:
    if config.data_format == "secom":
        return load_secom(config.features_path, config.labels_path)
    return load_csv(config.csv_path, config.label_column)


def prepare(config: RunConfig, dataset: Dataset | None = None) -> Prepared:
    """load, impute, standardize, drop outliers, split, oversample the
    training part. The test part never sees synthetic rows."""
    config = config.seeded()
    info = {}
    with _stage("load"):
        ds = dataset if dataset is not None else load(config)
        info["loaded"] = {"n": ds.n, "m": ds.m, "class_counts": {str(k): v for k, v in ds.class_counts().items()}}
    with _stage("impute"):
        m0 = ds.m
        ds = impute_missing(ds, config.impute_policy, config.missing_threshold)
        info["imputed"] = {"m": ds.m, "dropped_features": m0 - ds.m}
    with _stage("standardize"):
        ds, scaling = standardize(ds)
        info["standardized"] = {"zero_variance_features": int(np.sum(scaling.zero_variance))}
    with _stage("outliers"):
        if config.outlier_quantile is not None:
            ids = ds.row_ids
            ds, report = remove_outliers(ds, config.outlier_quantile)
            info["outliers"] = {"threshold": report.threshold, "regularization": report.regularization,
                                "removed_row_ids": [int(ids[i]) for i in report.flagged],
                                "n_after": ds.n}
    with _stage("split"):
        train, test = stratified_split(ds, config.split)
        info["split"] = {"train": train.n, "test": test.n}
    with _stage("oversample"):
        if config.oversample:
            n0 = train.n
            train = dbsmote_oversample(train, config.smote)
            info["oversample"] = {"synthetic_rows": train.n - n0, "train": train.n}
    return Prepared(train, test, info)


def select_features(config: RunConfig, train: Dataset, callback=None) -> GaResult:
    config = config.seeded()
    with _stage("select"):
        return run_ga(train, config.ga, config.cost, callback=callback)


def _percentile_for(params, m):
    if params["percentile"] is not None:
        return float(params["percentile"])
    k = min(int(params["percentile_features"]), m)
    # the half step keeps ceil(m * p / 100) == k under rounding
    return 100.0 * (k - 0.5) / m


def _fwe(train, p, seed, config):
    return select_fwe(univariate_scores(train), p["alpha"])


def _fdr(train, p, seed, config):
    return select_fdr(univariate_scores(train), p["alpha"])


def _percentile(train, p, seed, config):
    return select_percentile(univariate_scores(train), _percentile_for(p, train.m))


def _pca(train, p, seed, config):
    return PcaSelection(pca_fit(train, min(int(p["pca_components"]), train.m, train.n - 1)))


def _lasso(train, p, seed, config):
    lam = p["lasso_lambda"]
    if lam is None:
        lam = lasso_cv(train, seed=seed)
    return lasso_select(lasso_path(train, lambdas=[lam]), lam)


def _sfs(train, p, seed, config):
    return sfs(train, cv_accuracy(train, config.classifier, config.train, seed=seed),
               p["sequential_max_features"])


def _sbs(train, p, seed, config):
    return sbs(train, cv_accuracy(train, config.classifier, config.train, seed=seed))


def _cfs(train, p, seed, config):
    return cfs(train)


BASELINES = {
    "fwe": _fwe,
    "fdr": _fdr,
    "percentile": _percentile,
    "pca": _pca,
    "lasso": _lasso,
    "sfs": _sfs,
    "sbs": _sbs,
    "cfs": _cfs,
}


def compare(config: RunConfig, prepared: Prepared, proposed_mask=None) -> ComparisonReport:
    config = config.seeded()
    params = config.params()
    specs = []
    if proposed_mask is not None:
        mask = np.asarray(proposed_mask, bool)
        specs.append(MethodSpec("proposed", lambda tr, mask=mask: MaskSelection(mask),
                                config.classifier, config.train))
    for name in config.baselines:
        fn = BASELINES[name]
        specs.append(MethodSpec(name, lambda tr, fn=fn: fn(tr, params, config.seed, config),
                                config.classifier, config.train))
    with _stage("evaluate"):
        return compare_on_split(prepared.train, prepared.test, specs)


@dataclass
class PipelineResult:
    report: ComparisonReport
    ga: GaResult
    prepared: Prepared
    out_dir: Path
    artifacts: dict


def run_pipeline(config: RunConfig, dataset: Dataset | None = None, prepared: Prepared | None = None,
                 write: bool = True) -> PipelineResult:
    """Full run. Artifacts other than ``timing.json`` depend only on the
    configuration and seed."""
    config = config.validate(check_files=dataset is None and prepared is None).seeded()
    t0 = time.perf_counter()
    if prepared is None:
        prepared = prepare(config, dataset)
    t_prep = time.perf_counter()
    result = select_features(config, prepared.train)
    t_sel = time.perf_counter()
    report = compare(config, prepared, result.best_mask)
    t_cmp = time.perf_counter()

    out = Path(config.out_dir)
    texts = {
        "preprocess.json": _dumps(prepared.info),
        "selected_features.json": _dumps(selection_dict(result, prepared.train.feature_names)),
        "metrics.json": report.to_json() + "\n",
        "trajectory.csv": trajectory_csv(result),
    }
    for row in report.rows:
        if row.roc is not None:
            texts[f"roc_{_safe_name(row.method)}.csv"] = row.roc.to_csv()
    manifest = {
        "tool": "hybridfs",
        "version": __version__,
        "seed": config.seed,
        # where the files landed is not part of the run's identity
        "config": {k: v for k, v in config.to_dict().items() if k != "out_dir"},
        "best_cost_trajectory": [float(c) for c in result.best_cost_trajectory],
        "nfe_trajectory": [int(n) for n in result.nfe_trajectory],
        "artifacts": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(texts.items())},
    }
    texts["manifest.json"] = _dumps(manifest)
    timing = {"prepare_s": t_prep - t0, "select_s": t_sel - t_prep, "evaluate_s": t_cmp - t_sel,
              "total_s": t_cmp - t0}
    if write:
        with _stage("write"):
            for name, text in texts.items():
                _atomic_write(out / name, text)
            _atomic_write(out / "timing.json", _dumps(timing))
    return PipelineResult(report, result, prepared, out, texts)


# ---------------------------------------------------------------------------
# sweep

# (crossover rate, mutation rate) blocks, each with three (population, neurons) rows
DEFAULT_SWEEP_GRID = [
    (0.6, 0.2, [(50, 10), (100, 15), (150, 20)]),
    (0.6, 0.3, [(200, 10), (250, 15), (300, 20)]),
    (0.7, 0.2, [(300, 10), (350, 15), (400, 20)]),
    (0.7, 0.3, [(450, 10), (500, 15), (550, 20)]),
    (0.8, 0.2, [(550, 10), (600, 15), (650, 20)]),
    (0.8, 0.3, [(650, 10), (700, 15), (750, 20)]),
]


def grid_cells(grid=None) -> list:
    grid = DEFAULT_SWEEP_GRID if grid is None else grid
    cells = []
    for theta, mu, rows in grid:
        for pop, neurons in rows:
            GaConfig(population_size=pop, crossover_rate=theta, mutation_rate=mu)
            if int(neurons) < 1:
                raise ValueError("neurons must be >= 1")
            cells.append({"crossover_rate": theta, "mutation_rate": mu,
                          "population_size": pop, "neurons": neurons})
    return cells


def _cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint32)[0])


def _run_cell(config: RunConfig, prepared: Prepared, cell: dict, index: int, out: Path, write: bool):
    row = dict(cell, cell=index, seed=_cell_seed(config.seed, index))
    try:
        cfg = replace(
            config,
            seed=row["seed"],
            ga=replace(config.ga, crossover_rate=cell["crossover_rate"], mutation_rate=cell["mutation_rate"],
                       population_size=cell["population_size"], workers=1),
            cost=replace(config.cost, hidden_dim=cell["neurons"]),
            baselines=(),
            out_dir=str(out / f"cell_{index:02d}"),
        )
        res = run_pipeline(cfg, prepared=prepared, write=write)
        traj = res.ga.best_cost_trajectory
        row.update(best_cost=res.ga.best_cost, n_selected=res.ga.n_selected, nfe=res.ga.nfe_used,
                   test_accuracy=res.report.row("proposed").test_accuracy,
                   trajectory=[float(c) for c in traj], error=None)
    except Exception as exc:
        row.update(best_cost=None, n_selected=None, nfe=None, test_accuracy=None, trajectory=[],
                   error=str(exc))
    return row


def sweep_table(rows) -> str:
    """CSV with one line per cell: the cost trajectory sampled at the first
    five and last five iterations."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["crossover_rate", "mutation_rate", "population_size", "neurons"]
               + [f"first_{i}" for i in range(1, 6)] + [f"last_{i}" for i in range(5, 0, -1)]
               + ["best_cost", "n_selected", "error"])
    for r in rows:
        t = r["trajectory"]
        head = (t[:5] + [None] * 5)[:5]
        tail = ([None] * 5 + t[-5:])[-5:] if t else [None] * 5
        fmt = ["" if v is None else repr(float(v)) for v in head + tail]
        w.writerow([r["crossover_rate"], r["mutation_rate"], r["population_size"], r["neurons"]] + fmt
                   + ["" if r["best_cost"] is None else repr(float(r["best_cost"])),
                      "" if r["n_selected"] is None else r["n_selected"], r["error"] or ""])
    return buf.getvalue()


def sweep(config: RunConfig, grid=None, workers: int = 1, dataset: Dataset | None = None,
          prepared: Prepared | None = None, write: bool = True) -> list:
    """Run every grid cell on one shared preprocessing result."""
    config = config.validate(check_files=dataset is None and prepared is None)
    if prepared is None:
        prepared = prepare(config, dataset)
    cells = grid_cells(config.sweep_grid if grid is None else grid)
    out = Path(config.out_dir)
    if workers > 1 and len(cells) > 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=workers)(
            delayed(_run_cell)(config, prepared, c, i, out, write) for i, c in enumerate(cells))
    else:
        rows = [_run_cell(config, prepared, c, i, out, write) for i, c in enumerate(cells)]
    if write:
        _atomic_write(out / "sweep.csv", sweep_table(rows))
        _atomic_write(out / "sweep.json", _dumps({"seed": config.seed, "cells": rows}))
    return rows
