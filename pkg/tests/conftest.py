import os
from pathlib import Path

import pytest

SECOM_DIR = os.environ.get("SECOM_DIR")


def secom_paths():
    """(features, labels) when $SECOM_DIR holds the public SECOM files, else None."""
    if not SECOM_DIR:
        return None
    d = Path(SECOM_DIR)
    feats, labels = d / "secom.data", d / "secom_labels.data"
    if feats.is_file() and labels.is_file():
        return feats, labels
    return None


needs_secom = pytest.mark.skipif(secom_paths() is None,
                                 reason="set SECOM_DIR to a directory with secom.data and secom_labels.data")


SMALL_GA = {"population_size": 6, "max_iterations": 3}
SMALL_COST = {"hidden_dim": 4}


@pytest.fixture(scope="session")
def surrogate_files(tmp_path_factory):
    """Small SECOM-layout files: 260 rows, 30 features, 40 failures."""
    from hybridfs.dataset import write_secom
    from hybridfs.synthetic import secom_like
    d = tmp_path_factory.mktemp("surrogate")
    write_secom(secom_like(260, 30, 40, 6, seed=3), d / "secom.data", d / "secom_labels.data")
    return d / "secom.data", d / "secom_labels.data"


@pytest.fixture
def make_config(tmp_path, surrogate_files):
    """Write a small run configuration; keyword overrides replace top-level keys."""
    import json

    def make(**overrides):
        cfg = {
            "data_format": "secom",
            "features_path": str(surrogate_files[0]),
            "labels_path": str(surrogate_files[1]),
            "ga": dict(SMALL_GA),
            "cost": dict(SMALL_COST),
            "baselines": ["fwe", "fdr", "percentile", "pca", "lasso"],
            "baseline_params": {"percentile_features": 8, "pca_components": 5},
            "out_dir": str(tmp_path / "out"),
            "seed": 7,
        }
        cfg.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        return path
    return make


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
