"""End-to-end run on a small SECOM-shaped surrogate, through the CLI.

    python3 tutorials/surrogate_pipeline.py [out_dir]

Writes SECOM-layout files, a run configuration, then calls `hybridfs run`.
Swap the two paths in the configuration for the real SECOM files to run on
them (see secom_config.json).
"""

import json
import sys
from pathlib import Path

from hybridfs.cli import main
from hybridfs.dataset import write_secom
from hybridfs.synthetic import secom_like

out = Path(sys.argv[1] if len(sys.argv) > 1 else "surrogate_run")
out.mkdir(parents=True, exist_ok=True)
write_secom(secom_like(n=400, m=60, n_failures=40, n_informative=8, seed=1),
            out / "secom.data", out / "secom_labels.data")

config = {
    "features_path": "secom.data",
    "labels_path": "secom_labels.data",
    "ga": {"population_size": 20, "max_iterations": 10},
    "baseline_params": {"percentile_features": 10, "pca_components": 8},
    "out_dir": str(out / "results"),
    "seed": 0,
}
(out / "config.json").write_text(json.dumps(config, indent=2))
status = main(["run", "--config", str(out / "config.json")])
print("artifacts:", sorted(p.name for p in (out / "results").iterdir()))
sys.exit(status)
