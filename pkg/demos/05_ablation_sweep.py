"""A miniature version of the ablation study: train the main method and two
baselines over a couple of seeds, then print the report table.

Run: python demos/05_ablation_sweep.py   (takes a minute or two)
"""

import tempfile
from pathlib import Path

from sewda.cli import main as sewda_cli

CONFIG = """\
[dataset]
k = 6
d_in = 8
source_per_class = 120
target_per_class = 80

[train]
mode = "predguide"
iterations = 2000

[sweep]
modes = ["predguide", "no_weights", "s_plus_t"]
seeds = [0, 1]
"""


def main():
    with tempfile.TemporaryDirectory() as td:
        cfg_path = Path(td) / "sweep.toml"
        cfg_path.write_text(CONFIG, encoding="utf-8")
        out_dir = Path(td) / "runs"
        print("training 3 modes x 2 seeds (reduced benchmark)...")
        code = sewda_cli(["train", "--config", str(cfg_path), "--out-dir", str(out_dir), "--workers", "2"])
        assert code == 0

        print("\nreport (per-run rows, then per-mode means):")
        run_dirs = sorted(str(p) for p in out_dir.iterdir() if p.is_dir())
        sewda_cli(["report", *run_dirs, "--format", "markdown"])


if __name__ == "__main__":
    main()
