"""Run the Gaussian-mixture selector suite and aggregate the comparison.

Runs rand, conf, badge, and badge_kdpp on the same mixture (K=3, d_in=16,
n=10000, separation 1.8), 5 repetitions each, then writes per-run CSVs, a
penalty matrix, normalized-error CDFs, and batch diagnostics under --out-dir.
These constants match tests/test_acceptance.py, so a finished directory is
also a record of what the acceptance checks saw.
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from batchal.cli import main as batchal_main

SELECTORS = ("rand", "conf", "badge", "badge_kdpp")

SUITE = {
    "dataset": {
        "kind": "synth_gaussian",
        "num_classes": 3,
        "input_dim": 16,
        "n": 10000,
        "separation": 1.8,
        "seed": 11,
    },
    "selector": "rand",
    "M": 100,
    "B": 100,
    "T": 10,
    "R": 5,
    "seed": 0,
    "model": {"hidden_dim": 96},
}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="runs/gaussian-suite")
    parser.add_argument("--selectors", nargs="+", default=list(SELECTORS), choices=SELECTORS)
    parser.add_argument("--skip-compare", action="store_true",
                        help="only produce the per-selector run directories")
    args = parser.parse_args(argv)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(SUITE, fh)
        config_path = fh.name

    run_dirs = []
    for selector in args.selectors:
        run_dir = out / selector
        print(f"=== {selector} -> {run_dir}", flush=True)
        code = batchal_main([
            "run", "--config", config_path, "--selector", selector,
            "--out-dir", str(run_dir),
        ])
        if code:
            return code
        run_dirs.append(str(run_dir))

    if args.skip_compare:
        return 0
    code = batchal_main(["compare", *run_dirs, "--out-dir", str(out / "comparison"), "--plot"])
    if code:
        return code
    return batchal_main(["diag", *run_dirs, "--out-dir", str(out / "diagnostics"), "--plot"])


if __name__ == "__main__":
    sys.exit(main())
