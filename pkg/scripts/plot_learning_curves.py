"""Plot mean test-accuracy learning curves (with standard-error bands)
from one or more run directories produced by `batchal run`."""

import argparse
import sys
from pathlib import Path

import numpy as np

from batchal.loop import accuracy_table
from batchal.results_io import MANIFEST_NAME, read_manifest, read_results


def load_curve(run_dir):
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir / MANIFEST_NAME)
    logs = []
    for name in manifest["result_files"]:
        logs.extend(read_results(run_dir / name))
    budgets, table = accuracy_table(logs)
    mean = table.mean(axis=0)
    se = table.std(axis=0, ddof=1) / np.sqrt(table.shape[0]) if table.shape[0] > 1 else np.zeros_like(mean)
    return manifest["selector_name"], np.asarray(budgets), mean, se


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("run_dirs", nargs="+")
    parser.add_argument("--out", default="learning_curves.svg")
    args = parser.parse_args(argv)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for run_dir in args.run_dirs:
        name, budgets, mean, se = load_curve(run_dir)
        ax.plot(budgets, mean, marker="o", label=name)
        ax.fill_between(budgets, mean - se, mean + se, alpha=0.2)
    ax.set_xlabel("labels")
    ax.set_ylabel("test accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
