"""Result and manifest files for experiment runs.

Per-round results are CSV with the fixed column set
rep, round, labels, test_accuracy, sel_time_s, log_gram_det, mean_norm.
Floats are written with repr, which round-trips float64 exactly and renders
infinities as "inf"/"-inf" and missing diagnostics as "nan". Result files
are opened once per repetition and appended to as rounds finish.

The run manifest is JSON carrying the resolved config snapshot, the seeds,
the package version, the per-repetition result file names, and timestamps;
the snapshot plus seeds is enough to re-run the experiment bit for bit.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone

from .loop import RoundLog

RESULT_COLUMNS = ("rep", "round", "labels", "test_accuracy", "sel_time_s", "log_gram_det", "mean_norm")

MANIFEST_NAME = "manifest.json"


class ResultsWriter:
    """Append-only per-round CSV writer."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")
        self._fh.write(",".join(RESULT_COLUMNS) + "\n")

    def append(self, log):
        row = [
            str(log.rep),
            str(log.round),
            str(log.labels),
            repr(float(log.test_accuracy)),
            repr(float(log.sel_time_s)),
            repr(float(log.log_gram_det)),
            repr(float(log.mean_norm)),
        ]
        self._fh.write(",".join(row) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_results(path, logs):
    """Write a list of RoundLogs to one CSV file."""
    with ResultsWriter(path) as writer:
        for log in logs:
            writer.append(log)


def read_results(path):
    """Exact inverse of write_results; a wrong header is a schema error."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines:
        raise ValueError(f"{path}: file is empty")
    header = tuple(lines[0].split(","))
    if header != RESULT_COLUMNS:
        raise ValueError(f"{path}: unexpected result schema {header!r}, want {RESULT_COLUMNS!r}")
    logs = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(RESULT_COLUMNS):
            raise ValueError(f"{path}:{line_no}: expected {len(RESULT_COLUMNS)} fields, found {len(parts)}")
        logs.append(
            RoundLog(
                rep=int(parts[0]),
                round=int(parts[1]),
                labels=int(parts[2]),
                test_accuracy=float(parts[3]),
                sel_time_s=float(parts[4]),
                log_gram_det=float(parts[5]),
                mean_norm=float(parts[6]),
            )
        )
    return logs


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path, config_snapshot, base_seed, rep_seeds, result_files, version, created=None, extra=None):
    manifest = {
        "version": version,
        "created_utc": created or _utc_now(),
        "config": config_snapshot,
        "seed": int(base_seed),
        "rep_seeds": [int(s) for s in rep_seeds],
        "result_files": list(result_files),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
