"""CSV emission with fixed schemas. Floats use 6 significant digits, '.' separator."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .metrics import compression_position, cp_by_group, individual_accuracies

METRICS_COLUMNS = ["epoch", "phase", "lambda", "train_loss", "val_acc_dense", "val_acc_pruned",
                   "implicit_sparsity", "mask_intersection"]
LAYER_COLUMNS = ["layer", "kept", "total", "keep_ratio"]
CP_COLUMNS = ["window", "sample_id", "label", "psi_i", "cp"]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return ""
        return "%.6g" % x
    if x is None:
        return ""
    return str(x)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_metrics(path, log) -> None:
    write_csv(path, METRICS_COLUMNS, (
        [r.epoch, r.phase.label, r.lam, r.train_loss, r.val_acc_dense, r.val_acc_pruned,
         r.implicit_sparsity, r.mask_intersection]
        for r in log.records
    ))


def write_weights_per_layer(path, per_layer) -> None:
    write_csv(path, LAYER_COLUMNS, (
        [name, kept, total, kept / total if total else float("nan")] for name, kept, total in per_layer
    ))


def cp_rows(window: str, flags, ids, labels):
    """Rows of cp.csv for one recorded window (epochs x samples correctness matrix)."""
    if len(flags) == 0:
        return []
    psi = individual_accuracies(np.asarray(flags))
    cp = compression_position(psi, ids)
    return [[window, int(i), int(y), p, c] for i, y, p, c in zip(ids, labels, psi, cp)]


def write_cp(path, rows) -> None:
    write_csv(path, CP_COLUMNS, rows)


def write_cp_by_group(path, cp, labels, hardness=None) -> None:
    table = cp_by_group(cp, labels, hardness)
    if hardness is None:
        write_csv(path, ["group", "mean_cp"], ([g, v] for g, v in table.items()))
    else:
        write_csv(path, ["group", "h0", "h1", "h2", "h3"],
                  ([g, *(row[h] for h in range(4))] for g, row in table.items()))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
