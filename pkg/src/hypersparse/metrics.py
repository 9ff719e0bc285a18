"""Training-dynamics metrics: mask intersection, individual accuracy, Compression Position."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .pruning import SparsityMask, magnitude_prune_flat


def topset_intersection(top_bits: np.ndarray, final_mask: SparsityMask) -> float:
    K = final_mask.kept
    if K == 0:
        raise ContractError("final mask keeps no weights")
    return float(np.count_nonzero(top_bits & final_mask.bits)) / K


def mask_intersection(weights: np.ndarray, final_mask: SparsityMask, kappa: float) -> float:
    """Share of the final kept set that the current top-(1-kappa) weights already cover."""
    if final_mask.kept == 0:
        raise ContractError("final mask keeps no weights")
    top = magnitude_prune_flat(weights, kappa).bits
    return topset_intersection(top, final_mask)


def individual_accuracy(flags) -> float:
    """Fraction of recorded epochs in which the pruned model got the sample right."""
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        raise ContractError("need at least one recorded epoch (e_E > e_S)")
    return float(flags.sum()) / flags.size


def individual_accuracies(flag_matrix) -> np.ndarray:
    """Row-per-epoch, column-per-sample correctness matrix to per-sample psi_I."""
    m = np.asarray(flag_matrix, dtype=bool)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ContractError("need at least one recorded epoch (e_E > e_S)")
    return m.sum(axis=0) / m.shape[0]


def compression_position(psis, sample_ids=None) -> np.ndarray:
    """Normalized rank of each psi_I in descending order; ties go to the smaller id first."""
    psis = np.asarray(psis, dtype=np.float64)
    n = psis.size
    if n == 0:
        return np.zeros(0)
    ids = np.arange(n) if sample_ids is None else np.asarray(sample_ids)
    order = np.lexsort((ids, -psis))
    cp = np.empty(n)
    cp[order] = np.arange(n) / n
    return cp


@dataclass(frozen=True)
class AnnotatorLabels:
    sample_id: int
    true_label: object
    annotator_labels: tuple


def hardness_score(rec: AnnotatorLabels) -> int:
    if len(rec.annotator_labels) != 3:
        raise ContractError(f"expected 3 annotator labels, got {len(rec.annotator_labels)}")
    return sum(1 for y in rec.annotator_labels if y != rec.true_label)


def cp_by_group(cp: Sequence[float], groups: Sequence, hardness: Sequence[int] = None):
    """Mean CP per (group, hardness) cell.

    Returns ``{group: {h: mean or None}}`` with h over 0..3, or ``{group: mean}`` when
    no hardness is given.
    """
    cp = np.asarray(cp, dtype=np.float64)
    groups = np.asarray(groups)
    table = {}
    for g in sorted(set(groups.tolist())):
        sel = groups == g
        if hardness is None:
            table[g] = float(cp[sel].mean())
            continue
        hard = np.asarray(hardness)
        row = {}
        for h in range(4):
            cell = cp[sel & (hard == h)]
            row[h] = float(cell.mean()) if cell.size else None
        table[g] = row
    return table
