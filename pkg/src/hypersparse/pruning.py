"""Global magnitude pruning and mask bookkeeping over the flat prunable weights."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass
class SparsityMask:
    bits: np.ndarray  # bool, length D; True = kept
    kappa: float

    @property
    def size(self) -> int:
        return self.bits.size

    @property
    def kept(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        return isinstance(other, SparsityMask) and np.array_equal(self.bits, other.bits)


def _check_kappa(kappa):
    if not 0 <= kappa < 1:
        raise ContractError(f"pruning_rate {kappa} outside [0, 1)")


def prune_count(D: int, kappa: float) -> int:
    return int(math.floor(kappa * D))


def magnitude_prune_flat(weights: np.ndarray, kappa: float) -> SparsityMask:
    """Keep all but the floor(kappa*D) smallest magnitudes.

    Ties at the threshold prune the smaller flat index first (stable sort).
    """
    _check_kappa(kappa)
    w = np.asarray(weights)
    order = np.argsort(np.abs(w), kind="stable")
    bits = np.ones(w.size, dtype=bool)
    bits[order[: prune_count(w.size, kappa)]] = False
    return SparsityMask(bits, kappa)


def magnitude_prune(params, kappa: float) -> SparsityMask:
    return magnitude_prune_flat(params.flat_weights(), kappa)


def _check_mask(params, mask):
    if mask.size != params.num_prunable:
        raise ContractError(f"mask length {mask.size} != {params.num_prunable} prunable weights")


def apply_mask(params, mask: SparsityMask, inplace=False):
    """Zero the pruned weights. Returns a new store unless ``inplace``."""
    _check_mask(params, mask)
    out = params if inplace else params.copy()
    for layer, sl in out.layer_slices():
        layer.values[~mask.bits[sl].reshape(layer.values.shape)] = 0
    return out


def implicit_sparsity(params, tau_rel: float = 1e-3) -> float:
    """Fraction of prunable weights with |w| < tau_rel * max|w| (1.0 if all zero)."""
    if tau_rel <= 0:
        raise ContractError("tau_rel must be positive")
    mags = np.abs(params.flat_weights(np.float64))
    top = mags.max() if mags.size else 0.0
    if top == 0:
        return 1.0
    return float(np.mean(mags < tau_rel * top))


def zero_count(params) -> int:
    return int(np.count_nonzero(params.flat_weights() == 0))


def weights_per_layer(params, mask: SparsityMask):
    """[(layer_name, kept, total)] in execution order."""
    _check_mask(params, mask)
    return [
        (layer.name, int(mask.bits[sl].sum()), layer.values.size)
        for layer, sl in params.layer_slices()
    ]
