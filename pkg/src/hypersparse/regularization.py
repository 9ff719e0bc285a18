"""Sparsity regularizers as per-weight gradient generators.

All functions work on the flat vector of prunable weights, in float64.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateDistributionError

# unique positive root of d^3/dx^3 tanh(x), i.e. the inflection point of tanh'
INFLECTION_X = math.atanh(1.0 / math.sqrt(3.0))


class RegKind(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    HYPERSPARSE = "hypersparse"

    @classmethod
    def parse(cls, value) -> "RegKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ContractError(f"unknown regularizer kind {value!r}") from None


@dataclass(frozen=True)
class RegularizerSpec:
    kind: RegKind = RegKind.HYPERSPARSE
    lambda_init: float = 5e-6
    eta: float = 1.05
    pruning_rate: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "kind", RegKind.parse(self.kind))
        if not self.lambda_init > 0:
            raise ContractError("lambda_init must be positive")
        if not self.eta > 1:
            raise ContractError("eta must be > 1 (ascending schedule)")
        if not 0 <= self.pruning_rate < 1:
            raise ContractError("pruning_rate must lie in [0, 1)")


def lambda_at(spec: RegularizerSpec, epoch: int) -> float:
    """Regularization rate for regularized epoch ``epoch`` (0 = first)."""
    if epoch < 0:
        raise ContractError("epoch must be >= 0")
    return spec.lambda_init * spec.eta ** epoch


def tanh_d1(x):
    """d/dx tanh(x) = sech^2(x), written to stay accurate for large |x|."""
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def tanh_d3(x):
    t = np.tanh(x)
    return (1.0 - t * t) * (6.0 * t * t - 2.0)


def align_scale(w_kappa_abs: float) -> float:
    """Scale s placing |w_kappa| at the inflection point of tanh'."""
    if not w_kappa_abs > 0:
        raise DegenerateDistributionError(
            "smallest surviving weight is zero; cannot align the HyperSparse scale"
        )
    return INFLECTION_X / w_kappa_abs


def kappa_threshold(weights: np.ndarray, kappa: float) -> float:
    """|w_kappa|: magnitude of the smallest weight that survives magnitude pruning."""
    if not 0 <= kappa < 1:
        raise ContractError(f"pruning rate {kappa} outside [0, 1)")
    mags = np.abs(weights)
    k = int(math.floor(kappa * mags.size))
    return float(np.partition(mags, k)[k])


@dataclass(frozen=True)
class HyperSparseContext:
    s: float
    sum_abs: float
    sum_t: float
    w_kappa_abs: float

    @classmethod
    def from_weights(cls, weights: np.ndarray, kappa: float) -> "HyperSparseContext":
        w = np.asarray(weights, dtype=np.float64)
        if not np.any(w):
            raise DegenerateDistributionError("all weights are zero")
        wk = kappa_threshold(w, kappa)
        s = align_scale(wk)
        mags = np.abs(w)
        return cls(s=s, sum_abs=float(mags.sum()), sum_t=float(np.tanh(s * mags).sum()),
                   w_kappa_abs=wk)


def hypersparse_value(weights: np.ndarray, ctx: HyperSparseContext) -> float:
    # Evaluated as written; the pseudo-constant A equals sum_t so this cancels to ~0.
    mags = np.abs(np.asarray(weights, dtype=np.float64))
    inner = np.tanh(ctx.s * mags).sum()
    return float((mags * inner).sum() / ctx.sum_t - mags.sum())


def hypersparse_grad(weights: np.ndarray, ctx: HyperSparseContext) -> np.ndarray:
    """Gradient of the HyperSparse loss with the normalizer A held constant.

    g_i = sign(w_i) * s * tanh'(s |w_i|) * sum|w| / sum tanh(s |w|)
    """
    w = np.asarray(weights, dtype=np.float64)
    if ctx.sum_t <= 0:
        raise DegenerateDistributionError("all weights are zero")
    scale = ctx.s * ctx.sum_abs / ctx.sum_t
    return np.sign(w) * tanh_d1(ctx.s * w) * scale


def reg_grad(kind, weights: np.ndarray, kappa: float) -> np.ndarray:
    """Unscaled regularizer gradient over the flat prunable weights."""
    kind = RegKind.parse(kind)
    w = np.asarray(weights, dtype=np.float64)
    if kind is RegKind.L1:
        return np.sign(w)
    if kind is RegKind.L2:
        return w.copy()
    ctx = HyperSparseContext.from_weights(w, kappa)
    return hypersparse_grad(w, ctx)
