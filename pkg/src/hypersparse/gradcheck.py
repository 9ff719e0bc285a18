"""Finite-difference verification of the HyperSparse gradient.

The oracle evaluates the loss expression directly, with the normalizer A and the
alignment scale s frozen at the unperturbed point, and takes central differences.
It shares no code with :mod:`hypersparse.regularization` beyond the function under test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .regularization import (
    HyperSparseContext,
    align_scale,
    hypersparse_grad,
    hypersparse_value,
    tanh_d3,
)

FD_STEP = 1e-6
GRAD_RTOL = 1e-4
ROOT_ATOL = 1e-9
VALUE_RTOL = 1e-6


def frozen_loss_fd(w: np.ndarray, kappa: float, h: float = FD_STEP) -> np.ndarray:
    """Central differences of sum|w| * sum t(s w) / A - sum|w| with A, s held fixed."""
    w = np.asarray(w, dtype=np.float64)
    D = w.size
    mags = np.abs(w)
    s = math.atanh(1 / math.sqrt(3)) / np.sort(mags)[int(math.floor(kappa * D))]
    t = np.tanh(s * mags)
    A = t.sum()
    sum_abs, sum_t = mags.sum(), t.sum()

    def loss_with(i_vals):
        # loss at w with coordinate i replaced by i_vals[i], for every i at once
        m = np.abs(i_vals)
        sa = sum_abs - mags + m
        st = sum_t - t + np.tanh(s * m)
        return sa * st / A - sa

    return (loss_with(w + h) - loss_with(w - h)) / (2 * h)


def random_instance(rng: np.random.Generator, min_len=64, max_len=4096):
    """A weight vector at a realistic scale, with magnitudes away from the |w| kink."""
    D = int(rng.integers(min_len, max_len + 1))
    kappa = float(rng.uniform(0.5, 0.99))
    sigma = 10 ** rng.uniform(-2, -1)
    w = rng.normal(0, sigma, D)
    small = np.abs(w) < 100 * FD_STEP
    while small.any():
        w[small] = rng.normal(0, sigma, small.sum())
        small = np.abs(w) < 100 * FD_STEP
    return w, kappa


@dataclass
class GradcheckReport:
    n: int
    max_rel_error: float
    worst_instance: int
    max_root_residual: float
    max_value_ratio: float

    @property
    def ok(self) -> bool:
        return (self.max_rel_error < GRAD_RTOL and self.max_root_residual < ROOT_ATOL
                and self.max_value_ratio <= VALUE_RTOL)


def run_gradcheck(seed: int = 0, n: int = 100, grad_fn=hypersparse_grad) -> GradcheckReport:
    rng = np.random.Generator(np.random.PCG64(seed))
    worst, worst_i, root_res, value_ratio = 0.0, -1, 0.0, 0.0
    for i in range(n):
        w, kappa = random_instance(rng)
        ctx = HyperSparseContext.from_weights(w, kappa)
        g = grad_fn(w, ctx)
        fd = frozen_loss_fd(w, kappa)
        denom = np.maximum(np.abs(fd), np.abs(g))
        rel = np.where(denom > 0, np.abs(fd - g) / np.where(denom > 0, denom, 1), 0.0)
        if rel.max() > worst:
            worst, worst_i = float(rel.max()), i
        s = align_scale(ctx.w_kappa_abs)
        root_res = max(root_res, abs(float(tanh_d3(s * ctx.w_kappa_abs))))
        value_ratio = max(value_ratio, abs(hypersparse_value(w, ctx)) / ctx.sum_abs)
    return GradcheckReport(n, worst, worst_i, root_res, value_ratio)
