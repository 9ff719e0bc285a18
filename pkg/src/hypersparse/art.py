"""Adaptive Regularized Training: pre-train, regularize until crossover, fine-tune.

Also provides the one-shot magnitude pruning baseline (pre-train, prune, fine-tune)
with identical budgets for steps 1 and 3.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .data import Splits, batches, epoch_seed
from .errors import ContractError
from .metrics import topset_intersection
from .nn import ModelSpec, ParamStore, SgdConfig, evaluate, forward_backward, init_params, predict, sgd_step
from .pruning import (
    SparsityMask,
    apply_mask,
    implicit_sparsity,
    magnitude_prune,
    magnitude_prune_flat,
    zero_count,
)
from .regularization import RegularizerSpec, lambda_at, reg_grad

log = logging.getLogger(__name__)


class Phase(enum.IntEnum):
    PRETRAIN = 0
    REGULARIZE = 1
    FINETUNE = 2
    DONE = 3

    @property
    def label(self):
        return self.name.lower()


@dataclass
class PipelineConfig:
    pretrain_epochs: int = 60
    pretrain_lr: float = 0.1
    batch_size: int = 64
    reg: RegularizerSpec = field(default_factory=RegularizerSpec)
    max_reg_epochs: int = 500
    finetune_epochs: int = 160
    finetune_lr: float = 0.1
    finetune_weight_decay: float = 1e-4
    lr_decay_factor: float = 0.1
    lr_decay_epochs: Optional[tuple] = None  # None: at 2/4 and 3/4 of finetune_epochs
    tau_rel: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ContractError("epoch counts must be nonnegative")
        if self.max_reg_epochs < 1:
            raise ContractError("max_reg_epochs must be >= 1")

    @property
    def kappa(self) -> float:
        return self.reg.pruning_rate

    def pretrain_sgd(self) -> SgdConfig:
        return SgdConfig(learning_rate=self.pretrain_lr, batch_size=self.batch_size)

    def finetune_sgd(self) -> SgdConfig:
        decay = self.lr_decay_epochs
        if decay is None:
            E = self.finetune_epochs
            decay = tuple(sorted({E * 2 // 4, E * 3 // 4} - {0})) if E else ()
        return SgdConfig(
            learning_rate=self.finetune_lr,
            weight_decay=self.finetune_weight_decay,
            batch_size=self.batch_size,
            lr_decay_factor=self.lr_decay_factor,
            lr_decay_epochs=tuple(decay),
        )


@dataclass
class EpochRecord:
    epoch: int
    phase: Phase
    lam: float
    train_loss: float
    val_acc_dense: float
    val_acc_pruned: float
    implicit_sparsity: float
    zero_count: int
    top_bits: np.ndarray = field(repr=False)
    mask_intersection: float = float("nan")


@dataclass
class MetricLog:
    """Append-only per-epoch records plus per-sample correctness matrices."""

    records: List[EpochRecord] = field(default_factory=list)
    dense_flags: List[np.ndarray] = field(default_factory=list)
    pruned_flags: List[np.ndarray] = field(default_factory=list)

    def append(self, rec: EpochRecord):
        self.records.append(rec)

    def phase(self, phase: Phase):
        return [r for r in self.records if r.phase == phase]

    def fill_intersections(self, final_mask: SparsityMask):
        for r in self.records:
            r.mask_intersection = topset_intersection(r.top_bits, final_mask)


@dataclass
class ArtState:
    phase: Phase = Phase.PRETRAIN
    epoch_global: int = 0
    epoch_reg: int = 0
    best_params: Optional[ParamStore] = None
    best_rating: float = -math.inf
    best_index: int = -1
    pruned_history: List[float] = field(default_factory=list)
    dense_history: List[float] = field(default_factory=list)
    smoothed_history: List[float] = field(default_factory=list)

    def advance(self, phase: Phase):
        if phase < self.phase:
            raise ContractError(f"cannot move from {self.phase.name} back to {phase.name}")
        self.phase = phase


@dataclass
class RegularizeResult:
    best_params: ParamStore
    best_index: int
    best_rating: float
    dense_at_exit: float
    reg_epochs: int
    truncated: bool
    lambdas: List[float]
    smoothed: List[float]


@dataclass
class RunResult:
    method: str
    params: ParamStore
    mask: SparsityMask
    log: MetricLog
    pretrained: ParamStore
    reg: Optional[RegularizeResult]
    val_acc: float
    test_acc: float
    finetune_start_val_acc: float

    @property
    def reg_epochs(self) -> int:
        return self.reg.reg_epochs if self.reg else 0


def smoothed_rating(pruned_history, e: int) -> float:
    """Mean pruned accuracy over epochs e-1, e, e+1, using whichever exist."""
    vals = [pruned_history[i] for i in (e - 1, e, e + 1) if 0 <= i < len(pruned_history)]
    if not vals:
        raise ContractError(f"no pruned accuracy recorded around epoch {e}")
    return float(np.mean(vals))


def _phase_seed(cfg: PipelineConfig, phase: Phase, local_epoch: int) -> int:
    # keyed by phase-local epoch so different methods see the same batch order
    return epoch_seed(cfg.seed, int(phase) * 1_000_000 + local_epoch)


def train_epoch(params, data, sgd: SgdConfig, lr_epoch: int, seed: int,
                reg: Optional[RegularizerSpec] = None, lam: float = 0.0,
                mask: Optional[SparsityMask] = None) -> float:
    losses = []
    for batch in batches(data, sgd.batch_size, seed):
        loss, grads = forward_backward(params, batch)
        extra = None
        if reg is not None:
            w = params.flat_weights(np.float64)
            extra = lam * reg_grad(reg.kind, w, reg.pruning_rate)
        sgd_step(params, grads, sgd, lr_epoch, extra_grads=extra, mask=mask)
        losses.append(loss * len(batch))
    return float(np.sum(losses) / len(data))


def _record(log_: MetricLog, params, splits: Splits, cfg, epoch, phase, lam, loss,
            mask: Optional[SparsityMask] = None, flags: Optional[list] = None):
    kappa = cfg.kappa
    top = magnitude_prune(params, kappa)
    eval_mask = mask if mask is not None else top
    val = splits.val
    rec = EpochRecord(
        epoch=epoch,
        phase=phase,
        lam=lam,
        train_loss=loss,
        val_acc_dense=evaluate(params, val.inputs, val.labels),
        val_acc_pruned=evaluate(params, val.inputs, val.labels, eval_mask),
        implicit_sparsity=implicit_sparsity(params, cfg.tau_rel),
        zero_count=zero_count(params),
        top_bits=top.bits,
    )
    log_.append(rec)
    if flags is not None:
        train = splits.train
        flags.append(predict(params, train.inputs, eval_mask) == train.labels)
    return rec


def pretrain(spec: ModelSpec, splits: Splits, cfg: PipelineConfig, log_: MetricLog,
             state: Optional[ArtState] = None) -> ParamStore:
    """Unregularized dense training at constant learning rate."""
    state = state or ArtState()
    state.advance(Phase.PRETRAIN)
    params = init_params(spec, cfg.seed)
    sgd = cfg.pretrain_sgd()
    for e in range(cfg.pretrain_epochs):
        loss = train_epoch(params, splits.train, sgd, e, _phase_seed(cfg, Phase.PRETRAIN, e))
        state.epoch_global += 1
        rec = _record(log_, params, splits, cfg, state.epoch_global, Phase.PRETRAIN, 0.0, loss)
        train = splits.train
        log_.dense_flags.append(predict(params, train.inputs) == train.labels)
        log.debug("pretrain epoch %d loss %.4f val %.4f", e, loss, rec.val_acc_dense)
    return params


def regularize(w_pre: ParamStore, splits: Splits, cfg: PipelineConfig, log_: MetricLog,
               state: Optional[ArtState] = None) -> RegularizeResult:
    """The ART loop with 3-epoch smoothed pruned rating, evaluated one epoch in arrears.

    Epoch k trains W_{k-1} -> W_k with rate lambda_at(k-1). Once W_k is rated, the
    smoothed rating of W_{k-1} is complete; W_{k-1} becomes W_best if it beats the
    best so far, and the loop stops once the best smoothed pruned rating reaches the
    dense rating of W_{k-1}.
    """
    state = state or ArtState()
    state.advance(Phase.REGULARIZE)
    spec = cfg.reg
    sgd = cfg.pretrain_sgd()
    val = splits.val
    params = w_pre.copy()
    state.pruned_history = [evaluate(params, val.inputs, val.labels, magnitude_prune(params, cfg.kappa))]
    state.dense_history = [evaluate(params, val.inputs, val.labels)]
    prev = params.copy()
    lambdas = []
    truncated = True
    for k in range(1, cfg.max_reg_epochs + 1):
        state.epoch_reg = k - 1
        lam = lambda_at(spec, state.epoch_reg)
        lambdas.append(lam)
        loss = train_epoch(params, splits.train, sgd, 0, _phase_seed(cfg, Phase.REGULARIZE, k - 1),
                           reg=spec, lam=lam)
        state.epoch_global += 1
        rec = _record(log_, params, splits, cfg, state.epoch_global, Phase.REGULARIZE, lam, loss,
                      flags=log_.pruned_flags)
        state.pruned_history.append(rec.val_acc_pruned)
        state.dense_history.append(rec.val_acc_dense)

        sm = smoothed_rating(state.pruned_history, k - 1)
        state.smoothed_history.append(sm)
        if sm > state.best_rating:
            state.best_rating = sm
            state.best_params = prev
            state.best_index = k - 1
        prev = params.copy()
        log.debug("reg epoch %d lambda %.3g dense %.4f pruned %.4f smoothed %.4f",
                  k - 1, lam, rec.val_acc_dense, rec.val_acc_pruned, sm)
        if state.best_rating >= state.dense_history[k - 1]:
            truncated = False
            break
    if truncated:
        log.warning("regularization hit max_reg_epochs=%d without crossover", cfg.max_reg_epochs)
    return RegularizeResult(
        best_params=state.best_params,
        best_index=state.best_index,
        best_rating=state.best_rating,
        dense_at_exit=state.dense_history[k - 1],
        reg_epochs=k,
        truncated=truncated,
        lambdas=lambdas,
        smoothed=list(state.smoothed_history),
    )


def finetune(w_best: ParamStore, splits: Splits, cfg: PipelineConfig, log_: MetricLog,
             state: Optional[ArtState] = None):
    """Magnitude-prune ``w_best`` and train under the fixed mask. Returns (params, mask, start_val_acc)."""
    state = state or ArtState()
    state.advance(Phase.FINETUNE)
    mask = magnitude_prune(w_best, cfg.kappa)
    params = apply_mask(w_best, mask)
    val = splits.val
    start_acc = evaluate(params, val.inputs, val.labels)
    sgd = cfg.finetune_sgd()
    for e in range(cfg.finetune_epochs):
        loss = train_epoch(params, splits.train, sgd, e, _phase_seed(cfg, Phase.FINETUNE, e), mask=mask)
        state.epoch_global += 1
        _record(log_, params, splits, cfg, state.epoch_global, Phase.FINETUNE, 0.0, loss, mask=mask)
    state.advance(Phase.DONE)
    return params, mask, start_acc


def _finish(method, params, mask, log_, w_pre, reg, splits, start_acc) -> RunResult:
    log_.fill_intersections(mask)
    return RunResult(
        method=method,
        params=params,
        mask=mask,
        log=log_,
        pretrained=w_pre,
        reg=reg,
        val_acc=evaluate(params, splits.val.inputs, splits.val.labels),
        test_acc=evaluate(params, splits.test.inputs, splits.test.labels),
        finetune_start_val_acc=start_acc,
    )


def run_art(spec: ModelSpec, splits: Splits, cfg: PipelineConfig, w_pre: Optional[ParamStore] = None,
            log_: Optional[MetricLog] = None) -> RunResult:
    """Full three-step pipeline. A precomputed ``w_pre`` skips step 1."""
    log_ = log_ or MetricLog()
    state = ArtState()
    if w_pre is None:
        w_pre = pretrain(spec, splits, cfg, log_, state)
    else:
        state.epoch_global = cfg.pretrain_epochs
    reg = regularize(w_pre, splits, cfg, log_, state)
    params, mask, start = finetune(reg.best_params, splits, cfg, log_, state)
    return _finish(f"art_{cfg.reg.kind.value}", params, mask, log_, w_pre, reg, splits, start)


def oneshot_baseline(spec: ModelSpec, splits: Splits, cfg: PipelineConfig,
                     w_pre: Optional[ParamStore] = None, log_: Optional[MetricLog] = None) -> RunResult:
    """Pre-train, prune once by magnitude, fine-tune with the fixed mask."""
    log_ = log_ or MetricLog()
    state = ArtState()
    if w_pre is None:
        w_pre = pretrain(spec, splits, cfg, log_, state)
    else:
        state.epoch_global = cfg.pretrain_epochs
    params, mask, start = finetune(w_pre, splits, cfg, log_, state)
    return _finish("oneshot", params, mask, log_, w_pre, None, splits, start)


def with_kind(cfg: PipelineConfig, kind) -> PipelineConfig:
    return replace(cfg, reg=replace(cfg.reg, kind=kind))
