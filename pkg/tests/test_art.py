import math
from dataclasses import replace

import numpy as np
import pytest

from hypersparse.art import (
    ArtState, MetricLog, Phase, PipelineConfig, finetune, oneshot_baseline, pretrain, regularize,
    run_art, smoothed_rating, train_epoch, _phase_seed,
)
from hypersparse.data import BlobSpec, SplitPlan, generate_blobs, split_dataset
from hypersparse.errors import ContractError
from hypersparse.nn import ModelSpec, init_params
from hypersparse.pruning import magnitude_prune
from hypersparse.regularization import RegularizerSpec, lambda_at


def cfg_for(**kw):
    base = dict(pretrain_epochs=4, finetune_epochs=4, max_reg_epochs=60,
                reg=RegularizerSpec(lambda_init=1e-3, eta=1.3, pruning_rate=0.8), seed=0)
    base.update(kw)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def splits():
    return split_dataset(generate_blobs(BlobSpec(dims=8, classes=4, samples_per_class=80, seed=2)),
                         SplitPlan(seed=0))


@pytest.fixture(scope="module")
def spec(splits):
    return ModelSpec(splits.train.dims, (16,), 4)


def test_smoothed_rating():
    assert smoothed_rating([0.6, 0.7, 0.8], 1) == pytest.approx(0.7)
    assert smoothed_rating([0.5] * 5, 2) == 0.5
    assert smoothed_rating([0.4, 0.6], 0) == pytest.approx(0.5)
    with pytest.raises(ContractError):
        smoothed_rating([], 0)


def test_phase_monotonic():
    st = ArtState()
    st.advance(Phase.REGULARIZE)
    st.advance(Phase.FINETUNE)
    with pytest.raises(ContractError):
        st.advance(Phase.PRETRAIN)


def test_finetune_schedule_defaults():
    sgd = PipelineConfig(finetune_epochs=160).finetune_sgd()
    assert sgd.lr_decay_epochs == (80, 120)
    assert sgd.weight_decay == 1e-4 and sgd.lr_decay_factor == 0.1 and sgd.batch_size == 64
    assert PipelineConfig().pretrain_sgd().weight_decay == 0.0


def test_pretrain_zero_epochs_returns_init(splits, spec):
    w = pretrain(spec, splits, cfg_for(pretrain_epochs=0), MetricLog())
    assert w.equals(init_params(spec, 0))


def test_pretrain_separable_and_deterministic():
    ds = generate_blobs(BlobSpec(dims=4, classes=2, samples_per_class=100, center_spread=6, noise_sigma=0.5, seed=1))
    sp = split_dataset(ds, SplitPlan(seed=0))
    spec = ModelSpec(4, (8,), 2)
    cfg = cfg_for(pretrain_epochs=5)
    a = pretrain(spec, sp, cfg, MetricLog())
    b = pretrain(spec, sp, cfg, MetricLog())
    assert a.equals(b)
    from hypersparse.nn import evaluate
    assert evaluate(a, sp.val.inputs, sp.val.labels) > 0.95


def test_regularize_contracts(splits, spec):
    cfg = cfg_for()
    log = MetricLog()
    w_pre = pretrain(spec, splits, cfg, log)
    state = ArtState(phase=Phase.PRETRAIN, epoch_global=cfg.pretrain_epochs)
    res = regularize(w_pre, splits, cfg, log, state)
    reg = log.phase(Phase.REGULARIZE)
    assert len(reg) == res.reg_epochs == len(res.lambdas)
    assert not res.truncated
    for e, r in enumerate(reg):
        assert r.lam == lambda_at(cfg.reg, e)
    # termination: best smoothed pruned rating reached the dense rating
    assert res.best_rating >= res.dense_at_exit
    # best-weight dominance over all completed smoothed ratings
    assert res.best_rating == max(res.smoothed)
    assert res.smoothed[res.best_index] == res.best_rating
    assert len(log.pruned_flags) == res.reg_epochs
    assert w_pre.equals(pretrain(spec, splits, cfg, MetricLog()))  # w_pre untouched


def test_regularize_truncation(splits, spec):
    cfg = cfg_for(max_reg_epochs=2, reg=RegularizerSpec(lambda_init=1e-9, eta=1.01, pruning_rate=0.95))
    w_pre = pretrain(spec, splits, cfg, MetricLog())
    res = regularize(w_pre, splits, cfg, MetricLog())
    assert res.truncated and res.reg_epochs == 2


def test_finetune_keeps_zeros(splits, spec):
    cfg = cfg_for(finetune_epochs=6)
    log = MetricLog()
    w = pretrain(spec, splits, cfg, log)
    params, mask, start = finetune(w, splits, cfg, log)
    D = params.num_prunable
    assert mask == magnitude_prune(w, cfg.kappa)
    for r in log.phase(Phase.FINETUNE):
        assert r.zero_count >= math.floor(cfg.kappa * D)
    assert np.all(params.flat_weights()[~mask.bits] == 0)


def test_finetune_kappa_zero_is_dense_training(splits, spec):
    cfg = cfg_for(reg=RegularizerSpec(pruning_rate=0.0), finetune_epochs=3)
    w = init_params(spec, 5)
    params, mask, _ = finetune(w, splits, cfg, MetricLog())
    assert mask.bits.all()
    manual = w.copy()
    sgd = cfg.finetune_sgd()
    for e in range(3):
        train_epoch(manual, splits.train, sgd, e, _phase_seed(cfg, Phase.FINETUNE, e))
    assert params.equals(manual)


def test_oneshot(splits, spec):
    cfg = cfg_for()
    res = oneshot_baseline(spec, splits, cfg)
    assert res.mask == magnitude_prune(res.pretrained, cfg.kappa)
    assert res.reg_epochs == 0
    dense = oneshot_baseline(spec, splits, replace(cfg, reg=replace(cfg.reg, pruning_rate=0.0)))
    assert dense.mask.bits.all()


def test_run_art_end_to_end(splits, spec):
    cfg = cfg_for(finetune_epochs=8)
    a = run_art(spec, splits, cfg)
    b = run_art(spec, splits, cfg)
    assert a.mask == b.mask and a.params.equals(b.params)
    phases = [r.phase for r in a.log.records]
    assert phases == sorted(phases)
    epochs = [r.epoch for r in a.log.records]
    assert epochs == list(range(1, len(epochs) + 1))
    assert all(0 <= r.mask_intersection <= 1 for r in a.log.records)
    assert a.val_acc >= a.finetune_start_val_acc
