import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hypersparse.errors import ContractError, DegenerateDistributionError
from hypersparse.gradcheck import frozen_loss_fd, random_instance
from hypersparse.regularization import (
    INFLECTION_X, HyperSparseContext, RegKind, RegularizerSpec, align_scale,
    hypersparse_grad, hypersparse_value, kappa_threshold, lambda_at, reg_grad, tanh_d1, tanh_d3,
)

signed = st.tuples(st.floats(1e-3, 2), st.booleans()).map(lambda t: t[0] if t[1] else -t[0])
weights = arrays(np.float64, st.integers(2, 200), elements=signed)


def test_lambda_schedule():
    spec = RegularizerSpec(lambda_init=5e-6, eta=1.05)
    assert lambda_at(spec, 0) == 5e-6
    # 5e-6 * 1.05**20 evaluated directly in double precision
    assert lambda_at(spec, 20) == pytest.approx(1.3266488525722111e-05, rel=1e-15)
    with pytest.raises(ContractError):
        RegularizerSpec(eta=1.0)
    with pytest.raises(ContractError):
        RegularizerSpec(pruning_rate=1.0)


def test_inflection_root():
    assert INFLECTION_X == pytest.approx(0.658479, abs=1e-6)
    assert abs(tanh_d3(INFLECTION_X)) < 1e-9
    # 0.6585 / 0.6586 printed values are roundings of the same root
    assert round(INFLECTION_X, 4) == 0.6585


def test_align_scale():
    assert align_scale(0.658479) == pytest.approx(1.0, abs=1e-5)
    assert align_scale(0.1) == pytest.approx(6.584789484624085, rel=1e-12)
    with pytest.raises(DegenerateDistributionError):
        align_scale(0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e3))
def test_alignment_property(wk):
    assert abs(tanh_d3(align_scale(wk) * wk)) < 1e-9


def test_tanh_d1_matches_definition():
    x = np.linspace(-5, 5, 101)
    np.testing.assert_allclose(tanh_d1(x), 1 - np.tanh(x) ** 2, rtol=1e-12, atol=1e-15)
    assert tanh_d1(10.0) < 1e-8
    assert tanh_d1(INFLECTION_X) == pytest.approx(2 / 3, rel=1e-12)


def test_kappa_threshold():
    w = np.array([0.5, -0.1, 0.3, 0.02])
    assert kappa_threshold(w, 0.5) == 0.3
    assert kappa_threshold(w, 0.0) == 0.02


def test_single_weight_gradient():
    w = np.array([0.5])
    ctx = HyperSparseContext.from_weights(w, 0.5)
    assert ctx.w_kappa_abs == 0.5
    assert ctx.s == pytest.approx(1.316957896924817, rel=1e-12)
    # s * tanh'(x*) * 0.5 / tanh(x*) with tanh'(x*) = 2/3 and tanh(x*) = 1/sqrt(3)
    g = hypersparse_grad(w, ctx)
    assert g[0] == pytest.approx(0.7603459963009461, rel=1e-12)
    assert g[0] == pytest.approx(ctx.s * (2 / 3) * 0.5 * math.sqrt(3), rel=1e-12)


def test_zero_weight_gets_no_push():
    w = np.array([0.0, 0.3, -0.2])
    g = hypersparse_grad(w, HyperSparseContext.from_weights(w, 0.5))
    assert g[0] == 0.0


def test_saturated_weight_gradient_vanishes():
    w = np.array([0.01] * 9 + [10.0])
    ctx = HyperSparseContext(s=1.0, sum_abs=np.abs(w).sum(), sum_t=np.tanh(np.abs(w)).sum(), w_kappa_abs=0.01)
    g = hypersparse_grad(w, ctx)
    assert abs(g[-1]) < 1e-7
    assert abs(g[0]) > 1e5 * abs(g[-1])


def test_all_zero_is_degenerate():
    with pytest.raises(DegenerateDistributionError):
        HyperSparseContext.from_weights(np.zeros(5), 0.5)
    with pytest.raises(DegenerateDistributionError):
        reg_grad("hypersparse", np.zeros(5), 0.5)


def test_value_is_zero_examples():
    for w in (np.array([0.5]), np.array([0.3, -0.3, 0.3]), np.random.default_rng(0).normal(size=500)):
        ctx = HyperSparseContext.from_weights(w, 0.5)
        assert abs(hypersparse_value(w, ctx)) <= 1e-6 * np.abs(w).sum()


@settings(max_examples=100, deadline=None)
@given(weights, st.floats(0, 0.99))
def test_value_identity_property(w, kappa):
    ctx = HyperSparseContext.from_weights(w, kappa)
    assert abs(hypersparse_value(w, ctx)) <= 1e-6 * np.abs(w).sum()


@settings(max_examples=100, deadline=None)
@given(weights, st.floats(0, 0.99))
def test_sign_preservation_and_bounds(w, kappa):
    ctx = HyperSparseContext.from_weights(w, kappa)
    g = hypersparse_grad(w, ctx)
    assert np.all(g * w >= 0)
    bound = ctx.s * ctx.sum_abs / ctx.sum_t
    assert np.all(np.abs(g) <= bound * (1 + 1e-12))


@settings(max_examples=100, deadline=None)
@given(weights, st.floats(0, 0.99))
def test_adaptivity_ordering(w, kappa):
    ctx = HyperSparseContext.from_weights(w, kappa)
    g = np.abs(hypersparse_grad(w, ctx))
    order = np.argsort(np.abs(w), kind="stable")
    assert np.all(np.diff(g[order]) <= 1e-15 * g.max())


def test_small_weights_pushed_harder():
    w = np.array([0.5, 0.5, 0.01, -0.01])
    g = reg_grad(RegKind.HYPERSPARSE, w, 0.5)
    assert kappa_threshold(w, 0.5) == 0.5
    assert min(abs(g[2]), abs(g[3])) > max(abs(g[0]), abs(g[1]))
    assert g[3] < 0 < g[2]


def test_l1_l2_gradients():
    w = np.array([0.5, -0.2, 0.0])
    np.testing.assert_array_equal(reg_grad("l1", w, 0.5), [1.0, -1.0, 0.0])
    np.testing.assert_array_equal(reg_grad("l2", w, 0.5), w)
    with pytest.raises(ContractError):
        reg_grad("l3", w, 0.5)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_frozen_finite_differences(seed):
    w, kappa = random_instance(np.random.default_rng(seed))
    assert w.size >= 64
    g = hypersparse_grad(w, HyperSparseContext.from_weights(w, kappa))
    fd = frozen_loss_fd(w, kappa)
    np.testing.assert_allclose(g, fd, rtol=1e-4)


def test_fd_oracle_against_naive_loop():
    # the vectorized oracle agrees with perturbing one coordinate at a time
    rng = np.random.default_rng(3)
    w = rng.normal(0, 0.05, 64)
    kappa = 0.8
    mags = np.abs(w)
    s = INFLECTION_X / np.sort(mags)[int(kappa * 64)]
    A = np.tanh(s * mags).sum()
    loss = lambda v: np.abs(v).sum() * np.tanh(s * np.abs(v)).sum() / A - np.abs(v).sum()
    naive = []
    for i in range(64):
        e = np.zeros(64)
        e[i] = 1e-6
        naive.append((loss(w + e) - loss(w - e)) / 2e-6)
    np.testing.assert_allclose(frozen_loss_fd(w, kappa), naive, rtol=1e-5, atol=1e-8)
