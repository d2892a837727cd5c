import math

import numpy as np
import pytest
from scipy import stats

from core.parameters import ParameterStore
from modules.optim.adamw import AdamW, AdamWState, decays
from modules.optim.sampler import epoch_rng, oversample_indices, shuffled_indices
from modules.optim.schedules import cosine_lr, scaled_lr


def test_adamw_single_step_oracle():
    store = ParameterStore()
    w = store.add("w", np.array([[1.0, -2.0], [0.5, 3.0]]))
    b = store.add("b", np.array([0.2, -0.4]))
    w.grad[...] = [[0.1, -0.3], [0.0, 2.0]]
    b.grad[...] = [1.0, -1.0]
    lr, wd, b1, b2, eps = 0.01, 0.05, 0.9, 0.95, 1e-8

    def expected(p, g, decay):
        p = p * (1 - lr * wd) if decay else p.copy()
        m = (1 - b1) * g / (1 - b1)
        v = (1 - b2) * g * g / (1 - b2)
        return p - lr * m / (np.sqrt(v) + eps)

    want_w = expected(w.data.copy(), w.grad.copy(), True)
    want_b = expected(b.data.copy(), b.grad.copy(), False)
    opt = AdamW(store, betas=(b1, b2), eps=eps, weight_decay=wd)
    opt.step(lr)
    np.testing.assert_allclose(w.data, want_w, rtol=1e-12)
    np.testing.assert_allclose(b.data, want_b, rtol=1e-12)
    assert opt.state.step == 1


def test_adamw_second_step_uses_moments():
    store = ParameterStore()
    p = store.add("p", np.array([1.0]))
    opt = AdamW(store, weight_decay=0.0)
    p.grad[...] = 1.0
    opt.step(0.1)
    p.grad[...] = -1.0
    opt.step(0.1)
    m = 0.9 * 0.1 - 0.1
    v = 0.95 * 0.05 + 0.05
    step = 0.1 * (m / (1 - 0.81)) / (math.sqrt(v / (1 - 0.95 ** 2)) + 1e-8)
    first = 0.1 / (1.0 + 1e-8)
    assert p.data[0] == pytest.approx(1.0 - first - step, rel=1e-10)


def test_frozen_parameters_untouched():
    store = ParameterStore()
    frozen = store.add("frozen", np.ones((2, 2)), tunable=False)
    store.add("tuned", np.ones((2, 2)))
    frozen.grad = np.ones((2, 2))
    store["tuned"].grad[...] = 1.0
    AdamW(store).step(0.1)
    np.testing.assert_array_equal(frozen.data, np.ones((2, 2)))
    assert not np.array_equal(store["tuned"].data, np.ones((2, 2)))


def test_decay_applies_to_matrices_only():
    assert decays("w", np.zeros((2, 2)))
    assert not decays("b", np.zeros(2))
    assert not decays("lam", np.array(1.0))


def test_state_dict_round_trip():
    store = ParameterStore()
    store.add("p", np.ones(3))
    store["p"].grad[...] = 0.5
    opt = AdamW(store)
    opt.step(0.01)
    restored = AdamWState.from_state_dict(opt.state.state_dict())
    assert restored.step == 1
    np.testing.assert_array_equal(restored.exp_avg["p"], opt.state.exp_avg["p"])
    np.testing.assert_array_equal(restored.exp_avg_sq["p"], opt.state.exp_avg_sq["p"])


@pytest.mark.parametrize(
    "step, expected",
    [(0, 1.0), (50, 0.5), (100, 0.0), (25, 0.5 * (1 + math.cos(math.pi / 4)))],
)
def test_cosine_schedule(step, expected):
    assert cosine_lr(step, 100, 1.0) == pytest.approx(expected)


def test_scaled_lr():
    assert scaled_lr(1e-3, 16) == pytest.approx(2e-3)
    assert scaled_lr(1e-3, 8) == pytest.approx(1e-3)


def test_epoch_rng_is_reproducible():
    a = shuffled_indices(20, epoch_rng(3, 7))
    b = shuffled_indices(20, epoch_rng(3, 7))
    c = shuffled_indices(20, epoch_rng(3, 8))
    np.testing.assert_array_equal(a, b)
    assert sorted(a.tolist()) == list(range(20))
    assert not np.array_equal(a, c)


def test_oversampling_balances_classes():
    labels = [0] * 90 + [1] * 10
    drawn = oversample_indices(labels, np.random.default_rng(0), length=10000)
    counts = np.bincount(np.asarray(labels)[drawn], minlength=2)
    assert stats.chisquare(counts).pvalue > 0.01


def test_oversampling_is_deterministic():
    labels = [0, 0, 0, 1, 2, 2]
    np.testing.assert_array_equal(oversample_indices(labels, 5), oversample_indices(labels, 5))
    assert len(oversample_indices(labels, 5)) == 6
