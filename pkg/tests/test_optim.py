import math

import numpy as np
import pytest

from lsmselect.core import LatentState
from lsmselect.objective import Gradients
from lsmselect.optim import OptimizerState, StepSizes, apply_step, cosine_anneal, step_sizes


def _half_angle(eta0, t, T):
    # independent form: 0.5 (1 + cos x) = cos^2(x / 2)
    return eta0 * math.cos(math.pi * t / (2 * T)) ** 2


def test_cosine_anneal_frozen_values():
    assert cosine_anneal(5.0, 0, 2000) == 5.0
    assert cosine_anneal(5.0, 1000, 2000) == pytest.approx(2.5, abs=1e-15)
    assert cosine_anneal(5.0, 2000, 2000) == pytest.approx(0.0, abs=1e-15)
    assert cosine_anneal(5.0, 1, 2000) == pytest.approx(4.999996915749, rel=1e-12)
    assert cosine_anneal(5.0, 500, 2000) == pytest.approx(4.267766952966, rel=1e-12)
    for t in (3, 250, 1333, 1999):
        assert cosine_anneal(5.0, t, 2000) == pytest.approx(_half_angle(5.0, t, 2000), rel=1e-12)


def test_cosine_anneal_is_monotone_and_floored():
    vals = [cosine_anneal(1.0, t, 50, eta_min=0.1) for t in range(51)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        cosine_anneal(1.0, 51, 50)
    with pytest.raises(ValueError):
        cosine_anneal(1.0, 0, 0)


def test_step_sizes():
    Z = np.ones((4, 2))
    s = step_sizes(2.0, Z, 4)
    assert s.eta_Z == pytest.approx(2.0 / 8)
    assert s.eta_alpha == pytest.approx(2.0 / 8)
    assert step_sizes(2.0, np.zeros((4, 2)), 4).eta_Z == 2.0
    with pytest.raises(ValueError):
        step_sizes(-1.0, Z, 4)


def _state(Z, alpha):
    return LatentState(np.asarray(Z, float), np.asarray(alpha, float), np.zeros((np.shape(Z)[1], 1)),
                       np.zeros(1))


def _grads(dZ, dA):
    return Gradients(np.asarray(dZ, float), np.asarray(dA, float), np.zeros((1, 1)), np.zeros(1))


def test_adam_first_step_is_signed_rate():
    # bias correction makes the first ADAM step eta * g / (|g| + eps)
    s = _state([[1.0], [2.0]], [0.5, -0.5])
    g = _grads([[3.0], [-0.2]], [1e-3, -4.0])
    opt = OptimizerState.fresh("adam", 2, 1)
    new, opt2 = apply_step(s, g, opt, StepSizes(1.0, 0.1, 0.01))
    expect_Z = np.array([[1.0], [2.0]]) - 0.1 * np.array([[3.0], [-0.2]]) / (np.abs([[3.0], [-0.2]]) + 1e-8)
    expect_a = np.array([0.5, -0.5]) - 0.01 * np.array([1e-3, -4.0]) / (np.abs([1e-3, -4.0]) + 1e-8)
    np.testing.assert_allclose(new.Z, expect_Z, rtol=1e-12)
    np.testing.assert_allclose(new.alpha, expect_a, rtol=1e-12)
    assert opt2.step_count == 1
    np.testing.assert_array_equal(s.Z, [[1.0], [2.0]])


def test_adam_second_step_oracle():
    b1, b2, eps, eta = 0.9, 0.999, 1e-8, 0.05
    g1, g2 = 2.0, -1.0
    m = (1 - b1) * g1
    v = (1 - b2) * g1 ** 2
    x = 1.0 - eta * (m / (1 - b1)) / (math.sqrt(v / (1 - b2)) + eps)
    m = b1 * m + (1 - b1) * g2
    v = b2 * v + (1 - b2) * g2 ** 2
    x = x - eta * (m / (1 - b1 ** 2)) / (math.sqrt(v / (1 - b2 ** 2)) + eps)

    s = _state([[1.0]], [0.0])
    opt = OptimizerState.fresh("adam", 1, 1)
    sizes = StepSizes(1.0, eta, eta)
    s, opt = apply_step(s, _grads([[g1]], [0.0]), opt, sizes)
    s, opt = apply_step(s, _grads([[g2]], [0.0]), opt, sizes)
    assert s.Z[0, 0] == pytest.approx(x, rel=1e-12)


def test_adagrad_minimises_quadratic():
    # f(x) = 0.5 * ||x - c||^2 with gradient x - c
    c = np.array([[3.0], [-2.0]])
    s = _state([[0.0], [0.0]], [0.0, 0.0])
    opt = OptimizerState.fresh("adagrad", 2, 1)
    sizes = StepSizes(1.0, 1.0, 1.0)
    for _ in range(2000):
        s, opt = apply_step(s, _grads(s.Z - c, np.zeros(2)), opt, sizes)
    np.testing.assert_allclose(s.Z, c, atol=1e-3)
    assert opt.step_count == 2000


def test_adagrad_first_step_oracle():
    s = _state([[1.0]], [1.0])
    opt = OptimizerState.fresh("adagrad", 1, 1)
    sizes = StepSizes(1.0, 0.5, 0.25)
    new, opt = apply_step(s, _grads([[4.0]], [-2.0]), opt, sizes)
    assert new.Z[0, 0] == pytest.approx(1.0 - 0.5 * 4.0 / (4.0 + 1e-8))
    assert new.alpha[0] == pytest.approx(1.0 + 0.25 * 2.0 / (2.0 + 1e-8))
    np.testing.assert_allclose(opt.accumulator[0], [[16.0]])


def test_fresh_rejects_unknown_kind():
    with pytest.raises(ValueError):
        OptimizerState.fresh("sgd", 2, 2)


def test_adagrad_decreases_scalar_quadratic_monotonically():
    s = _state([[4.0]], [0.0])
    opt = OptimizerState.fresh("adagrad", 1, 1)
    sizes = StepSizes(0.5, 0.5, 0.5)
    losses = []
    for _ in range(100):
        losses.append(0.5 * (s.Z[0, 0] - 1.0) ** 2)
        s, opt = apply_step(s, _grads(s.Z - 1.0, [0.0]), opt, sizes)
    assert all(b < a for a, b in zip(losses, losses[1:]))
