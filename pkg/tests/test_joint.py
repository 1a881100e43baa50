import numpy as np
import pytest
from scipy.optimize import brentq, minimize
from sklearn.linear_model import LogisticRegression

from lsmselect.core import CovariateMatrix, Hyperparams, LatentState, Network
from lsmselect.exceptions import SingularHessian
from lsmselect.joint import (
    INNER_RIDGE,
    fit_joint,
    fit_logistic_columns,
    initialize,
    inner_logistic_fit,
    posthoc_covariate_fit,
)
from lsmselect.objective import joint_loss
from lsmselect.simulate import SimConfig, generate

FAST = dict(max_iters=150, stop_patience=50)


@pytest.fixture(scope="module")
def sim():
    return generate(SimConfig(n=40, q=3, seed=5))


def test_logistic_fit_matches_sklearn(rng):
    Z = rng.standard_normal((200, 2))
    y = (rng.uniform(size=200) < 1 / (1 + np.exp(-(0.3 + Z @ [1.0, -0.5])))).astype(float)
    gamma, beta = inner_logistic_fit(Z, y)
    ref = LogisticRegression(C=1 / INNER_RIDGE, tol=1e-12, max_iter=10000).fit(Z, y)
    assert gamma == pytest.approx(ref.intercept_[0], abs=1e-4)
    np.testing.assert_allclose(beta, ref.coef_[0], atol=1e-4)


def test_logistic_fit_matches_direct_minimiser(rng):
    Z = rng.standard_normal((60, 2))
    Y = (rng.uniform(size=(60, 3)) < 0.4).astype(float)
    ridge = 0.5
    gamma, beta = fit_logistic_columns(Z, Y, ridge=ridge)
    X = np.hstack([np.ones((60, 1)), Z])
    for j in range(3):
        def f(w):
            th = X @ w
            return np.sum(np.logaddexp(0, th) - Y[:, j] * th) + 0.5 * ridge * w @ w
        w = minimize(f, np.zeros(3), method="BFGS", options={"gtol": 1e-10}).x
        assert gamma[j] == pytest.approx(w[0], abs=1e-6)
        np.testing.assert_allclose(beta[:, j], w[1:], atol=1e-6)


def test_logistic_fit_is_bounded_under_separation():
    Z = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    gamma, beta = inner_logistic_fit(Z, y)
    assert np.isfinite(gamma) and np.all(np.isfinite(beta))
    assert beta[0] > 0


def test_inner_fit_with_zero_ridge_on_separable_data():
    Z = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    try:
        gamma, beta = inner_logistic_fit(Z, y, ridge=0.0)
    except SingularHessian:
        return
    assert np.isfinite(gamma)


def test_initialize_is_centred_and_seeded(sim):
    net, cov, _ = sim
    s1 = initialize(net, cov, 2, seed=3)
    s2 = initialize(net, cov, 2, seed=3)
    np.testing.assert_array_equal(s1.Z, s2.Z)
    np.testing.assert_allclose(s1.Z.mean(axis=0), 0, atol=1e-12)
    assert abs(s1.alpha.sum()) < 1e-12
    with pytest.raises(ValueError):
        initialize(net, cov, 0)


def test_fit_joint_invariants(sim):
    net, cov, _ = sim
    res = fit_joint(net, cov, Hyperparams(**FAST, seed=1), k=2)
    s = res.state
    np.testing.assert_allclose(s.Z.mean(axis=0), 0, atol=1e-10)
    assert abs(s.alpha.sum()) < 1e-10
    S = s.Z.T @ s.Z / s.n
    assert abs(S[0, 1]) < 1e-10
    assert res.iterations_run == len(res.trace) <= 150
    best = min(range(len(res.trace)), key=lambda i: res.trace[i].per_param)
    assert res.best_iteration == best
    # rotation leaves the loss unchanged
    assert joint_loss(net, cov, s, 0.1).per_param == pytest.approx(res.best_loss.per_param, rel=1e-9)


def test_fit_joint_decreases_loss(sim):
    net, cov, _ = sim
    hyper = Hyperparams(**FAST, seed=2)
    start = joint_loss(net, cov, initialize(net, cov, 2, seed=2), 0.1).per_param
    res = fit_joint(net, cov, hyper, k=2)
    assert res.best_loss.per_param < start


def test_fit_joint_is_deterministic(sim):
    net, cov, _ = sim
    a = fit_joint(net, cov, Hyperparams(**FAST, seed=4), k=2)
    b = fit_joint(net, cov, Hyperparams(**FAST, seed=4), k=2)
    np.testing.assert_array_equal(a.state.Z, b.state.Z)
    np.testing.assert_array_equal(a.trace_array(), b.trace_array())


def test_zero_weight_ignores_covariates(sim):
    net, cov, _ = sim
    hyper = Hyperparams(**FAST, lambda_weight=0.0, seed=6)
    init = initialize(net, CovariateMatrix(np.zeros((net.n, 0))), 2, seed=6)
    other = CovariateMatrix(1.0 - cov.values)
    a = fit_joint(net, cov, hyper, init=posthoc_covariate_fit(init, cov))
    b = fit_joint(net, other, hyper, init=posthoc_covariate_fit(init, other))
    np.testing.assert_allclose(a.state.Z, b.state.Z, atol=1e-12)
    np.testing.assert_allclose(a.state.alpha, b.state.alpha, atol=1e-12)


def test_early_stop_exits_after_patience(sim):
    net, cov, _ = sim
    res = fit_joint(net, cov, Hyperparams(max_iters=100, stop_tol=1e9, stop_patience=5), k=2)
    assert res.stopped_early
    assert res.iterations_run == 6


def test_adagrad_runs(sim):
    net, cov, _ = sim
    res = fit_joint(net, cov, Hyperparams(**FAST, optimizer_kind="adagrad"), k=2)
    assert np.isfinite(res.best_loss.joint)


def test_callback_sees_every_iteration(sim):
    net, cov, _ = sim
    seen = []
    res = fit_joint(net, cov, Hyperparams(max_iters=20), k=2, callback=lambda t, l: seen.append(t))
    assert seen == list(range(1, res.iterations_run + 1))


def test_network_without_covariates():
    net, _, _ = generate(SimConfig(n=30, q=2, seed=1))
    res = fit_joint(net, CovariateMatrix(np.zeros((30, 0))), Hyperparams(max_iters=50), k=2)
    assert res.state.q == 0
    assert res.best_loss.loss_Y == 0.0


def test_posthoc_fit_keeps_positions(sim):
    net, cov, truth = sim
    s = posthoc_covariate_fit(truth.state(), cov)
    np.testing.assert_array_equal(s.Z, truth.Z_true)
    assert s.beta.shape == (2, cov.q)


def test_all_ones_column_gives_bounded_intercept():
    net, cov, _ = generate(SimConfig(n=200, q=2, seed=0))
    Y = cov.values.copy()
    Y[:, 0] = 1.0
    s = initialize(net, CovariateMatrix(Y), 2, seed=0)
    # the ridge caps gamma at the root of n / (1 + e^g) = ridge * g, about 16.3 for n = 200
    root = brentq(lambda g: 200 / (1 + np.exp(g)) - INNER_RIDGE * g, 1.0, 50.0)
    assert np.isfinite(s.gamma[0])
    assert s.gamma[0] == pytest.approx(root, abs=1e-3)
    np.testing.assert_allclose(s.beta[:, 0], 0, atol=1e-3)


def test_logistic_recovers_known_coefficients():
    rng = np.random.default_rng(2024)
    n = 200
    Z = rng.standard_normal((n, 2))
    w = np.array([0.5, 1.0, -1.0])
    X = np.hstack([np.ones((n, 1)), Z])
    y = (rng.uniform(size=n) < 1 / (1 + np.exp(-X @ w))).astype(float)
    gamma, beta = inner_logistic_fit(Z, y)
    est = np.r_[gamma, beta]
    p = 1 / (1 + np.exp(-X @ est))
    se = np.sqrt(np.diag(np.linalg.inv(X.T @ (X * (p * (1 - p))[:, None]))))
    assert np.all(np.abs(est - w) <= 2 * se)
