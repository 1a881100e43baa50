"""Joint estimation of latent positions, sociability and covariate coefficients.

Each outer iteration takes one optimizer step on (Z, alpha), re-centres
both, and refits every covariate column by a ridge-guarded logistic
regression on the current latent positions.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.special import expit

from .core import (
    CovariateMatrix,
    Hyperparams,
    LatentState,
    Network,
    center_alpha,
    center_columns,
    diagonalize_covariance,
)
from .exceptions import NonFiniteLoss, NotConverged, SingularHessian
from .objective import LossBreakdown, loss_and_gradients
from .optim import OptimizerState, apply_step, cosine_anneal, step_sizes

logger = logging.getLogger(__name__)

INNER_RIDGE = 1e-6
_NEWTON_MAX_ITER = 25
_NEWTON_TOL = 1e-8
_FALLBACK_STEPS = 50


def _design(Z):
    Z = np.asarray(Z, dtype=float)
    return np.hstack([np.ones((Z.shape[0], 1)), Z])


def _penalized_nll(X, Y, W, ridge):
    theta = X @ W
    nll = np.maximum(theta, 0) + np.log1p(np.exp(-np.abs(theta))) - Y * theta
    return nll.sum(axis=0) + 0.5 * ridge * np.sum(W * W, axis=0)


def _gradient_fallback(X, y, w, ridge, steps=_FALLBACK_STEPS):
    # 1/L step for the ridge-penalised logistic loss
    lip = 0.25 * np.linalg.eigvalsh(X.T @ X)[-1] + ridge
    for _ in range(steps):
        w = w - (X.T @ (expit(X @ w) - y) + ridge * w) / lip
    return w


def fit_logistic_columns(Z, Y, ridge: float = INNER_RIDGE, init=None,
                         max_iter: int = _NEWTON_MAX_ITER, tol: float = _NEWTON_TOL):
    """Ridge-guarded logistic regression of every column of ``Y`` on ``Z``.

    All columns are solved together by damped Newton steps. The penalty is
    ``ridge * ||(gamma_j, beta_j)||^2 / 2`` on the summed log-likelihood.

    Parameters
    ----------
    Z : (n, k) array
    Y : (n, q) binary array
    init : optional pair ``(gamma, beta)`` used as a warm start

    Returns
    -------
    gamma : (q,) array
    beta : (k, q) array
    """
    X = _design(Z)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, d = X.shape
    q = Y.shape[1]
    if q == 0:
        return np.zeros(0), np.zeros((d - 1, 0))
    if init is None:
        W = np.zeros((d, q))
    else:
        W = np.vstack([np.ravel(init[0])[None, :], np.asarray(init[1], dtype=float).reshape(d - 1, q)])
    eye = np.eye(d)
    outer = (X[:, :, None] * X[:, None, :]).reshape(n, d * d)
    active = np.ones(q, dtype=bool)
    obj = _penalized_nll(X, Y, W, ridge)
    for _ in range(max_iter):
        P = expit(X @ W[:, active])
        G = X.T @ (P - Y[:, active]) + ridge * W[:, active]
        done = np.sqrt(np.sum(G * G, axis=0)) <= tol
        if done.all():
            active[:] = False
            break
        cols = np.flatnonzero(active)
        H = ((P * (1 - P)).T @ outer).reshape(-1, d, d) + ridge * eye
        try:
            step = np.linalg.solve(H, G.T[:, :, None])[:, :, 0].T
        except np.linalg.LinAlgError:
            return _singular_fallback(X, Y, W, ridge)
        W_new = W.copy()
        W_new[:, cols] -= step
        new_obj = _penalized_nll(X, Y[:, cols], W_new[:, cols], ridge)
        shrink = 1.0
        worse = new_obj > obj[cols] + 1e-12 * np.abs(obj[cols])
        while worse.any() and shrink > 1e-10:
            shrink *= 0.5
            bad = cols[worse]
            W_new[:, bad] = W[:, bad] - shrink * step[:, worse]
            new_obj[worse] = _penalized_nll(X, Y[:, bad], W_new[:, bad], ridge)
            worse = new_obj > obj[cols] + 1e-12 * np.abs(obj[cols])
        W, obj[cols] = W_new, new_obj
        still = np.zeros(q, dtype=bool)
        still[cols[~done]] = True
        active = still
        if not active.any():
            break
    return W[0].copy(), W[1:].copy()


def _singular_fallback(X, Y, W, ridge):
    d = X.shape[1]
    eye = np.eye(d)
    for j in range(Y.shape[1]):
        w = W[:, j]
        for _ in range(_NEWTON_MAX_ITER):
            p = expit(X @ w)
            g = X.T @ (p - Y[:, j]) + ridge * w
            if np.linalg.norm(g) <= _NEWTON_TOL:
                break
            H = X.T @ (X * (p * (1 - p))[:, None]) + ridge * eye
            try:
                w = w - np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                warnings.warn(f"singular Hessian in column {j}; using gradient steps",
                              NotConverged, stacklevel=3)
                w = _gradient_fallback(X, Y[:, j], w, ridge)
                break
        W[:, j] = w
    return W[0].copy(), W[1:].copy()


def inner_logistic_fit(Z, y, ridge: float = INNER_RIDGE, init=None):
    """Fit one covariate column; returns ``(gamma_j, beta_j)``.

    Raises :class:`SingularHessian` only when ``ridge`` is zero and the
    gradient-step fallback produces non-finite coefficients.
    """
    gamma, beta = fit_logistic_columns(
        Z, np.asarray(y, dtype=float).reshape(-1, 1), ridge,
        None if init is None else (np.atleast_1d(init[0]), np.reshape(init[1], (-1, 1))))
    if not (np.isfinite(gamma).all() and np.isfinite(beta).all()):
        raise SingularHessian("logistic fit produced non-finite coefficients")
    return float(gamma[0]), beta[:, 0]


@dataclass
class FitResult:
    """Outcome of :func:`fit_joint`.

    ``best_iteration`` is a 0-based index into ``trace``.
    """

    state: LatentState
    trace: List[LossBreakdown] = field(default_factory=list)
    iterations_run: int = 0
    stopped_early: bool = False
    best_iteration: int = 0

    @property
    def best_loss(self) -> LossBreakdown:
        return self.trace[self.best_iteration]

    def trace_array(self) -> np.ndarray:
        """(iterations, 4) array of loss_A, loss_Y, joint, per_param."""
        return np.array([[b.loss_A, b.loss_Y, b.joint, b.per_param] for b in self.trace])


def initialize(net: Network, cov: CovariateMatrix, k: int, seed: int = 0) -> LatentState:
    """Random start: Z ~ N(0, 1), alpha ~ U(-1, 1), both centred, then
    per-column logistic fits of Y on Z."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    Z = center_columns(rng.standard_normal((net.n, k)))
    alpha = center_alpha(rng.uniform(-1.0, 1.0, net.n))
    gamma, beta = fit_logistic_columns(Z, cov.values)
    return LatentState(Z, alpha, beta, gamma)


def fit_joint(net: Network, cov: CovariateMatrix, hyper: Hyperparams = Hyperparams(),
              init: Optional[LatentState] = None, k: int = 2,
              callback: Optional[Callable[[int, LossBreakdown], None]] = None) -> FitResult:
    """Run the joint estimator for at most ``hyper.max_iters`` iterations.

    The returned state is the iterate with the smallest per-parameter loss,
    rotated so that (1/n) Z'Z is diagonal. ``callback(t, losses)`` is called
    after every iteration.

    Raises
    ------
    NonFiniteLoss
        If the loss diverges; ``iteration`` records where.
    """
    n, q = net.n, cov.q
    if init is None:
        state = initialize(net, cov, k, hyper.seed)
    else:
        init.check_compatible(n, q)
        state = init
    weight = hyper.lambda_weight
    T = hyper.max_iters
    opt = OptimizerState.fresh(hyper.optimizer_kind, n, state.k)
    watch_Y = q > 0 and weight > 0
    n_pairs = n * (n - 1) / 2

    trace: List[LossBreakdown] = []
    best_state, best_idx, best_score = state, 0, np.inf
    prev = None
    stable = 0
    stopped = False
    _, grads = loss_and_gradients(net, cov, state, weight)
    for t in range(1, T + 1):
        sizes = step_sizes(cosine_anneal(hyper.eta0, t, T), state.Z, n)
        state, opt = apply_step(state, grads, opt, sizes)
        Z = center_columns(state.Z)
        alpha = center_alpha(state.alpha)
        if not (np.isfinite(Z).all() and np.isfinite(alpha).all()):
            raise NonFiniteLoss(f"parameters diverged at iteration {t}", iteration=t)
        gamma, beta = fit_logistic_columns(Z, cov.values, init=(state.gamma, state.beta))
        state = LatentState(Z, alpha, beta, gamma)

        losses, grads = loss_and_gradients(net, cov, state, weight)
        if not np.isfinite(losses.joint):
            raise NonFiniteLoss(f"non-finite loss at iteration {t}", iteration=t)
        trace.append(losses)
        if callback is not None:
            callback(t, losses)
        if losses.per_param < best_score:
            best_state, best_idx, best_score = state, t - 1, losses.per_param

        means = (losses.loss_A / n_pairs, losses.loss_Y / (n * q) if q else 0.0)
        if prev is not None:
            calm = abs(means[0] - prev[0]) <= hyper.stop_tol
            if watch_Y:
                calm = calm and abs(means[1] - prev[1]) <= hyper.stop_tol
            stable = stable + 1 if calm else 0
        prev = means
        if stable >= hyper.stop_patience:
            stopped = True
            logger.debug("early stop at iteration %d", t)
            break

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        Z, beta, _ = diagonalize_covariance(best_state.Z, best_state.beta)
    final = LatentState(Z, best_state.alpha, beta, best_state.gamma)
    return FitResult(state=final, trace=trace, iterations_run=len(trace),
                     stopped_early=stopped, best_iteration=best_idx)


def posthoc_covariate_fit(state: LatentState, cov: CovariateMatrix) -> LatentState:
    """Refit (beta, gamma) for ``cov`` on fixed latent positions."""
    gamma, beta = fit_logistic_columns(state.Z, cov.values)
    return LatentState(state.Z, state.alpha, beta, gamma)
