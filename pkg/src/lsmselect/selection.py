"""Column-wise group lasso on estimated latent positions, with an optional
ridge stabiliser for noisy positions, followed by a joint refit.

Each covariate column is one group of the k coefficients tying it to the
latent space. The per-column objective is::

    (1/n) * logistic_nll(gamma, beta) + lam * sqrt(k) * ||beta||
                                      + delta * sqrt(k) * ||beta||^2 / 2

with the intercept left unpenalised.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.special import expit, logit

from .core import ActiveSet, CovariateMatrix, Hyperparams, LatentState, Network
from .exceptions import AllEmpty, NotConverged
from .joint import INNER_RIDGE, FitResult, fit_joint, fit_logistic_columns

logger = logging.getLogger(__name__)

PG_TOL = 1e-9
PG_MAX_ITER = 5000
# logit clip for all-0 / all-1 columns
_DEGENERATE_LOGIT = float(logit(1 - 1e-8))


def prox_group(v, threshold: float, ridge_scale: float) -> np.ndarray:
    """Proximal map of ``threshold * ||x|| + ridge_scale * ||x||^2 / 2``."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= threshold:
        return np.zeros_like(v)
    return v * (1.0 - threshold / norm) / (1.0 + ridge_scale)


def _prox_columns(V, threshold, ridge_scale):
    # column-wise prox_group; threshold and ridge_scale are (q,) arrays
    norms = np.linalg.norm(V, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > threshold, (1.0 - threshold / norms) / (1.0 + ridge_scale), 0.0)
    return V * factor


def _smooth(X, Y, W):
    theta = X @ W
    nll = np.maximum(theta, 0) + np.log1p(np.exp(-np.abs(theta))) - Y * theta
    return nll.mean(axis=0)


def _smooth_grad(X, Y, W):
    return X.T @ (expit(X @ W) - Y) / X.shape[0]


def group_lasso_columns(Z, Y, lam: float, delta: float = 0.0, init=None,
                        tol: float = PG_TOL, max_iter: int = PG_MAX_ITER):
    """Solve the penalised logistic problem for every column of ``Y``.

    Proximal gradient with per-column backtracking; columns converge
    independently once an iterate moves by less than ``tol``.

    Returns
    -------
    gamma : (q,) array
    beta : (k, q) array
    converged : (q,) bool array
    """
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if lam < 0 or delta < 0:
        raise ValueError("lam and delta must be >= 0")
    n, k = Z.shape
    q = Y.shape[1]
    X = np.hstack([np.ones((n, 1)), Z])
    W = np.zeros((k + 1, q))
    if init is not None:
        W[0] = np.ravel(init[0])
        W[1:] = np.asarray(init[1], dtype=float).reshape(k, q)
    converged = np.ones(q, dtype=bool)
    if q == 0:
        return W[0], W[1:], converged

    means = Y.mean(axis=0)
    degenerate = (means == 0) | (means == 1)
    W[:, degenerate] = 0.0
    W[0, degenerate] = np.where(means[degenerate] == 1, _DEGENERATE_LOGIT, -_DEGENERATE_LOGIT)

    pen = lam * np.sqrt(k)
    ridge = delta * np.sqrt(k)
    lip = 0.25 * np.linalg.eigvalsh(X.T @ X / n)[-1]
    step = np.full(q, 1.0 / lip)
    min_step = 1e-10 / lip
    active = ~degenerate
    f = np.zeros(q)
    G = np.zeros_like(W)
    cols = np.flatnonzero(active)
    f[cols] = _smooth(X, Y[:, cols], W[:, cols])
    G[:, cols] = _smooth_grad(X, Y[:, cols], W[:, cols])

    for _ in range(max_iter):
        cols = np.flatnonzero(active)
        if cols.size == 0:
            break
        Wc = np.empty((k + 1, cols.size))
        fc = np.empty(cols.size)
        pending = np.arange(cols.size)
        while pending.size:
            c = cols[pending]
            s = step[c]
            V = W[:, c] - s * G[:, c]
            V[1:] = _prox_columns(V[1:], s * pen, s * ridge)
            Wc[:, pending] = V
            fc[pending] = _smooth(X, Y[:, c], V)
            D = V - W[:, c]
            bound = f[c] + np.sum(G[:, c] * D, axis=0) + np.sum(D * D, axis=0) / (2 * s)
            # slack absorbs rounding in the mean log-loss; tiny steps are accepted as is
            ok = (fc[pending] <= bound + 1e-14 * (1.0 + np.abs(bound))) | (s < min_step)
            step[c[~ok]] *= 0.5
            pending = pending[~ok]
        change = np.linalg.norm(Wc - W[:, cols], axis=0)
        W[:, cols] = Wc
        f[cols] = fc
        G[:, cols] = _smooth_grad(X, Y[:, cols], Wc)
        active[cols[change < tol]] = False
    else:
        converged[active] = False

    if not converged.all():
        warnings.warn(f"group lasso did not converge for columns {np.flatnonzero(~converged).tolist()}",
                      NotConverged, stacklevel=2)
    return W[0].copy(), W[1:].copy(), converged


def group_lasso_column(Zhat, y, lam: float, delta: float = 0.0, init=None):
    """Single-column version of :func:`group_lasso_columns`.

    ``init`` is a length-(k+1) vector ``(gamma, beta_1..beta_k)``.
    Returns ``(gamma_j, beta_j)``.
    """
    k = np.asarray(Zhat).shape[1]
    if init is not None:
        init = np.asarray(init, dtype=float)
        init = (init[:1], init[1:].reshape(k, 1))
    gamma, beta, _ = group_lasso_columns(Zhat, np.reshape(y, (-1, 1)), lam, delta, init)
    return float(gamma[0]), beta[:, 0]


def penalized_objective(Z, y, gamma, beta, lam, delta=0.0) -> float:
    """Value of the per-column objective minimised by :func:`group_lasso_column`."""
    Z = np.asarray(Z, dtype=float)
    k = Z.shape[1]
    theta = gamma + Z @ np.asarray(beta, dtype=float)
    y = np.asarray(y, dtype=float)
    nll = np.mean(np.maximum(theta, 0) + np.log1p(np.exp(-np.abs(theta))) - y * theta)
    b = np.linalg.norm(beta)
    return float(nll + lam * np.sqrt(k) * b + delta * np.sqrt(k) * b * b / 2)


def _column_nll(Z, Y, gamma, beta):
    theta = gamma[None, :] + Z @ beta
    return float(np.sum(np.maximum(theta, 0) + np.log1p(np.exp(-np.abs(theta))) - Y * theta))


@dataclass(frozen=True)
class LassoPathEntry:
    lam: float
    gamma: np.ndarray
    beta: np.ndarray
    mean_logloss_Y: float
    aic: float
    n_selected: int
    converged: bool = True

    def active(self, tau: float) -> ActiveSet:
        return ActiveSet.from_norms(np.linalg.norm(self.beta, axis=0), tau)


def _support_nll(Z, Y, support, init):
    # log-likelihood of the model restricted to ``support``: ridge-guarded
    # logistic fits on the kept columns, intercept-only fits elsewhere
    q = Y.shape[1]
    rest = np.setdiff1d(np.arange(q), support)
    p = np.clip(Y[:, rest].mean(axis=0), 1e-12, 1 - 1e-12)
    n = Y.shape[0]
    loss = float(-n * np.sum(p * np.log(p) + (1 - p) * np.log1p(-p)))
    if len(support):
        gamma, beta = fit_logistic_columns(Z, Y[:, support], INNER_RIDGE,
                                           init=(init[0][support], init[1][:, support]))
        loss += _column_nll(Z, Y[:, support], gamma, beta)
    return loss


def lasso_path(Zhat, cov: CovariateMatrix, lambda_grid: Sequence[float],
               tau: float = 1e-6, aic_loss: str = "refit") -> List[LassoPathEntry]:
    """Group lasso fits over ``lambda_grid``, warm-started from the largest value.

    ``aic_loss`` picks the log-likelihood inside the AIC: ``"refit"`` uses
    the maximised likelihood of the model with each entry's support (the
    usual AIC), ``"path"`` the shrunken lasso coefficients themselves.
    ``mean_logloss_Y`` always refers to the lasso coefficients.

    Entries are returned in the order of ``lambda_grid``.
    """
    if aic_loss not in ("refit", "path"):
        raise ValueError(f"unknown aic_loss {aic_loss!r}")
    Zhat = np.asarray(Zhat, dtype=float)
    n, k = Zhat.shape
    Y = cov.values
    q = Y.shape[1]
    order = sorted(range(len(lambda_grid)), key=lambda i: -lambda_grid[i])
    entries = {}
    refits = {}
    warm = None
    for i in order:
        lam = float(lambda_grid[i])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NotConverged)
            gamma, beta, ok = group_lasso_columns(Zhat, Y, lam, 0.0, warm)
        warm = (gamma, beta)
        loss = _column_nll(Zhat, Y, gamma, beta)
        support = np.flatnonzero(np.linalg.norm(beta, axis=0) > tau)
        n_sel = len(support)
        if aic_loss == "refit":
            key = tuple(support)
            if key not in refits:
                refits[key] = _support_nll(Zhat, Y, support, (gamma, beta))
            aic_nll = refits[key]
        else:
            aic_nll = loss
        entries[i] = LassoPathEntry(
            lam=lam, gamma=gamma, beta=beta,
            mean_logloss_Y=loss / (n * q),
            aic=2.0 * aic_nll + 2.0 * (k * n_sel + q),
            n_selected=n_sel,
            converged=bool(ok.all()) and not caught,
        )
    path = [entries[i] for i in range(len(lambda_grid))]
    _log_nonmonotone(path)
    return path


def _log_nonmonotone(path):
    ordered = sorted(path, key=lambda e: e.lam)
    for a, b in zip(ordered, ordered[1:]):
        if b.n_selected > a.n_selected:
            logger.info("lasso path not monotone: %d selected at lambda=%.4g, %d at %.4g",
                        a.n_selected, a.lam, b.n_selected, b.lam)


def choose_lambda(path: Sequence[LassoPathEntry], criterion: str = "aic",
                  require_nonempty: bool = True) -> LassoPathEntry:
    """Entry minimising AIC (or mean log-loss); ties go to the larger lambda.

    Raises
    ------
    AllEmpty
        When ``require_nonempty`` and no entry selects a covariate.
    """
    if not path:
        raise ValueError("empty lasso path")
    if criterion not in ("aic", "logloss"):
        raise ValueError(f"unknown criterion {criterion!r}")
    pool = [e for e in path if e.n_selected >= 1] if require_nonempty else list(path)
    if not pool:
        raise AllEmpty("every lambda on the path removed all covariates")
    key = (lambda e: e.aic) if criterion == "aic" else (lambda e: e.mean_logloss_Y)
    best = min(key(e) for e in pool)
    ties = [e for e in pool if key(e) <= best + 1e-12 * max(1.0, abs(best))]
    return max(ties, key=lambda e: e.lam)


def me_refine(Zhat, cov_keep: CovariateMatrix, lambda_star: float,
              delta_grid: Sequence[float], init=None):
    """Refit kept columns at ``lambda_star`` for every ridge weight in
    ``delta_grid``; keep the fit with the lowest mean log-loss.

    Ties go to the smaller delta. Returns ``(gamma, beta, chosen_delta)``.
    """
    Zhat = np.asarray(Zhat, dtype=float)
    Y = cov_keep.values
    best = None
    for delta in sorted(delta_grid):
        gamma, beta, _ = group_lasso_columns(Zhat, Y, lambda_star, delta, init)
        loss = _column_nll(Zhat, Y, gamma, beta) / max(Y.size, 1)
        if best is None or loss < best[0]:
            best = (loss, gamma, beta, float(delta))
    _, gamma, beta, delta = best
    return gamma, beta, delta


@dataclass
class SelectionResult:
    chosen_lambda: float
    chosen_delta: float
    active: ActiveSet
    beta_gmul: np.ndarray
    gamma_gmul: np.ndarray
    final_fit: FitResult
    path: List[LassoPathEntry] = field(default_factory=list)

    @property
    def state(self) -> LatentState:
        return self.final_fit.state


def select_and_refit(net: Network, cov: CovariateMatrix, stage1: FitResult,
                     hyper: Hyperparams = Hyperparams()) -> SelectionResult:
    """Screen covariates on the stage-one latent positions and refit the
    joint model on the retained columns."""
    Zhat = stage1.state.Z
    n, k = Zhat.shape
    path = lasso_path(Zhat, cov, hyper.lambda_grid_for(n, k), hyper.tau, hyper.aic_loss)
    entry = choose_lambda(path, hyper.selection_criterion, require_nonempty=True)
    keep = entry.active(hyper.tau)
    idx = list(keep.indices)
    cov_keep = cov.subset(idx)
    gamma, beta, delta = me_refine(Zhat, cov_keep, entry.lam, hyper.delta_grid,
                                   init=(entry.gamma[idx], entry.beta[:, idx]))
    start = LatentState(Zhat, stage1.state.alpha, beta, gamma)
    final = fit_joint(net, cov_keep, hyper, init=start)
    return SelectionResult(
        chosen_lambda=entry.lam,
        chosen_delta=delta,
        active=keep,
        beta_gmul=beta,
        gamma_gmul=gamma,
        final_fit=final,
        path=path,
    )
