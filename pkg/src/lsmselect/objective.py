"""Negative log-likelihoods of the joint latent space model and their gradients.

Edges follow ``logit P(A_ij = 1) = alpha_i + alpha_j + Z_i . Z_j`` and
covariates ``logit P(Y_ij = 1) = gamma_j + Z_i . beta_j``. All losses are
negative log-likelihoods (to be minimised); the adjacency diagonal never
enters a sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .core import ActiveSet, CovariateMatrix, LatentState, Network


def log1pexp(theta):
    """Stable log(1 + exp(theta))."""
    theta = np.asarray(theta, dtype=float)
    return np.maximum(theta, 0.0) + np.log1p(np.exp(-np.abs(theta)))


def bernoulli_nll(y, theta) -> float:
    """Sum of -[y * theta - log(1 + exp(theta))] over all cells."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return float(np.sum(log1pexp(theta) - y * theta))


@dataclass(frozen=True)
class LossBreakdown:
    loss_A: float
    loss_Y: float
    joint: float
    per_param: float

    def as_dict(self) -> dict:
        return {"loss_A": self.loss_A, "loss_Y": self.loss_Y,
                "joint": self.joint, "per_param": self.per_param}


@dataclass(frozen=True)
class Gradients:
    dZ: np.ndarray
    dAlpha: np.ndarray
    dBeta: np.ndarray
    dGamma: np.ndarray


def edge_logits(state: LatentState) -> np.ndarray:
    """n x n matrix of alpha_i + alpha_j + Z_i . Z_j (diagonal is not meaningful)."""
    a = state.alpha
    return a[:, None] + a[None, :] + state.Z @ state.Z.T


def covariate_logits(state: LatentState) -> np.ndarray:
    return state.gamma[None, :] + state.Z @ state.beta


def _pair_nll(A, theta) -> float:
    # each unordered pair appears twice in the full symmetric matrix
    cell = log1pexp(theta) - A * theta
    np.fill_diagonal(cell, 0.0)
    return float(cell.sum() / 2.0)


def loss_network(net: Network, state: LatentState) -> float:
    return _pair_nll(net.adjacency, edge_logits(state))


def loss_covariates(cov: CovariateMatrix, state: LatentState,
                    subset: Optional[ActiveSet] = None) -> float:
    if subset is None:
        return bernoulli_nll(cov.values, covariate_logits(state))
    idx = list(subset.indices)
    if not idx:
        return 0.0
    theta = state.gamma[idx][None, :] + state.Z @ state.beta[:, idx]
    return bernoulli_nll(cov.values[:, idx], theta)


def per_param_loss(loss_A: float, loss_Y: float, n: int, q: int, weight: float) -> float:
    """loss_A / (n(n-1)) + weight * loss_Y / (nq); the covariate term is 0 when q = 0."""
    value = loss_A / (n * (n - 1))
    if q > 0:
        value += weight * loss_Y / (n * q)
    return value


def joint_loss(net: Network, cov: CovariateMatrix, state: LatentState,
               weight: float) -> LossBreakdown:
    """Network loss plus ``weight`` times the covariate loss."""
    loss_A = loss_network(net, state)
    loss_Y = loss_covariates(cov, state)
    return LossBreakdown(
        loss_A=loss_A,
        loss_Y=loss_Y,
        joint=loss_A + weight * loss_Y,
        per_param=per_param_loss(loss_A, loss_Y, net.n, cov.q, weight),
    )


def edge_residuals(A, state: LatentState) -> np.ndarray:
    """P - A with a zeroed diagonal."""
    R = expit(edge_logits(state)) - A
    np.fill_diagonal(R, 0.0)
    return R


def gradients(net: Network, cov: CovariateMatrix, state: LatentState,
              weight: float) -> Gradients:
    """Analytic gradients.

    ``dZ`` and ``dAlpha`` differentiate the joint loss; ``dBeta`` and
    ``dGamma`` differentiate the (unweighted) covariate loss.
    """
    R = edge_residuals(net.adjacency, state)
    RY = expit(covariate_logits(state)) - cov.values
    dZ = R @ state.Z
    if cov.q:
        dZ = dZ + weight * (RY @ state.beta.T)
    return Gradients(
        dZ=dZ,
        dAlpha=R.sum(axis=1),
        dBeta=state.Z.T @ RY,
        dGamma=RY.sum(axis=0),
    )


def loss_and_gradients(net: Network, cov: CovariateMatrix, state: LatentState,
                       weight: float):
    """:func:`joint_loss` and :func:`gradients` sharing one logit evaluation."""
    theta_A = edge_logits(state)
    theta_Y = covariate_logits(state)
    loss_A = _pair_nll(net.adjacency, theta_A)
    loss_Y = bernoulli_nll(cov.values, theta_Y)
    losses = LossBreakdown(loss_A, loss_Y, loss_A + weight * loss_Y,
                           per_param_loss(loss_A, loss_Y, net.n, cov.q, weight))
    R = expit(theta_A) - net.adjacency
    np.fill_diagonal(R, 0.0)
    RY = expit(theta_Y) - cov.values
    dZ = R @ state.Z
    if cov.q:
        dZ = dZ + weight * (RY @ state.beta.T)
    grads = Gradients(dZ=dZ, dAlpha=R.sum(axis=1), dBeta=state.Z.T @ RY, dGamma=RY.sum(axis=0))
    return losses, grads
