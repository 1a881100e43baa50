"""scikit-learn style wrappers around the joint fit and covariate screening."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted

from .core import CovariateMatrix, Hyperparams, Network, check_adjacency, check_covariates
from .harness import fit_with_restarts
from .metrics import covariate_auc, network_auc
from .objective import covariate_logits, edge_logits
from .selection import select_and_refit


def _hyper(est, **override) -> Hyperparams:
    kw = dict(
        lambda_weight=est.lambda_weight, eta0=est.eta0, max_iters=est.max_iters,
        stop_tol=est.stop_tol, stop_patience=est.stop_patience,
        optimizer_kind=est.optimizer, seed=est.random_state,
    )
    kw.update(override)
    return Hyperparams(**kw)


def _data(A, Y):
    A = check_adjacency(A)
    n = A.shape[0]
    Y = np.zeros((n, 0)) if Y is None else check_covariates(Y, n)
    return Network(A), CovariateMatrix(Y)


class JointLatentSpaceModel(TransformerMixin, BaseEstimator):
    """Latent positions fit jointly to a network and binary node covariates.

    The model is transductive: ``transform`` returns the positions of the
    nodes of the fitted network and only accepts that network again.

    Parameters
    ----------
    n_components : int
        Latent dimension k.
    lambda_weight : float
        Weight of the covariate log-likelihood; 0 fits the network alone.
    random_state : int
        Seed of the random start.

    Attributes
    ----------
    embedding_ : (n, k) array
    alpha_ : (n,) array of sociability offsets
    beta_, gamma_ : covariate slopes (k, q) and intercepts (q,)
    n_iter_ : int
    loss_trace_ : (iterations, 4) array of loss_A, loss_Y, joint, per_param
    """

    def __init__(self, n_components=2, lambda_weight=0.1, eta0=5.0, max_iters=2000,
                 stop_tol=1e-6, stop_patience=500, optimizer="adam", restarts=1,
                 random_state=0):
        self.n_components = n_components
        self.lambda_weight = lambda_weight
        self.eta0 = eta0
        self.max_iters = max_iters
        self.stop_tol = stop_tol
        self.stop_patience = stop_patience
        self.optimizer = optimizer
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, A, Y=None):
        net, cov = _data(A, Y)
        fit = fit_with_restarts(net, cov, _hyper(self), self.n_components, self.restarts)
        self._set_state(fit)
        return self

    def _set_state(self, fit):
        s = fit.state
        self.state_ = s
        self.embedding_ = s.Z
        self.alpha_ = s.alpha
        self.beta_ = s.beta
        self.gamma_ = s.gamma
        self.n_iter_ = fit.iterations_run
        self.loss_trace_ = fit.trace_array()
        self.n_features_in_ = s.n

    def transform(self, X=None):
        """Latent positions; ``X`` may repeat the fitted adjacency matrix."""
        check_is_fitted(self, "embedding_")
        if X is not None and np.asarray(X).shape != (self.n_features_in_, self.n_features_in_):
            raise ValueError("transform only accepts the fitted network")
        return np.array(self.embedding_)

    def fit_transform(self, A, Y=None, **fit_params):
        return self.fit(A, Y).transform(A)

    def predict_proba_edges(self):
        """n x n edge probabilities (diagonal set to 0)."""
        check_is_fitted(self, "state_")
        P = expit(edge_logits(self.state_))
        np.fill_diagonal(P, 0.0)
        return P

    def predict_proba_covariates(self):
        """n x q covariate probabilities."""
        check_is_fitted(self, "state_")
        return expit(covariate_logits(self.state_))

    def score(self, A, Y=None):
        """Network AUC over node pairs of ``A``."""
        check_is_fitted(self, "state_")
        net, _ = _data(A, None)
        return network_auc(net, self.state_)


class LatentCovariateSelector(SelectorMixin, BaseEstimator):
    """Screen binary node covariates by their link to the latent space.

    ``fit(Y, A)`` takes the covariate matrix as ``X`` and the adjacency
    matrix as the second argument. A joint fit gives latent positions,
    a group lasso per covariate column picks the kept columns, and a
    ridge-stabilised refit (``delta_grid``) precedes a final joint fit on
    the kept columns.

    Attributes
    ----------
    support_ : (q,) bool array
    chosen_lambda_, chosen_delta_ : float
    model_ : JointLatentSpaceModel
        Final joint fit on the kept columns.
    """

    def __init__(self, n_components=2, lambda_weight=0.1, eta0=5.0, max_iters=2000,
                 stop_tol=1e-6, stop_patience=500, optimizer="adam", restarts=1,
                 lambda_grid=None, delta_grid=tuple(np.round(np.linspace(0, 0.5, 11), 10)),
                 criterion="aic", aic_loss="refit", tau=1e-6, random_state=0):
        self.n_components = n_components
        self.lambda_weight = lambda_weight
        self.eta0 = eta0
        self.max_iters = max_iters
        self.stop_tol = stop_tol
        self.stop_patience = stop_patience
        self.optimizer = optimizer
        self.restarts = restarts
        self.lambda_grid = lambda_grid
        self.delta_grid = delta_grid
        self.criterion = criterion
        self.aic_loss = aic_loss
        self.tau = tau
        self.random_state = random_state

    def fit(self, X, A):
        net, cov = _data(A, X)
        hyper = _hyper(self, lambda_grid=self.lambda_grid, delta_grid=tuple(self.delta_grid),
                       selection_criterion=self.criterion, aic_loss=self.aic_loss, tau=self.tau)
        stage1 = fit_with_restarts(net, cov, hyper, self.n_components, self.restarts)
        sel = select_and_refit(net, cov, stage1, hyper)
        self.selection_ = sel
        self.support_ = np.zeros(cov.q, dtype=bool)
        self.support_[list(sel.active.indices)] = True
        self.chosen_lambda_ = sel.chosen_lambda
        self.chosen_delta_ = sel.chosen_delta
        model = JointLatentSpaceModel(self.n_components, self.lambda_weight, self.eta0,
                                      self.max_iters, self.stop_tol, self.stop_patience,
                                      self.optimizer, self.restarts, self.random_state)
        model._set_state(sel.final_fit)
        self.model_ = model
        self.n_features_in_ = cov.q
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_

    def score(self, X, A=None):
        """Mean covariate AUC of the final fit over the kept columns of ``X``."""
        check_is_fitted(self, "support_")
        cov = CovariateMatrix(check_covariates(np.asarray(X)[:, self.support_]))
        return covariate_auc(cov, self.model_.state_)[0]
