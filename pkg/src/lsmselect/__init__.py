"""Joint latent space models for networks with binary node covariates,
with group-lasso screening of the covariates."""

from .core import (
    ActiveSet,
    CovariateMatrix,
    Hyperparams,
    LatentState,
    Network,
    center_alpha,
    center_columns,
    default_lambda_grid,
    diagonalize_covariance,
    validate_pair,
)
from .estimators import JointLatentSpaceModel, LatentCovariateSelector
from .exceptions import *  # noqa: F401,F403
from .joint import FitResult, fit_joint, initialize, inner_logistic_fit, posthoc_covariate_fit
from .metrics import EvalReport, auc, covariate_auc, evaluate, network_auc, selection_confusion
from .objective import LossBreakdown, gradients, joint_loss, loss_and_gradients
from .optim import OptimizerState, apply_step, cosine_anneal, step_sizes
from .selection import (
    LassoPathEntry,
    SelectionResult,
    choose_lambda,
    group_lasso_column,
    lasso_path,
    me_refine,
    prox_group,
    select_and_refit,
)
from .simulate import SimConfig, SimTruth, derive_seed, generate

__version__ = "0.1.0"
