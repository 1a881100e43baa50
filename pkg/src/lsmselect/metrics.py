"""AUC, log-loss and selection rates for fitted latent space models."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .core import ActiveSet, CovariateMatrix, LatentState, Network
from .exceptions import AllUndefined, UndefinedAUC
from .objective import covariate_logits, edge_logits, loss_covariates, loss_network


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks, so tied scores count one half.

    Raises
    ------
    UndefinedAUC
        If ``labels`` contain a single class.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be non-empty and of equal length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def network_auc(net: Network, state: LatentState, per_node: bool = False) -> float:
    """AUC of edge probabilities over all unordered node pairs.

    With ``per_node=True`` the AUC is computed within each node's row and
    averaged over nodes that have both an edge and a non-edge.
    """
    state.check_compatible(net.n)
    P = expit(edge_logits(state))
    A = net.adjacency
    if not per_node:
        iu = np.triu_indices(net.n, 1)
        return auc(P[iu], A[iu])
    values = []
    off = ~np.eye(net.n, dtype=bool)
    for i in range(net.n):
        row, lab = P[i, off[i]], A[i, off[i]]
        if 0 < lab.sum() < lab.size:
            values.append(auc(row, lab))
    if not values:
        raise UndefinedAUC("no node has both an edge and a non-edge")
    return float(np.mean(values))


def covariate_auc(cov: CovariateMatrix, state: LatentState,
                  included: Optional[ActiveSet] = None):
    """Per-column AUC of covariate probabilities and their mean over
    ``included`` columns (all by default).

    Degenerate columns get ``nan`` and are left out of the mean with a
    warning. Returns ``(mean, per_column)``.
    """
    state.check_compatible(cov.n, cov.q)
    idx = list(range(cov.q)) if included is None else list(included.indices)
    if not idx:
        raise ValueError("no columns included")
    P = expit(covariate_logits(state))
    per_column = []
    for j in range(cov.q):
        try:
            per_column.append(auc(P[:, j], cov.values[:, j]))
        except UndefinedAUC:
            per_column.append(float("nan"))
    chosen = np.array([per_column[j] for j in idx])
    if np.isnan(chosen).all():
        raise AllUndefined("every included covariate column is constant")
    if np.isnan(chosen).any():
        bad = [cov.names[j] for j in idx if np.isnan(per_column[j])]
        warnings.warn(f"constant covariate columns excluded from mean AUC: {bad}", stacklevel=2)
    return float(np.nanmean(chosen)), per_column


def selection_confusion(selected: ActiveSet, truth: ActiveSet, q: int):
    """Share of noise columns dropped and of true columns kept.

    Returns ``(tn_rate, tp_rate)``; a rate is ``None`` when its
    denominator is empty.
    """
    truth_set = set(truth.indices)
    if any(j < 0 or j >= q for j in truth_set):
        raise ValueError("truth indices out of range")
    chosen = set(selected.indices)
    noise = set(range(q)) - truth_set
    tn = len(noise - chosen) / len(noise) if noise else None
    tp = len(chosen & truth_set) / len(truth_set) if truth_set else None
    return tn, tp


@dataclass
class EvalReport:
    auc_network: float
    auc_covariates_mean: float
    auc_per_covariate: List[float] = field(default_factory=list)
    mean_logloss_A: float = float("nan")
    mean_logloss_Y: float = float("nan")
    tn_rate: Optional[float] = None
    tp_rate: Optional[float] = None
    auc_network_per_node: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(net: Network, cov: CovariateMatrix, state: LatentState,
             selected: Optional[ActiveSet] = None, truth: Optional[ActiveSet] = None,
             q_total: Optional[int] = None, per_node: bool = True) -> EvalReport:
    """Compute every metric for ``state`` on (``net``, ``cov``).

    ``cov`` holds exactly the columns the state models. When ``truth`` is
    given, ``selected`` indexes the original ``q_total`` columns.
    """
    n = net.n
    cov_auc, per_col = covariate_auc(cov, state) if cov.q else (float("nan"), [])
    report = EvalReport(
        auc_network=network_auc(net, state),
        auc_covariates_mean=cov_auc,
        auc_per_covariate=per_col,
        mean_logloss_A=loss_network(net, state) / (n * (n - 1) / 2),
        mean_logloss_Y=loss_covariates(cov, state) / (n * cov.q) if cov.q else float("nan"),
    )
    if per_node:
        try:
            report.auc_network_per_node = network_auc(net, state, per_node=True)
        except UndefinedAUC:
            pass
    if truth is not None:
        q = q_total if q_total is not None else cov.q
        chosen = selected if selected is not None else ActiveSet(tuple(range(q)))
        report.tn_rate, report.tp_rate = selection_confusion(chosen, truth, q)
    return report
