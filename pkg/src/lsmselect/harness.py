"""Method runners, replicate studies and pilot screening.

Everything here is deterministic given a master seed: replicate ``r``
draws its data from ``derive_seed(master, r)`` and results are folded in
replicate order, whatever the worker count.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import ActiveSet, CovariateMatrix, Hyperparams, Network
from .exceptions import InsufficientNetworks, LSMError
from .joint import FitResult, fit_joint, posthoc_covariate_fit
from .metrics import EvalReport, evaluate
from .selection import SelectionResult, select_and_refit
from .simulate import REGIMES, SimConfig, derive_seed, generate

logger = logging.getLogger(__name__)

METHODS = ("network_only", "joint", "lasso", "melasso")
JOBS_ENV = "LSMSELECT_JOBS"


def default_jobs() -> int:
    """Worker count from the ``LSMSELECT_JOBS`` environment variable (default 1)."""
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise ValueError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise ValueError(f"{JOBS_ENV} must be >= 1")
    return jobs


def fit_with_restarts(net: Network, cov: CovariateMatrix, hyper: Hyperparams, k: int = 2,
                      restarts: int = 1) -> FitResult:
    """Best of ``restarts`` joint fits by per-parameter loss.

    Restart 0 uses ``hyper.seed``; later ones use derived seeds.
    """
    best = None
    for r in range(max(1, restarts)):
        seed = hyper.seed if r == 0 else derive_seed(hyper.seed, r)
        fit = fit_joint(net, cov, hyper.with_(seed=seed), k=k)
        if best is None or fit.best_loss.per_param < best.best_loss.per_param:
            best = fit
    return best


@dataclass
class MethodOutcome:
    method: str
    report: EvalReport
    fit: FitResult
    selection: Optional[SelectionResult] = None

    @property
    def active(self) -> Optional[ActiveSet]:
        return None if self.selection is None else self.selection.active


def run_methods(net: Network, cov: CovariateMatrix, hyper: Hyperparams,
                methods: Sequence[str] = METHODS, k: int = 2, restarts: int = 1,
                truth: Optional[ActiveSet] = None) -> Dict[str, MethodOutcome]:
    """Fit and evaluate each requested method on one data set.

    ``joint`` doubles as the first stage of ``lasso`` and ``melasso``, so
    it is fit once when any of the three is requested. ``lasso`` screens
    with the ridge weight fixed at 0; ``melasso`` searches the full
    ``hyper.delta_grid``. Covariate AUC of a screening method covers only
    the columns it kept.
    """
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    out: Dict[str, MethodOutcome] = {}
    q = cov.q
    if "network_only" in methods:
        fit = fit_with_restarts(net, cov, hyper.with_(lambda_weight=0.0), k, restarts)
        state = posthoc_covariate_fit(fit.state, cov)
        out["network_only"] = MethodOutcome(
            "network_only", evaluate(net, cov, state, truth=truth, q_total=q), fit)
    need_stage1 = {"joint", "lasso", "melasso"} & set(methods)
    if need_stage1:
        stage1 = fit_with_restarts(net, cov, hyper, k, restarts)
        if "joint" in methods:
            out["joint"] = MethodOutcome(
                "joint", evaluate(net, cov, stage1.state, truth=truth, q_total=q), stage1)
        for name in ("lasso", "melasso"):
            if name not in methods:
                continue
            h = hyper if name == "melasso" else hyper.with_(delta_grid=(0.0,))
            sel = select_and_refit(net, cov, stage1, h)
            cov_keep = cov.subset(sel.active.indices)
            rep = evaluate(net, cov_keep, sel.state, selected=sel.active, truth=truth, q_total=q)
            out[name] = MethodOutcome(name, rep, sel.final_fit, sel)
    return out


# ---------------------------------------------------------------------------
# replicate studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    regime: str = "less_sparse"
    noise_levels: Tuple[int, ...] = (0, 10, 20)
    replicates: int = 10
    methods: Tuple[str, ...] = METHODS
    master_seed: int = 0
    restarts: int = 1
    sim: SimConfig = SimConfig()
    hyper: Hyperparams = Hyperparams()

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.regime != "custom" and self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")


def _one_replicate(args):
    cfg, r = args
    seed = derive_seed(cfg.master_seed, r)
    rows, failures = [], []
    for noise in cfg.noise_levels:
        sim = cfg.sim.with_(n_noise=noise, seed=seed)
        if cfg.regime != "custom":
            low, high = REGIMES[cfg.regime]
            sim = sim.with_(alpha_low=low, alpha_high=high)
        net, cov, truth = generate(sim)
        hyper = cfg.hyper.with_(seed=derive_seed(seed, 1))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                outcomes = run_methods(net, cov, hyper, cfg.methods, sim.k, cfg.restarts,
                                       truth.active_true)
        except (LSMError, ArithmeticError, ValueError) as exc:
            failures.append({"regime": cfg.regime, "n_noise": noise, "replicate": r,
                             "error": f"{type(exc).__name__}: {exc}"})
            continue
        for name, oc in outcomes.items():
            rep = oc.report
            rows.append({
                "regime": cfg.regime, "n_noise": noise, "replicate": r, "method": name,
                "seed": seed,
                "auc_network": rep.auc_network,
                "auc_network_per_node": rep.auc_network_per_node,
                "auc_covariates_mean": rep.auc_covariates_mean,
                "mean_logloss_A": rep.mean_logloss_A,
                "mean_logloss_Y": rep.mean_logloss_Y,
                "tn_rate": rep.tn_rate if noise else None,
                "tp_rate": rep.tp_rate,
                "n_selected": len(oc.active) if oc.active is not None else cov.q,
                "chosen_lambda": oc.selection.chosen_lambda if oc.selection else None,
                "chosen_delta": oc.selection.chosen_delta if oc.selection else None,
                "iterations": oc.fit.iterations_run,
                "status": "ok",
            })
    return rows, failures


@dataclass
class StudyResult:
    rows: List[dict] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)

    def table1(self) -> List[dict]:
        """Mean and sd of covariate and network AUC per (noise level, method)."""
        return _aggregate(self.rows, ("auc_covariates_mean", "auc_network"))

    def table2(self) -> List[dict]:
        """Mean and sd of TN and TP rates per (noise level, method)."""
        return _aggregate([r for r in self.rows if r["method"] in ("lasso", "melasso")],
                          ("tn_rate", "tp_rate"))

    def mean(self, column: str, method: str, n_noise: int) -> float:
        vals = [r[column] for r in self.rows
                if r["method"] == method and r["n_noise"] == n_noise and r[column] is not None]
        return float(np.mean(vals)) if vals else float("nan")


def _aggregate(rows, columns):
    groups: Dict[tuple, List[dict]] = {}
    for r in rows:
        groups.setdefault((r["regime"], r["n_noise"], r["method"]), []).append(r)
    out = []
    for key in sorted(groups):
        rec = {"regime": key[0], "n_noise": key[1], "method": key[2], "replicates": len(groups[key])}
        for c in columns:
            vals = np.array([g[c] for g in groups[key] if g[c] is not None], dtype=float)
            rec[c + "_mean"] = float(vals.mean()) if vals.size else None
            # a single replicate has no spread; report 0 by convention
            rec[c + "_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else None)
        out.append(rec)
    return out


def run_study(cfg: StudyConfig, jobs: int = 1,
              progress: Optional[Callable[[int], None]] = None) -> StudyResult:
    """Run every replicate of ``cfg``; failed replicates are listed, not fatal."""
    tasks = [(cfg, r) for r in range(cfg.replicates)]
    result = StudyResult()
    if jobs <= 1:
        parts = []
        for t in tasks:
            parts.append(_one_replicate(t))
            if progress is not None:
                progress(t[1])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_one_replicate, tasks))
    for rows, failures in parts:
        result.rows.extend(rows)
        result.failures.extend(failures)
    return result


# ---------------------------------------------------------------------------
# pilot screening
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PilotConfig:
    pilot_count: int = 10
    drop_fraction: float = 0.7
    rare_prevalence: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.pilot_count < 1:
            raise ValueError("pilot_count must be >= 1")
        if not 0 < self.drop_fraction <= 1:
            raise ValueError("drop_fraction must lie in (0, 1]")
        if not 0 <= self.rare_prevalence < 1:
            raise ValueError("rare_prevalence must lie in [0, 1)")


def screening_rule(drop_counts, min_prevalence, pilot_count: int,
                   drop_fraction: float = 0.7, rare_prevalence: float = 0.1) -> np.ndarray:
    """Boolean mask of covariates to exclude from full data collection.

    A covariate is excluded when it was dropped in at least
    ``drop_fraction`` of the pilot networks, unless its prevalence fell
    below ``rare_prevalence`` in some pilot network.
    """
    drop_counts = np.asarray(drop_counts, dtype=float)
    min_prevalence = np.asarray(min_prevalence, dtype=float)
    # small slack so 7/10 counts as 70% despite rounding
    often = drop_counts / pilot_count >= drop_fraction - 1e-12
    rare = min_prevalence < rare_prevalence
    return often & ~rare


@dataclass
class PilotReport:
    names: Tuple[str, ...]
    pilot_ids: Tuple[str, ...]
    drop_counts: np.ndarray
    min_prevalence: np.ndarray
    excluded: np.ndarray
    full_phase: List[dict] = field(default_factory=list)

    @property
    def retained(self) -> List[str]:
        return [s for s, x in zip(self.names, self.excluded) if not x]

    @property
    def reduction_percent(self) -> float:
        """Share of covariates no longer collected, in percent."""
        return 100.0 * float(np.mean(self.excluded)) if len(self.names) else 0.0


def screen_network(net: Network, cov: CovariateMatrix, hyper: Hyperparams, k: int = 2) -> ActiveSet:
    """Covariates kept by the ridge-stabilised lasso on one pilot network.

    Only the selection step matters for screening, so the final joint
    refit is skipped.
    """
    from .selection import choose_lambda, lasso_path

    stage1 = fit_joint(net, cov, hyper, k=k)
    Z = stage1.state.Z
    path = lasso_path(Z, cov, hyper.lambda_grid_for(net.n, Z.shape[1]), hyper.tau, hyper.aic_loss)
    return choose_lambda(path, hyper.selection_criterion, require_nonempty=True).active(hyper.tau)


def _screen_task(args):
    net, cov, hyper, k = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return screen_network(net, cov, hyper, k)


def run_pilot(datasets: Sequence[Tuple[str, Network, CovariateMatrix]], cfg: PilotConfig,
              hyper: Hyperparams = Hyperparams(), k: int = 2, jobs: int = 1,
              full_phase: bool = True) -> PilotReport:
    """Screen covariates on a random pilot subset and analyse the rest.

    ``datasets`` holds ``(id, network, covariates)`` triples that share
    covariate names. With ``full_phase`` the remaining networks are fit
    jointly with the retained columns and with all columns.

    Raises
    ------
    InsufficientNetworks
        If fewer than ``cfg.pilot_count`` networks are supplied.
    """
    if len(datasets) < cfg.pilot_count:
        raise InsufficientNetworks(f"{len(datasets)} networks supplied, {cfg.pilot_count} pilots requested")
    names = datasets[0][2].names
    for did, _, cov in datasets:
        if cov.names != names:
            raise ValueError(f"covariate names of {did!r} differ from {datasets[0][0]!r}")
    rng = np.random.default_rng(cfg.seed)
    pick = np.sort(rng.choice(len(datasets), size=cfg.pilot_count, replace=False))
    pilots = [datasets[i] for i in pick]
    tasks = [(net, cov, hyper.with_(seed=derive_seed(cfg.seed, int(i))), k)
             for i, (_, net, cov) in zip(pick, pilots)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            actives = list(pool.map(_screen_task, tasks))
    else:
        actives = [_screen_task(t) for t in tasks]

    q = len(names)
    drop_counts = np.zeros(q, dtype=int)
    for act in actives:
        kept = np.zeros(q, dtype=bool)
        kept[list(act.indices)] = True
        drop_counts += ~kept
    min_prev = np.min([cov.prevalence() for _, _, cov in pilots], axis=0)
    excluded = screening_rule(drop_counts, min_prev, cfg.pilot_count,
                              cfg.drop_fraction, cfg.rare_prevalence)
    report = PilotReport(names, tuple(d[0] for d in pilots), drop_counts, min_prev, excluded)

    if full_phase:
        keep = [j for j in range(q) if not excluded[j]]
        rest = [d for i, d in enumerate(datasets) if i not in set(pick.tolist())]
        for did, net, cov in rest:
            for label, sub in (("retained", cov.subset(keep)), ("full", cov)):
                if sub.q == 0:
                    continue
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    fit = fit_joint(net, sub, hyper, k=k)
                    rep = evaluate(net, sub, fit.state, per_node=False)
                report.full_phase.append({"id": did, "covariates": label, "q": sub.q,
                                          "auc_network": rep.auc_network,
                                          "auc_covariates_mean": rep.auc_covariates_mean})
    return report
