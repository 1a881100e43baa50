"""Synthetic networks with clustered latent positions and binary covariates."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .core import (
    ActiveSet,
    CovariateMatrix,
    LatentState,
    Network,
    center_columns,
    diagonalize_covariance,
)

_MASK64 = (1 << 64) - 1

REGIMES = {
    "less_sparse": (-1.0, -0.5),
    "sparse": (-2.0, -1.0),
}


def splitmix64(x: int) -> int:
    """One output of the SplitMix64 generator seeded at ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Seed for replicate ``index`` of a run with seed ``master``."""
    return splitmix64((int(master) + int(index)) & _MASK64) >> 1


@dataclass(frozen=True)
class SimConfig:
    n: int = 200
    q: int = 25
    k: int = 2
    n_noise: int = 0
    alpha_low: float = -1.0
    alpha_high: float = -0.5
    beta_mean: float = 1.0
    beta_spread: float = 0.1
    # "variance" reads beta_spread as sigma^2, "sd" as sigma
    beta_spread_kind: str = "variance"
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.k < 1 or self.q < 0:
            raise ValueError("need n >= 2, k >= 1, q >= 0")
        if not 0 <= self.n_noise <= self.q:
            raise ValueError("n_noise must lie in [0, q]")
        if self.alpha_low > self.alpha_high:
            raise ValueError("alpha_low must not exceed alpha_high")
        if self.beta_spread_kind not in ("variance", "sd"):
            raise ValueError("beta_spread_kind must be 'variance' or 'sd'")
        if self.beta_spread < 0:
            raise ValueError("beta_spread must be >= 0")

    @classmethod
    def for_regime(cls, regime: str, **kwargs) -> "SimConfig":
        low, high = REGIMES[regime]
        return cls(alpha_low=low, alpha_high=high, **kwargs)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    @property
    def beta_sd(self) -> float:
        return float(np.sqrt(self.beta_spread) if self.beta_spread_kind == "variance" else self.beta_spread)


@dataclass(frozen=True)
class SimTruth:
    Z_true: np.ndarray
    alpha_true: np.ndarray
    beta_true: np.ndarray
    gamma_true: np.ndarray
    active_true: ActiveSet
    cluster_assignment: np.ndarray

    def state(self) -> LatentState:
        return LatentState(self.Z_true, self.alpha_true, self.beta_true, self.gamma_true)


def latent_positions(n: int, k: int, rng) -> tuple:
    """Clustered positions, centred, scaled to ||ZZ'||_F = n, and rotated
    to a diagonal empirical covariance. Returns ``(Z, clusters)``."""
    clusters = np.empty(n, dtype=int)
    for c, chunk in enumerate(np.array_split(rng.permutation(n), k)):
        clusters[chunk] = c
    centers = rng.uniform(-1.0, 1.0, size=(k, k))
    Z = centers[clusters] + rng.standard_normal((n, k))
    Z = center_columns(Z)
    Z *= np.sqrt(n / np.linalg.norm(Z @ Z.T, "fro"))
    Z, _, _ = diagonalize_covariance(Z, np.zeros((k, 0)))
    return Z, clusters


def generate(cfg: SimConfig):
    """Draw one data set; returns ``(Network, CovariateMatrix, SimTruth)``.

    The last ``cfg.n_noise`` covariate columns have zero coefficients.
    """
    rng = np.random.default_rng(cfg.seed)
    n, q, k = cfg.n, cfg.q, cfg.k
    Z, clusters = latent_positions(n, k, rng)

    n_active = q - cfg.n_noise
    beta = np.zeros((k, q))
    beta[:, :n_active] = rng.normal(cfg.beta_mean, cfg.beta_sd, size=(k, n_active))
    gamma = np.zeros(q)
    alpha = rng.uniform(cfg.alpha_low, cfg.alpha_high, size=n)

    P = expit(alpha[:, None] + alpha[None, :] + Z @ Z.T)
    upper = np.triu(rng.uniform(size=(n, n)) < P, 1)
    A = (upper | upper.T).astype(float)

    Y = (rng.uniform(size=(n, q)) < expit(gamma[None, :] + Z @ beta)).astype(float)

    truth = SimTruth(Z, alpha, beta, gamma, ActiveSet(tuple(range(n_active))), clusters)
    return Network(A), CovariateMatrix(Y), truth
