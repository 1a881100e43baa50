"""Core value types, input validation and identifiability projections."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .exceptions import (
    AsymmetricAdjacency,
    DegenerateCovariance,
    DimensionMismatch,
    NonBinaryEntry,
    SelfLoopPresent,
    ValidationError,
)

OPTIMIZERS = ("adam", "adagrad")
CRITERIA = ("aic", "logloss")
AIC_LOSSES = ("refit", "path")
DEFAULT_DELTA_GRID = tuple(np.round(np.linspace(0.0, 0.5, 11), 10).tolist())


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _first_nonbinary(values):
    bad = np.argwhere(~((values == 0) | (values == 1)))
    return tuple(int(i) for i in bad[0]) if len(bad) else None


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def check_adjacency(A) -> np.ndarray:
    """Validate a binary symmetric adjacency matrix and return it as floats.

    Raises
    ------
    NonBinaryEntry, AsymmetricAdjacency, SelfLoopPresent, DimensionMismatch
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"adjacency must be square, got shape {A.shape}")
    if A.shape[0] < 2:
        raise DimensionMismatch("a network needs at least 2 nodes")
    loc = _first_nonbinary(A)
    if loc is not None:
        raise NonBinaryEntry(f"adjacency entry {loc} is {A[loc]!r}, expected 0 or 1", loc)
    if np.any(np.diag(A) != 0):
        i = int(np.flatnonzero(np.diag(A))[0])
        raise SelfLoopPresent(f"self-loop at node {i}")
    if not np.array_equal(A, A.T):
        i, j = np.argwhere(A != A.T)[0]
        raise AsymmetricAdjacency(f"A[{i}][{j}] != A[{j}][{i}]")
    return A


def check_covariates(Y, n: Optional[int] = None) -> np.ndarray:
    """Validate an n x q binary covariate matrix and return it as floats."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1) if Y.size else Y.reshape(n or 0, 0)
    if Y.ndim != 2:
        raise DimensionMismatch(f"covariates must be 2-d, got {Y.ndim}-d")
    if n is not None and Y.shape[0] != n:
        raise DimensionMismatch(f"covariates have {Y.shape[0]} rows but the network has {n} nodes")
    loc = _first_nonbinary(Y)
    if loc is not None:
        raise NonBinaryEntry(f"covariate entry {loc} is {Y[loc]!r}, expected 0 or 1", loc)
    return Y


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Network:
    """Undirected binary network without self-loops."""

    adjacency: np.ndarray
    node_ids: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "adjacency", _frozen(self.adjacency))
        if self.node_ids is not None:
            object.__setattr__(self, "node_ids", tuple(self.node_ids))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def density(self) -> float:
        n = self.n
        return float(np.triu(self.adjacency, 1).sum() / (n * (n - 1) / 2))


@dataclass(frozen=True)
class CovariateMatrix:
    """n x q binary node attributes with column names."""

    values: np.ndarray
    names: Optional[tuple] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        object.__setattr__(self, "values", _frozen(values))
        names = self.names
        if names is None:
            names = tuple(f"Y{j}" for j in range(values.shape[1]))
        names = tuple(str(s) for s in names)
        if len(names) != values.shape[1]:
            raise DimensionMismatch(f"{len(names)} names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ValidationError("covariate names must be unique")
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def subset(self, indices) -> "CovariateMatrix":
        idx = list(indices)
        return CovariateMatrix(self.values[:, idx], tuple(self.names[j] for j in idx))

    def prevalence(self) -> np.ndarray:
        return self.values.mean(axis=0)


@dataclass(frozen=True)
class LatentState:
    """Latent positions ``Z`` (n, k), sociability ``alpha`` (n,),
    coefficients ``beta`` (k, q) and intercepts ``gamma`` (q,)."""

    Z: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1)
        k = Z.shape[1]
        beta = np.asarray(self.beta, dtype=float).reshape(k, -1)
        object.__setattr__(self, "Z", _frozen(Z))
        object.__setattr__(self, "alpha", _frozen(np.ravel(self.alpha)))
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "gamma", _frozen(np.ravel(self.gamma)))
        if k < 1:
            raise DimensionMismatch("latent dimension k must be >= 1")
        if self.alpha.shape[0] != Z.shape[0]:
            raise DimensionMismatch("alpha length differs from the number of rows of Z")
        if self.gamma.shape[0] != beta.shape[1]:
            raise DimensionMismatch("gamma length differs from the number of columns of beta")
        for name in ("Z", "alpha", "beta", "gamma"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} contains non-finite values")

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def k(self) -> int:
        return self.Z.shape[1]

    @property
    def q(self) -> int:
        return self.beta.shape[1]

    def with_(self, **changes) -> "LatentState":
        return replace(self, **changes)

    def check_compatible(self, n: int, q: Optional[int] = None) -> None:
        if self.n != n:
            raise DimensionMismatch(f"state has {self.n} nodes, data has {n}")
        if q is not None and self.q != q:
            raise DimensionMismatch(f"state has {self.q} covariates, data has {q}")


@dataclass(frozen=True)
class ActiveSet:
    """Sorted indices of selected covariate columns."""

    indices: tuple = ()
    threshold_used: float = 1e-6

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValidationError("active set indices must be strictly increasing")
        if any(i < 0 for i in idx):
            raise ValidationError("active set indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_norms(cls, norms, tau: float) -> "ActiveSet":
        return cls(tuple(np.flatnonzero(np.asarray(norms) > tau)), tau)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, j):
        return j in self.indices


def default_lambda_grid(n: int, k: int, size: int = 20) -> tuple:
    """Log-spaced grid over [0.01, 10] * sqrt(k/n) containing sqrt(k/n) exactly."""
    anchor = np.sqrt(k / n)
    grid = np.geomspace(0.01 * anchor, 10 * anchor, size)
    grid[np.argmin(np.abs(np.log(grid / anchor)))] = anchor
    return tuple(float(x) for x in grid)


@dataclass(frozen=True)
class Hyperparams:
    lambda_weight: float = 0.1
    eta0: float = 5.0
    max_iters: int = 2000
    stop_tol: float = 1e-6
    stop_patience: int = 500
    tau: float = 1e-6
    lambda_grid: Optional[tuple] = None
    delta_grid: tuple = DEFAULT_DELTA_GRID
    optimizer_kind: str = "adam"
    selection_criterion: str = "aic"
    # "refit": AIC log-likelihood from an unpenalised fit on each support
    aic_loss: str = "refit"
    seed: int = 0

    def __post_init__(self):
        if self.lambda_weight < 0:
            raise ValidationError("lambda_weight must be >= 0")
        if not self.eta0 > 0:
            raise ValidationError("eta0 must be > 0")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.stop_patience < 1:
            raise ValidationError("stop_patience must be >= 1")
        if self.optimizer_kind not in OPTIMIZERS:
            raise ValidationError(f"optimizer_kind must be one of {OPTIMIZERS}")
        if self.selection_criterion not in CRITERIA:
            raise ValidationError(f"selection_criterion must be one of {CRITERIA}")
        if self.aic_loss not in AIC_LOSSES:
            raise ValidationError(f"aic_loss must be one of {AIC_LOSSES}")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")
        if self.lambda_grid is not None:
            object.__setattr__(self, "lambda_grid", _check_grid(self.lambda_grid, "lambda_grid"))
            if self.lambda_grid[0] <= 0:
                raise ValidationError("lambda_grid values must be > 0")
        object.__setattr__(self, "delta_grid", _check_grid(self.delta_grid, "delta_grid"))
        if self.delta_grid[0] < 0 or self.delta_grid[-1] > 0.5:
            raise ValidationError("delta_grid values must lie in [0, 0.5]")

    def with_(self, **changes) -> "Hyperparams":
        return replace(self, **changes)

    def lambda_grid_for(self, n: int, k: int) -> tuple:
        return self.lambda_grid if self.lambda_grid is not None else default_lambda_grid(n, k)


def _check_grid(grid, name) -> tuple:
    grid = tuple(float(x) for x in grid)
    if not grid:
        raise ValidationError(f"{name} must be non-empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValidationError(f"{name} must be sorted ascending")
    return grid


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def validate_pair(net: Network, cov: CovariateMatrix) -> None:
    """Raise if ``net`` and ``cov`` do not form a valid data pair."""
    A = check_adjacency(net.adjacency)
    if np.isnan(cov.values).any():
        raise NonBinaryEntry("covariates contain NaN")
    check_covariates(cov.values, A.shape[0])


def center_columns(Z) -> np.ndarray:
    """Return J @ Z with J = I - 11'/n, i.e. every column has zero mean."""
    Z = np.asarray(Z, dtype=float)
    return Z - Z.mean(axis=0, keepdims=True)


def center_alpha(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return alpha - alpha.mean()


def diagonalize_covariance(Z, beta, rank_tol: float = 1e-12):
    """Rotate latent positions so that (1/n) Z'Z is diagonal.

    Returns ``(Z @ Q, Q.T @ beta, Q)`` with eigenvalues of (1/n) Z'Z in
    nonincreasing order. Each column of ``Q`` is signed so that its
    largest-magnitude entry is positive. Emits :class:`DegenerateCovariance`
    when Z'Z is rank deficient; the rotation is still returned.
    """
    Z = np.asarray(Z, dtype=float)
    beta = np.asarray(beta, dtype=float)
    n, k = Z.shape
    cov = Z.T @ Z / n
    evals, Q = np.linalg.eigh((cov + cov.T) / 2)
    order = np.argsort(-evals, kind="stable")
    evals, Q = evals[order], Q[:, order]
    pivot = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    Q = Q * signs
    if evals[-1] <= rank_tol * max(evals[0], 1.0):
        warnings.warn("latent covariance is rank deficient", DegenerateCovariance, stacklevel=2)
    return Z @ Q, Q.T @ beta, Q
