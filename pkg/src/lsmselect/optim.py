"""First-order updates for (Z, alpha) and the cosine step-size schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import OPTIMIZERS, LatentState
from .objective import Gradients

# below this squared Frobenius norm eta_Z falls back to eta_t
_NORM_GUARD = 1e-12


def cosine_anneal(eta0: float, t: int, T: int, eta_min: float = 0.0) -> float:
    """Cosine-annealed rate: eta0 at t = 0, eta_min at t = T."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 <= t <= T:
        raise ValueError(f"t must lie in [0, {T}], got {t}")
    return eta_min + 0.5 * (eta0 - eta_min) * (1.0 + math.cos(math.pi * t / T))


@dataclass(frozen=True)
class StepSizes:
    eta_t: float
    eta_Z: float
    eta_alpha: float


def step_sizes(eta_t: float, Z, n: int) -> StepSizes:
    """Parameter-specific rates eta_t / ||Z||_F^2 and eta_t / (2n)."""
    if eta_t < 0:
        raise ValueError("eta_t must be >= 0")
    sq = float(np.sum(np.square(Z)))
    eta_Z = eta_t / sq if sq >= _NORM_GUARD else eta_t
    return StepSizes(eta_t=eta_t, eta_Z=eta_Z, eta_alpha=eta_t / (2.0 * n))


@dataclass(frozen=True)
class OptimizerState:
    """Moment accumulators for (Z, alpha).

    For ADAM, ``first_moment``/``second_moment`` hold (m, v) pairs keyed as
    ``(Z, alpha)``; for Adagrad ``accumulator`` holds the running sums of
    squared gradients.
    """

    kind: str
    first_moment: tuple
    second_moment: tuple
    accumulator: tuple
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, kind: str, n: int, k: int, **constants) -> "OptimizerState":
        if kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")
        zeros = (np.zeros((n, k)), np.zeros(n))
        if kind == "adam":
            return cls(kind, zeros, tuple(np.zeros_like(z) for z in zeros), (), **constants)
        return cls(kind, (), (), zeros, **constants)


def _adam(x, g, m, v, t, eta, opt):
    m = opt.beta1 * m + (1.0 - opt.beta1) * g
    v = opt.beta2 * v + (1.0 - opt.beta2) * g * g
    m_hat = m / (1.0 - opt.beta1 ** t)
    v_hat = v / (1.0 - opt.beta2 ** t)
    return x - eta * m_hat / (np.sqrt(v_hat) + opt.epsilon), m, v


def _adagrad(x, g, G, eta, opt):
    G = G + g * g
    return x - eta * g / (np.sqrt(G) + opt.epsilon), G


def apply_step(state: LatentState, grads: Gradients, opt: OptimizerState,
               sizes: StepSizes):
    """One optimizer step on (Z, alpha); beta and gamma are left untouched.

    Returns the new ``(LatentState, OptimizerState)``; inputs are not modified.
    """
    t = opt.step_count + 1
    params = (state.Z, state.alpha)
    g = (grads.dZ, grads.dAlpha)
    etas = (sizes.eta_Z, sizes.eta_alpha)
    if opt.kind == "adam":
        out = [_adam(x, gi, m, v, t, eta, opt)
               for x, gi, m, v, eta in zip(params, g, opt.first_moment, opt.second_moment, etas)]
        new_opt = replace(opt, step_count=t,
                          first_moment=tuple(o[1] for o in out),
                          second_moment=tuple(o[2] for o in out))
    else:
        out = [_adagrad(x, gi, G, eta, opt) for x, gi, G, eta in zip(params, g, opt.accumulator, etas)]
        new_opt = replace(opt, step_count=t, accumulator=tuple(o[1] for o in out))
    return state.with_(Z=out[0][0], alpha=out[1][0]), new_opt
