"""Exact mean and variance of the discounted return on a deterministic-reward
chain, and the two risk functionals built on them.

Per-state moments come from two linear systems derived from the recursion
Phi(x) = r(x) + gamma * Phi(Y), Y ~ P(x, .)::

    v   = r + gamma P v
    psi = u + gamma^2 P psi,   u = gamma^2 (P v^2 - (P v)^2)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .lumping import sat_fast_lump
from .model import DetChain, Mdp, Policy, RewardProcess, simplify_reward
from .sat import transform_process

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-10
VAR_CLAMP = 1e-10
PIPELINES = ("sat", "sat-lumped", "simplified")


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EvalResult:
    mean: float
    variance: float
    per_state_value: np.ndarray
    per_state_variance: np.ndarray
    pipeline: str
    states: Tuple[str, ...] = ()

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def mean_variance_risk(self, k: float) -> float:
        return mean_variance_risk(self.mean, self.variance, k)

    def utility_taylor(self, beta: float) -> float:
        return utility_taylor(self.mean, self.variance, beta)


def _solve(P: np.ndarray, b: np.ndarray, factor: float) -> np.ndarray:
    """Solve (I - factor * P) x = b; dense for small systems, fixed point otherwise."""
    n = len(b)
    if n <= DENSE_LIMIT:
        try:
            x = np.linalg.solve(np.eye(n) - factor * P, b)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"linear solve failed: {exc}") from None
    else:
        x = b.copy()
        for it in range(1_000_000):
            nxt = b + factor * (P @ x)
            if np.max(np.abs(nxt - x)) < 1e-12:
                x = nxt
                break
            x = nxt
        else:
            raise NumericalError("fixed-point iteration did not converge")
        log.debug("fixed-point solve converged after %d iterations", it + 1)
    resid = np.max(np.abs(x - factor * (P @ x) - b)) if n else 0.0
    if not np.isfinite(resid) or resid >= RESIDUAL_TOL * max(1.0, np.max(np.abs(b), initial=0.0)):
        raise NumericalError(f"linear solve residual {resid:.3e} too large")
    return x


def value_vector(chain: DetChain) -> np.ndarray:
    """Expected discounted return from each state, r(x) counted at the first epoch."""
    return _solve(chain.P, chain.reward, chain.gamma)


def variance_vector(chain: DetChain, v: np.ndarray) -> np.ndarray:
    """Return variance from each state, given its value vector ``v``."""
    g2 = chain.gamma ** 2
    Pv = chain.P @ v
    u = g2 * (chain.P @ (v * v) - Pv * Pv)
    # u >= 0 analytically (a conditional variance); clip round-off before solving
    u = np.where((u < 0) & (u > -VAR_CLAMP), 0.0, u)
    psi = _solve(chain.P, u, g2)
    if np.any(psi < -VAR_CLAMP):
        raise NumericalError(f"negative per-state variance {psi.min():.3e}")
    return np.maximum(psi, 0.0)


def _start_distribution(chain: DetChain) -> np.ndarray:
    if chain.reward_epoch_offset == 1:
        # first real reward is received on entering the state one step after the start
        return chain.initial @ chain.P
    return chain.initial


def return_moments(chain: DetChain) -> Tuple[float, float]:
    mean, var, _, _ = _moments(chain)
    return mean, var


def _moments(chain: DetChain):
    v = value_vector(chain)
    psi = variance_vector(chain, v)
    q = _start_distribution(chain)
    mean = float(q @ v)
    var = float(q @ (psi + v * v)) - mean * mean
    if var < 0.0:
        scale = max(1.0, mean * mean)
        if var < -VAR_CLAMP * scale:
            raise NumericalError(f"negative return variance {var:.3e}")
        var = 0.0
    return mean, var, v, psi


def evaluate_chain(chain: DetChain, pipeline: str) -> EvalResult:
    mean, var, v, psi = _moments(chain)
    return EvalResult(mean, var, v, psi, pipeline, chain.states)


def build_chain(mdp: Mdp, policy: Policy, pipeline: str) -> DetChain:
    if pipeline == "sat":
        return transform_process(mdp, policy)
    if pipeline == "sat-lumped":
        return sat_fast_lump(transform_process(mdp, policy)).merged_chain
    if pipeline == "simplified":
        return simplify_reward(mdp, policy)
    raise ValueError(f"unknown pipeline {pipeline!r}; choose from {PIPELINES}")


def evaluate(mdp: Mdp, policy: Policy, pipeline: str = "sat") -> EvalResult:
    """Exact return moments of ``mdp`` under ``policy`` through one pipeline."""
    return evaluate_chain(build_chain(mdp, policy, pipeline), pipeline)


def expected_value(process: RewardProcess) -> np.ndarray:
    """Per-state expected return of a stochastic-reward process; only the
    expected immediate reward matters for the mean."""
    return _solve(process.transition_matrix(), process.expected_reward(), process.gamma)


def mean_variance_risk(mean: float, variance: float, k: float) -> float:
    """E[Phi] - k * sd(Phi); risk-averse for k > 0."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    return mean - k * math.sqrt(variance)


def utility_taylor(mean: float, variance: float, beta: float) -> float:
    """Second-order expansion of the exponential utility around beta = 0.

    Accurate only for small |beta|; the dropped term is O(beta^2).
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    return mean + 0.5 * beta * variance
