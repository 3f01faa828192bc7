"""Monte-Carlo sampling of truncated discounted returns, the grouped empirical
risk estimators, and exact finite-horizon oracles.

Group ``i`` owns a Philox stream keyed by ``SeedSequence([seed, i])``;
simulation ``t`` of that group consumes row ``t`` of the group's
``(M, N + 1)`` block of uniforms. Results therefore do not depend on
execution order, worker count or kernel backend.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from . import _kernels
from .model import DetChain, OutcomeTable, RewardProcess

Process = Union[RewardProcess, DetChain]

ATOM_TOL = 1e-12
MAX_BRANCHING = 12
MAX_ENUM_HORIZON = 10
MAX_DP_HORIZON = 400
MAX_ATOMS = 2_000_000


class TractabilityError(RuntimeError):
    pass


def _table(process) -> OutcomeTable:
    return process if isinstance(process, OutcomeTable) else process.outcome_table()


def _cumulative(p: np.ndarray) -> np.ndarray:
    # The last positive entry is pinned to 1 so that a uniform in [0, 1)
    # can never fall past the support through round-off.
    c = np.cumsum(p)
    pos = np.flatnonzero(p > 0)
    if len(pos):
        c[pos[-1]:] = 1.0
    return c


@dataclass(frozen=True)
class _Sampler:
    start_cum: np.ndarray
    row_ptr: np.ndarray
    cum: np.ndarray
    next_state: np.ndarray
    reward: np.ndarray
    gamma: float

    @classmethod
    def of(cls, process) -> "_Sampler":
        tab = _table(process)
        cum = np.empty_like(tab.prob)
        for s in range(tab.n_states):
            lo, hi = tab.row_ptr[s], tab.row_ptr[s + 1]
            if hi == lo:
                raise ValueError(f"state index {s} has no outgoing transition")
            cum[lo:hi] = _cumulative(tab.prob[lo:hi])
        return cls(_cumulative(tab.start), np.ascontiguousarray(tab.row_ptr), cum,
                   np.ascontiguousarray(tab.next_state), np.ascontiguousarray(tab.reward), tab.gamma)

    def walk(self, uniforms: np.ndarray, backend: Optional[str] = None) -> np.ndarray:
        kern = _kernels.get(backend)
        return kern.walk_returns(self.start_cum, self.row_ptr, self.cum, self.next_state,
                                 self.reward, self.gamma, np.ascontiguousarray(uniforms))


def group_stream(seed: int, group: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, group])))


def group_uniforms(seed: int, group: int, M: int, N: int) -> np.ndarray:
    """Uniforms for ``M`` simulations of horizon ``N``; row ``t`` drives simulation ``t``."""
    return group_stream(seed, group).random((M, N + 1))


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed


def sample_return(process: Process, horizon: int, rng: np.random.Generator, backend: Optional[str] = None) -> float:
    """One truncated discounted return sum_{t<=N} gamma^(t-1) R_t."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    u = rng.random((1, horizon + 1))
    return float(_Sampler.of(process).walk(u, backend)[0])


@dataclass(frozen=True)
class SampleGroups:
    returns: np.ndarray  # (L, M)
    horizon: int
    seed: int
    process_tag: str

    @property
    def L(self) -> int:
        return self.returns.shape[0]

    @property
    def M(self) -> int:
        return self.returns.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("group,sim,return\n")
        for i in range(self.L):
            for t in range(self.M):
                buf.write(f"{i},{t},{self.returns[i, t]:.12g}\n")
        return buf.getvalue()


def run_groups(process: Process, L: int, M: int, N: int, seed: int, *,
               backend: Optional[str] = None, workers: int = 1, tag: Optional[str] = None) -> SampleGroups:
    """Simulate ``L`` groups of ``M`` trajectories truncated at horizon ``N``."""
    if min(L, M, N) < 1:
        raise ValueError("L, M and N must all be >= 1")
    seed = _check_seed(seed)
    sampler = _Sampler.of(process)

    def group(i: int) -> np.ndarray:
        return sampler.walk(group_uniforms(seed, i, M, N), backend)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(group, range(L)))
    else:
        rows = [group(i) for i in range(L)]
    if tag is None:
        tag = "original" if isinstance(process, RewardProcess) else "chain"
    out = np.vstack(rows)
    out.setflags(write=False)
    return SampleGroups(out, N, seed, tag)


def _aggregate(per_group: np.ndarray) -> Tuple[float, float]:
    L = len(per_group)
    est = float(per_group.mean())
    err = float(per_group.std(ddof=1) / math.sqrt(L)) if L > 1 else float("nan")
    return est, err


def group_mean_variance(groups: SampleGroups, k: float) -> np.ndarray:
    if groups.M < 2:
        raise ValueError("at least two simulations per group are needed for a standard deviation")
    r = groups.returns
    return r.mean(axis=1) - k * r.std(axis=1, ddof=1)


def empirical_mean_variance(groups: SampleGroups, k: float) -> Tuple[float, float]:
    """Average over groups of (group mean - k * group sample sd), with its
    standard error (sd across groups / sqrt(L))."""
    return _aggregate(group_mean_variance(groups, k))


def group_utility(groups: SampleGroups, beta: float) -> np.ndarray:
    r = groups.returns
    if np.isnan(r).any() or math.isnan(beta):
        raise ValueError("NaN in utility input")
    if beta == 0.0:
        return r.mean(axis=1)
    z = beta * r
    top = z.max(axis=1)
    return (top + np.log(np.exp(z - top[:, None]).mean(axis=1))) / beta


def empirical_utility(groups: SampleGroups, beta: float) -> Tuple[float, float]:
    """Grouped log-mean-exp estimate of the exponential utility; the sample
    mean (its beta -> 0 limit) at beta = 0."""
    return _aggregate(group_utility(groups, beta))


# --------------------------------------------------------------------------
# exact oracles


@dataclass(frozen=True)
class TruncatedDistribution:
    atoms: Dict[float, float]
    horizon: int

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in self.atoms.items())

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(p * (v - m) ** 2 for v, p in self.atoms.items())

    def to_csv(self) -> str:
        lines = ["value,probability"]
        lines += [f"{v:.12g},{p:.12g}" for v, p in sorted(self.atoms.items())]
        return "\n".join(lines) + "\n"


def _merge_atoms(values: np.ndarray, probs: np.ndarray, tol: float = ATOM_TOL):
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    if len(values) == 0:
        return values, probs
    # a new atom starts wherever the gap to the previous value exceeds tol
    starts = np.concatenate(([True], np.diff(values) > tol))
    ids = np.cumsum(starts) - 1
    merged_p = np.bincount(ids, weights=probs)
    return values[starts], merged_p


def enumerate_truncated(process: Process, horizon: int, max_atoms: int = MAX_ATOMS) -> TruncatedDistribution:
    """Exact distribution of the return truncated at ``horizon``.

    Dynamic programming over (state, accumulated return); returns closer than
    ``ATOM_TOL`` are merged.
    """
    tab = _table(process)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if isinstance(process, RewardProcess):
        if tab.max_branching() > MAX_BRANCHING or horizon > MAX_ENUM_HORIZON:
            raise TractabilityError(
                f"enumeration limited to branching <= {MAX_BRANCHING} and N <= {MAX_ENUM_HORIZON}"
            )
    elif horizon > MAX_DP_HORIZON:
        raise TractabilityError(f"enumeration limited to N <= {MAX_DP_HORIZON}")

    live = [(np.zeros(1), np.array([m])) if m > 0 else None for m in tab.start]
    disc = 1.0
    for _ in range(horizon):
        nxt_v = [[] for _ in range(tab.n_states)]
        nxt_p = [[] for _ in range(tab.n_states)]
        for s, atoms in enumerate(live):
            if atoms is None:
                continue
            vals, probs = atoms
            for o in range(tab.row_ptr[s], tab.row_ptr[s + 1]):
                y = tab.next_state[o]
                nxt_v[y].append(vals + disc * tab.reward[o])
                nxt_p[y].append(probs * tab.prob[o])
        live = []
        total = 0
        for y in range(tab.n_states):
            if nxt_v[y]:
                v, p = _merge_atoms(np.concatenate(nxt_v[y]), np.concatenate(nxt_p[y]))
                live.append((v, p))
                total += len(v)
            else:
                live.append(None)
        if total > max_atoms:
            raise TractabilityError(f"more than {max_atoms} live atoms")
        disc *= tab.gamma
    vals = np.concatenate([a[0] for a in live if a is not None])
    probs = np.concatenate([a[1] for a in live if a is not None])
    v, p = _merge_atoms(vals, probs)
    return TruncatedDistribution({float(a): float(b) for a, b in zip(v, p)}, horizon)


def truncated_moments(process: Process, horizon: int) -> Tuple[float, float]:
    """Exact mean and variance of the truncated return by forward propagation
    of per-state partial moments E[Phi_t^k ; X_t = x], k = 0, 1, 2."""
    tab = _table(process)
    src = np.repeat(np.arange(tab.n_states), np.diff(tab.row_ptr))
    n = tab.n_states
    m0 = tab.start.astype(float).copy()
    m1 = np.zeros(n)
    m2 = np.zeros(n)
    disc = 1.0
    for _ in range(horizon):
        p = tab.prob
        c = disc * tab.reward
        a0 = p * m0[src]
        a1 = p * (m1[src] + c * m0[src])
        a2 = p * (m2[src] + 2.0 * c * m1[src] + c * c * m0[src])
        m0 = np.bincount(tab.next_state, weights=a0, minlength=n)
        m1 = np.bincount(tab.next_state, weights=a1, minlength=n)
        m2 = np.bincount(tab.next_state, weights=a2, minlength=n)
        disc *= tab.gamma
    mean = float(m1.sum())
    return mean, max(float(m2.sum()) - mean * mean, 0.0)


def truncation_bound(gamma: float, max_abs_reward: float, horizon: int) -> float:
    """Bound on |E[Phi] - E[Phi_N]| from the discarded tail."""
    return gamma ** horizon * max_abs_reward / (1.0 - gamma)


def default_horizon(gamma: float, max_abs_reward: float, tol: float = 1e-7) -> int:
    """Smallest N whose tail bound is below ``tol``."""
    if max_abs_reward == 0:
        return 1
    return max(1, math.ceil(math.log(tol * (1 - gamma) / max_abs_reward) / math.log(gamma)))
