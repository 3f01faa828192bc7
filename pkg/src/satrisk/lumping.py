"""Merging of isotopic states.

Two states are isotopic when they carry the same reward and send the same
probability to every *other* state. Merging one into the other leaves the
reward sequence, hence its whole distribution, unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import _kernels
from .model import DetChain
from .sat import Null, Situation

ROW_TOL = 1e-12


class LumpError(ValueError):
    pass


@dataclass(frozen=True)
class LumpReport:
    classes: Tuple[Tuple[str, ...], ...]  # representative first
    merged_chain: DetChain
    size_before: int
    size_after: int
    strategy: str

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "size_before": self.size_before,
            "size_after": self.size_after,
            "classes": [list(c) for c in self.classes],
        }


def _isotopic_idx(chain: DetChain, i: int, j: int, tol: float = ROW_TOL) -> bool:
    if chain.reward[i] != chain.reward[j]:
        return False
    mask = np.ones(chain.n, dtype=bool)
    mask[[i, j]] = False
    return bool(np.all(np.abs(chain.P[i, mask] - chain.P[j, mask]) <= tol))


def are_isotopic(chain: DetChain, xi: str, xj: str) -> bool:
    i, j = chain.index(xi), chain.index(xj)
    if i == j:
        raise LumpError(f"a state is not compared with itself ({xi!r})")
    return _isotopic_idx(chain, i, j)


def _merge(chain: DetChain, groups: Sequence[Sequence[int]]) -> DetChain:
    """Fold every group into its first member: columns and initial mass are
    summed, the representative's row is kept."""
    keep = np.ones(chain.n, dtype=bool)
    P = chain.P.copy()
    mu = chain.initial.copy()
    for group in groups:
        rep, rest = group[0], list(group[1:])
        if not rest:
            continue
        P[:, rep] += P[:, rest].sum(axis=1)
        mu[rep] += mu[rest].sum()
        keep[rest] = False
    idx = np.flatnonzero(keep)
    aug = None if chain.aug is None else tuple(chain.aug[k] for k in idx)
    return DetChain(
        tuple(chain.states[k] for k in idx),
        P[np.ix_(idx, idx)],
        chain.reward[idx],
        mu[idx],
        chain.gamma,
        chain.reward_epoch_offset,
        aug=aug,
    )


def lump_pair(chain: DetChain, xi: str, xj: str) -> DetChain:
    """Merge ``xj`` into ``xi``; refuses unless the two are isotopic."""
    if not are_isotopic(chain, xi, xj):
        raise LumpError(f"states {xi!r} and {xj!r} are not isotopic")
    return _merge(chain, [(chain.index(xi), chain.index(xj))])


def lump_all(chain: DetChain, backend: str = None) -> LumpReport:
    """Merge the first isotopic pair (in state order) until none is left."""
    kern = _kernels.get(backend)
    members: List[List[str]] = [[x] for x in chain.states]
    current = chain
    while True:
        i, j = kern.first_isotopic_pair(np.ascontiguousarray(current.P), current.reward, ROW_TOL)
        if i < 0:
            break
        current = _merge(current, [(i, j)])
        members[i].extend(members.pop(j))
    return LumpReport(tuple(tuple(m) for m in members), current, chain.n, current.n, "pairwise")


def _sat_key(s) -> Tuple[str, float]:
    if isinstance(s, Situation):
        return (s.landing, float(s.reward))
    if isinstance(s, Null):
        return (s.state, 0.0)
    raise LumpError(f"unrecognized augmented state {s!r}")


def sat_fast_lump(chain: DetChain) -> LumpReport:
    """One-pass lumping of a state-augmented chain by (landing state, reward).

    Outgoing rows of augmented states depend only on the landing state, so a
    shared key is sufficient for isotopy; each merge is still checked.
    """
    if chain.aug is None:
        raise LumpError("chain carries no augmented-state annotations")
    groups: Dict[Tuple[str, float], List[int]] = {}
    for k, s in enumerate(chain.aug):
        groups.setdefault(_sat_key(s), []).append(k)
    for group in groups.values():
        for k in group[1:]:
            if not _isotopic_idx(chain, group[0], k):
                raise LumpError(
                    f"{chain.states[group[0]]!r} and {chain.states[k]!r} share a key but are not isotopic"
                )
    ordered = sorted(groups.values(), key=lambda g: g[0])
    merged = _merge(chain, ordered)
    classes = tuple(tuple(chain.states[k] for k in g) for g in ordered)
    return LumpReport(classes, merged, chain.n, merged.n, "sat-key")
