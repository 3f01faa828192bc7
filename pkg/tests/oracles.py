"""Brute-force oracles that bypass the package's process machinery.

They read the raw MDP/policy tables (or a chain's P and r) and enumerate
reward sequences explicitly.
"""
from collections import defaultdict
from fractions import Fraction

import numpy as np

# REF-2 exact return moments, from a rational second-moment recursion on the
# original two-state process (no augmentation involved).
REF2_MEAN = Fraction(301, 34)
REF2_VAR = Fraction(4092091, 382636)


def sequence_dist_mdp(mdp, policy, N):
    """Exact law of (R_1, ..., R_N) for ``mdp`` under ``policy``."""
    live = {(x, ()): m for x, m in mdp.initial.items() if m > 0}
    for _ in range(N):
        nxt = defaultdict(float)
        for (x, seq), m in live.items():
            for a, w in policy.rule[x].items():
                if w == 0:
                    continue
                for (x0, a0, y), p in mdp.transition.items():
                    if x0 != x or a0 != a:
                        continue
                    for (x1, a1, y1, j), q in mdp.reward_dist.items():
                        if (x1, a1, y1) == (x, a, y):
                            nxt[(y, seq + (j,))] += m * w * p * q
        live = nxt
    out = defaultdict(float)
    for (_, seq), m in live.items():
        out[seq] += m
    return dict(out)


def sequence_dist_chain(chain, N):
    """Exact law of (R_1, ..., R_N) for a deterministic-reward chain."""
    P, r = chain.P, chain.reward
    live = {(i, ()): m for i, m in enumerate(chain.initial) if m > 0}
    for _ in range(N):
        nxt = defaultdict(float)
        for (i, seq), m in live.items():
            for k in np.flatnonzero(P[i] > 0):
                j = r[k] if chain.reward_epoch_offset == 1 else r[i]
                nxt[(int(k), seq + (float(j),))] += m * P[i, k]
        live = nxt
    out = defaultdict(float)
    for (_, seq), m in live.items():
        out[seq] += m
    return dict(out)


def return_dist(seq_dist, gamma):
    """Collapse a sequence law into the law of sum_t gamma^(t-1) R_t."""
    out = defaultdict(float)
    for seq, m in seq_dist.items():
        phi, disc = 0.0, 1.0
        for j in seq:
            phi += disc * j
            disc *= gamma
        out[round(phi, 11)] += m
    return dict(out)


def dists_match(a, b, tol=1e-12):
    if set(a) != set(b):
        return False
    return all(abs(a[k] - b[k]) <= tol for k in a)


def atoms_match(a: dict, b: dict, tol=1e-12):
    """Atom-by-atom comparison of two {value: prob} maps with value tolerance."""
    ka, kb = sorted(a), sorted(b)
    if len(ka) != len(kb):
        return False
    return all(abs(x - y) <= tol and abs(a[x] - b[y]) <= tol for x, y in zip(ka, kb))


def moments_from(dist):
    mean = sum(v * p for v, p in dist.items())
    var = sum(p * (v - mean) ** 2 for v, p in dist.items())
    return mean, var


def expected_reward_brute(mdp, policy, x):
    return sum(
        j * policy.rule[x].get(a, 0.0) * mdp.transition[(x0, a, y)] * q
        for (x0, a, y, j), q in mdp.reward_dist.items()
        if x0 == x
    )
