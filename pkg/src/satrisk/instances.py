"""Reference fixtures and random small instances."""
from __future__ import annotations

from importlib import resources
from typing import Optional, Tuple

import numpy as np

from .model import Mdp, Policy, parse_model

FIXTURES = {"ref1": "ref1.yaml", "ref2": "ref2.yaml"}


def fixture_text(name: str) -> str:
    return resources.files("satrisk").joinpath("fixtures", FIXTURES[name.lower().replace("-", "")]).read_text()


def load_fixture(name: str) -> Tuple[Mdp, Policy]:
    mdp, policy = parse_model(fixture_text(name))
    return mdp, policy


def _simplex(rng: np.random.Generator, n: int, sparse: bool) -> np.ndarray:
    w = rng.dirichlet(np.ones(n))
    if sparse and n > 1:
        keep = rng.random(n) < 0.7
        keep[rng.integers(n)] = True
        w = np.where(keep, w, 0.0)
        w /= w.sum()
    return w


def random_instance(
    rng: np.random.Generator,
    max_states: int = 3,
    max_actions: int = 2,
    max_rewards: int = 2,
    gamma: float = 0.5,
    full_support: bool = False,
    n_states: Optional[int] = None,
) -> Tuple[Mdp, Policy]:
    """Random MDP and randomized policy; ``full_support`` makes every
    (x, a, y, j) situation reachable."""
    nS = n_states or int(rng.integers(1, max_states + 1))
    states = [f"x{i}" for i in range(nS)]
    nJ = max_rewards if full_support else int(rng.integers(1, max_rewards + 1))
    support = sorted(set(np.round(rng.uniform(-3, 3, size=nJ), 3).tolist()))
    while len(support) < nJ:
        support = sorted(set(support) | {round(float(rng.uniform(-3, 3)), 3)})
    actions, trans, rdist, policy = {}, {}, {}, {}
    for x in states:
        nA = max_actions if full_support else int(rng.integers(1, max_actions + 1))
        actions[x] = [f"a{k}" for k in range(nA)]
        policy[x] = dict(zip(actions[x], _simplex(rng, nA, sparse=False).tolist()))
        for a in actions[x]:
            p = _simplex(rng, nS, sparse=not full_support)
            for y, py in zip(states, p):
                if py == 0:
                    continue
                trans[(x, a, y)] = float(py)
                d = _simplex(rng, len(support), sparse=not full_support)
                for j, q in zip(support, d):
                    if q > 0:
                        rdist[(x, a, y, j)] = float(q)
    mu = _simplex(rng, nS, sparse=True)
    mdp = Mdp.build(states, actions, trans, rdist, dict(zip(states, mu.tolist())), gamma, reward_support=support)
    return mdp, Policy(policy).check(mdp)
