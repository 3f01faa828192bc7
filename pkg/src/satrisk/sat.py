"""State augmentation: turn transition-based stochastic rewards into a
deterministic state-based reward on situations ``(prev, action, landing, reward)``.

Only situations with positive probability are materialized. Every original
state ``x`` also gets a zero-reward start state ``Null(x)`` carrying the
initial mass of ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Tuple, Union

import numpy as np

from .model import DetChain, InvariantError, Mdp, Policy


class Situation(NamedTuple):
    prev: str
    action: str
    landing: str
    reward: float

    @property
    def anchor(self) -> str:
        return self.landing

    @property
    def label(self) -> str:
        return f"{self.prev}-{self.action}-{self.landing}-{format_reward(self.reward)}"


class Null(NamedTuple):
    state: str

    @property
    def anchor(self) -> str:
        return self.state

    @property
    def label(self) -> str:
        return f"null-{self.state}"


AugState = Union[Situation, Null]


def format_reward(j: float) -> str:
    return str(int(j)) if float(j).is_integer() else repr(float(j))


def state_reward(s: AugState) -> float:
    return s.reward if isinstance(s, Situation) else 0.0


@dataclass(frozen=True)
class AugMdp:
    """Augmented MDP over string labels, plus the map back to situations.

    ``mdp.reward_dist`` puts a point mass on ``r(y)`` for every transition into
    ``y``, i.e. the reward is received on entering the augmented state.
    """

    mdp: Mdp
    aug_states: Tuple[AugState, ...]
    back_map: Mapping[str, AugState]
    source: Mdp

    def reward(self, label: str) -> float:
        return state_reward(self.back_map[label])


def _situations(mdp: Mdp, y: str) -> List[Tuple[str, Situation, float]]:
    """Outgoing (action, situation, p*d) for any augmented state anchored at y."""
    out = []
    for a in mdp.actions[y]:
        for z, j, q in mdp.successors(y, a):
            out.append((a, Situation(y, a, z, j), q))
    return out


def transform_mdp(mdp: Mdp, prune_nulls: bool = False) -> AugMdp:
    """Build the augmented MDP.

    With ``prune_nulls`` the start states of zero-initial-mass states are
    left out (they are unreachable).
    """
    tuples: Dict[Situation, None] = {}
    outgoing = {}
    for y in mdp.states:
        outgoing[y] = _situations(mdp, y)
        for _, s, _ in outgoing[y]:
            tuples.setdefault(s)
    nulls = [Null(x) for x in mdp.states if not prune_nulls or mdp.initial[x] > 0.0]
    aug_states: Tuple[AugState, ...] = tuple(tuples) + tuple(nulls)

    back_map = {s.label: s for s in aug_states}
    if len(back_map) != len(aug_states):
        raise InvariantError("augmented state labels collide; rename states or actions without '-'")

    actions, trans, rdist = {}, {}, {}
    for s in aug_states:
        y = s.anchor
        actions[s.label] = mdp.actions[y]
        for a, t, q in outgoing[y]:
            key = (s.label, a, t.label)
            trans[key] = trans.get(key, 0.0) + q
            rdist[key + (t.reward,)] = 1.0
    initial = {n.label: mdp.initial[n.state] for n in nulls}
    support = sorted(set(mdp.reward_support) | {0.0})
    aug = Mdp.build([s.label for s in aug_states], actions, trans, rdist, initial, mdp.gamma,
                    reward_support=support)
    return AugMdp(aug, aug_states, back_map, mdp)


def lift_policy(aug: AugMdp, policy: Policy) -> Policy:
    """Act in each augmented state as the original policy acts in its anchor."""
    pol = policy.check(aug.source)
    return Policy({label: dict(pol.rule[s.anchor]) for label, s in aug.back_map.items()})


def transform_process(mdp: Mdp, policy: Policy, prune_nulls: bool = False) -> DetChain:
    """Deterministic-reward chain induced by the augmented MDP and lifted policy."""
    aug = transform_mdp(mdp, prune_nulls=prune_nulls)
    lifted = lift_policy(aug, policy)
    labels = aug.mdp.states
    index = {x: i for i, x in enumerate(labels)}
    n = len(labels)
    P = np.zeros((n, n))
    for (x, a, y), p in aug.mdp.transition.items():
        w = lifted.rule[x].get(a, 0.0)
        if w:
            P[index[x], index[y]] += w * p
    reward = np.array([state_reward(s) for s in aug.aug_states])
    initial = np.array([aug.mdp.initial[x] for x in labels])
    return DetChain(labels, P, reward, initial, mdp.gamma, reward_epoch_offset=1, aug=aug.aug_states)
