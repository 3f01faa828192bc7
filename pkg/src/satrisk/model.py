"""Finite MDPs with stochastic transition-based rewards, policies and the
processes they induce.

The model file is YAML (JSON is accepted as a subset)::

    gamma: 0.9
    states: [s1, s2]
    actions: {s1: [a, b], s2: [a]}
    transitions:
      - {from: s1, action: a, to: s1, prob: 0.6}
    rewards:
      - {from: s1, action: a, to: s1, value: 1, prob: 1}
    initial: {s1: 1}
    policy: {s1: {a: 0.5, b: 0.5}, s2: {a: 1}}   # optional
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import jsonschema
import numpy as np
import yaml

PROB_TOL = 1e-9
# Sums closer to 1 than this are float noise and left untouched so that
# parse -> render -> parse is bit-identical.
_RENORM_FLOOR = 1e-12

State = str
Action = str


class ModelError(ValueError):
    """Base class for every problem found while reading or validating a model."""


class ModelSyntaxError(ModelError):
    pass


class ModelSchemaError(ModelError):
    pass


class InvariantError(ModelError):
    pass


class PolicyMismatchError(ModelError):
    pass


def _normalized(values: Dict, what: str) -> Dict:
    """Check that ``values`` sums to one; rescale if the residual is round-off."""
    for key, p in values.items():
        if not (p >= 0.0) or not math.isfinite(p):
            raise InvariantError(f"{what}: negative or non-finite probability {p!r} at {key!r}")
    total = math.fsum(values.values())
    residual = total - 1.0
    if abs(residual) >= PROB_TOL:
        raise InvariantError(f"{what}: probabilities sum to {total!r} (residual {residual:+.3e})")
    if abs(residual) > _RENORM_FLOOR:
        return {k: p / total for k, p in values.items()}
    return dict(values)


@dataclass(frozen=True)
class Mdp:
    states: Tuple[State, ...]
    actions: Mapping[State, Tuple[Action, ...]]
    reward_support: Tuple[float, ...]
    transition: Mapping[Tuple[State, Action, State], float]
    reward_dist: Mapping[Tuple[State, Action, State, float], float]
    initial: Mapping[State, float]
    gamma: float

    @classmethod
    def build(
        cls,
        states: Sequence[State],
        actions: Mapping[State, Sequence[Action]],
        transition: Mapping[Tuple[State, Action, State], float],
        reward_dist: Mapping[Tuple[State, Action, State, float], float],
        initial: Mapping[State, float],
        gamma: float,
        reward_support: Optional[Sequence[float]] = None,
    ) -> "Mdp":
        """Validate raw tables and return an immutable model.

        Zero-probability entries are dropped; row sums within ``PROB_TOL``
        of one are renormalized, anything further off raises
        :class:`InvariantError` naming the offending row.
        """
        states = tuple(states)
        if len(set(states)) != len(states):
            raise InvariantError("duplicate state identifiers")
        known = set(states)
        if not (0.0 < gamma < 1.0):
            raise InvariantError(f"gamma must lie in (0, 1), got {gamma!r}")

        acts: Dict[State, Tuple[Action, ...]] = {}
        for x in states:
            ax = tuple(actions.get(x, ()))
            if not ax:
                raise InvariantError(f"state {x!r} has an empty action set")
            if len(set(ax)) != len(ax):
                raise InvariantError(f"state {x!r} lists an action twice")
            acts[x] = ax
        for x in actions:
            if x not in known:
                raise InvariantError(f"actions given for unknown state {x!r}")

        rows: Dict[Tuple[State, Action], Dict[State, float]] = {(x, a): {} for x in states for a in acts[x]}
        for (x, a, y), p in transition.items():
            if (x, a) not in rows:
                raise InvariantError(f"transition from ({x!r}, {a!r}): unknown state or action")
            if y not in known:
                raise InvariantError(f"transition ({x!r}, {a!r}) -> {y!r}: unknown target state")
            p = float(p)
            if p < 0.0:
                raise InvariantError(f"transition ({x!r}, {a!r}, {y!r}) has negative probability")
            rows[(x, a)][y] = rows[(x, a)].get(y, 0.0) + p

        trans: Dict[Tuple[State, Action, State], float] = {}
        for (x, a), row in rows.items():
            row = _normalized(row, f"transition row ({x}, {a})")
            for y, p in row.items():
                if p > 0.0:
                    trans[(x, a, y)] = p

        rew_rows: Dict[Tuple[State, Action, State], Dict[float, float]] = {}
        for (x, a, y, j), p in reward_dist.items():
            key = (x, a, y)
            if (x, a) not in rows or y not in known:
                raise InvariantError(f"reward entry ({x!r}, {a!r}, {y!r}): unknown state or action")
            p = float(p)
            if p < 0.0:
                raise InvariantError(f"reward entry ({x!r}, {a!r}, {y!r}, {j!r}) has negative probability")
            row = rew_rows.setdefault(key, {})
            row[float(j)] = row.get(float(j), 0.0) + p

        rdist: Dict[Tuple[State, Action, State, float], float] = {}
        for key in trans:
            if key not in rew_rows:
                raise InvariantError(f"reward distribution missing for reachable transition {key}")
            row = _normalized(rew_rows[key], f"reward distribution {key}")
            for j, p in row.items():
                if p > 0.0:
                    rdist[key + (j,)] = p

        used = sorted({k[3] for k in rdist})
        if reward_support is None:
            support = tuple(used)
        else:
            support = tuple(float(j) for j in reward_support)
            missing = set(used) - set(support)
            if missing:
                raise InvariantError(f"reward values {sorted(missing)} are not in reward_support")

        for x in initial:
            if x not in known:
                raise InvariantError(f"initial mass on unknown state {x!r}")
        mu = _normalized({x: float(initial.get(x, 0.0)) for x in states}, "initial distribution")

        return cls(states, acts, support, trans, rdist, mu, float(gamma))

    @property
    def all_actions(self) -> Tuple[Action, ...]:
        seen: Dict[Action, None] = {}
        for x in self.states:
            for a in self.actions[x]:
                seen.setdefault(a)
        return tuple(seen)

    def successors(self, x: State, a: Action):
        """Yield ``(y, j, p(y|x,a) * d(j|x,a,y))`` over the positive support."""
        for y in self.states:
            p = self.transition.get((x, a, y), 0.0)
            if p == 0.0:
                continue
            for j in self.reward_support:
                q = self.reward_dist.get((x, a, y, j), 0.0)
                if q > 0.0:
                    yield y, j, p * q

    def with_gamma(self, gamma: float) -> "Mdp":
        if not (0.0 < gamma < 1.0):
            raise InvariantError(f"gamma must lie in (0, 1), got {gamma!r}")
        return Mdp(self.states, self.actions, self.reward_support, self.transition,
                   self.reward_dist, self.initial, float(gamma))


@dataclass(frozen=True)
class Policy:
    rule: Mapping[State, Mapping[Action, float]]

    def __call__(self, x: State) -> Mapping[Action, float]:
        return self.rule[x]

    @classmethod
    def uniform(cls, mdp: Mdp) -> "Policy":
        return cls({x: {a: 1.0 / len(mdp.actions[x]) for a in mdp.actions[x]} for x in mdp.states})

    def check(self, mdp: Mdp) -> "Policy":
        """Return a validated (and possibly renormalized) copy for ``mdp``."""
        rule = {}
        for x in mdp.states:
            if x not in self.rule:
                raise PolicyMismatchError(f"policy has no decision rule for state {x!r}")
            dist = {a: float(p) for a, p in self.rule[x].items()}
            for a, p in dist.items():
                if a not in mdp.actions[x] and p != 0.0:
                    raise PolicyMismatchError(f"policy puts mass on action {a!r} outside A({x!r})")
            dist = {a: p for a, p in dist.items() if a in mdp.actions[x]}
            try:
                rule[x] = _normalized(dist, f"policy at {x}")
            except InvariantError as exc:
                raise PolicyMismatchError(str(exc)) from None
        for x in self.rule:
            if x not in mdp.actions:
                raise PolicyMismatchError(f"policy names unknown state {x!r}")
        return Policy(rule)


@dataclass(frozen=True)
class OutcomeTable:
    """Flattened per-state outcome rows ``(next state, emitted reward, prob)``.

    Sampling and enumeration of both process kinds go through this table: the
    t-th transition out of the current state emits R_t.
    """

    start: np.ndarray       # (n_states,) initial distribution
    row_ptr: np.ndarray     # (n_states + 1,) CSR offsets into the outcome arrays
    prob: np.ndarray        # (n_outcomes,)
    next_state: np.ndarray  # (n_outcomes,) int64
    reward: np.ndarray      # (n_outcomes,)
    gamma: float

    @property
    def n_states(self) -> int:
        return len(self.start)

    @property
    def max_abs_reward(self) -> float:
        return float(np.max(np.abs(self.reward))) if len(self.reward) else 0.0

    def max_branching(self) -> int:
        return int(np.max(np.diff(self.row_ptr)))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _csr_table(start, rows, gamma) -> OutcomeTable:
    ptr = [0]
    prob, nxt, rew = [], [], []
    for row in rows:
        for y, j, p in row:
            nxt.append(y)
            rew.append(j)
            prob.append(p)
        ptr.append(len(prob))
    return OutcomeTable(
        _freeze(np.asarray(start, dtype=float)),
        _freeze(np.asarray(ptr, dtype=np.int64)),
        _freeze(np.asarray(prob, dtype=float)),
        _freeze(np.asarray(nxt, dtype=np.int64)),
        _freeze(np.asarray(rew, dtype=float)),
        float(gamma),
    )


@dataclass(frozen=True)
class RewardProcess:
    """Markov reward process with a stochastic reward on each transition."""

    states: Tuple[State, ...]
    transition: Mapping[Tuple[State, State], float]
    reward_dist: Mapping[Tuple[State, State, float], float]
    initial: Mapping[State, float]
    gamma: float

    def outcome_table(self) -> OutcomeTable:
        index = {x: i for i, x in enumerate(self.states)}
        by_pair: Dict[Tuple[State, State], list] = {}
        for (x, y, j), q in self.reward_dist.items():
            by_pair.setdefault((x, y), []).append((j, q))
        rows = []
        for x in self.states:
            row = []
            for y in self.states:
                p = self.transition.get((x, y), 0.0)
                if p == 0.0:
                    continue
                for j, q in sorted(by_pair[(x, y)]):
                    row.append((index[y], j, p * q))
            rows.append(row)
        return _csr_table([self.initial.get(x, 0.0) for x in self.states], rows, self.gamma)

    def expected_reward(self) -> np.ndarray:
        """E[R_t | X_t = x] for each state, in state order."""
        out = np.zeros(len(self.states))
        pos = {x: i for i, x in enumerate(self.states)}
        for (x, y, j), q in self.reward_dist.items():
            out[pos[x]] += self.transition[(x, y)] * q * j
        return out

    def transition_matrix(self) -> np.ndarray:
        pos = {x: i for i, x in enumerate(self.states)}
        P = np.zeros((len(self.states), len(self.states)))
        for (x, y), p in self.transition.items():
            P[pos[x], pos[y]] = p
        return P


@dataclass(frozen=True)
class DetChain:
    """Markov chain with a deterministic state-based reward.

    With ``reward_epoch_offset == 0`` the return is sum_t gamma^(t-1) r(X_t)
    starting from X_1 ~ initial. With offset 1 the chain starts in a
    zero-reward bookkeeping state and R_1 = r(X_2).
    """

    states: Tuple[str, ...]
    P: np.ndarray
    reward: np.ndarray
    initial: np.ndarray
    gamma: float
    reward_epoch_offset: int = 0
    # Augmented-state annotation per state; set on SAT images only.
    aug: Optional[Tuple["object", ...]] = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.states)
        object.__setattr__(self, "P", _freeze(np.asarray(self.P, dtype=float)))
        object.__setattr__(self, "reward", _freeze(np.asarray(self.reward, dtype=float)))
        object.__setattr__(self, "initial", _freeze(np.asarray(self.initial, dtype=float)))
        if self.P.shape != (n, n) or self.reward.shape != (n,) or self.initial.shape != (n,):
            raise InvariantError("chain arrays do not match the number of states")
        if len(set(self.states)) != n:
            raise InvariantError("duplicate chain state identifiers")
        if not (0.0 < self.gamma < 1.0):
            raise InvariantError(f"gamma must lie in (0, 1), got {self.gamma!r}")
        if self.reward_epoch_offset not in (0, 1):
            raise InvariantError("reward_epoch_offset must be 0 or 1")
        if np.any(self.P < 0) or np.any(self.initial < 0):
            raise InvariantError("negative probability in chain")
        res = np.abs(self.P.sum(axis=1) - 1.0)
        if n and res.max() >= PROB_TOL:
            bad = int(res.argmax())
            raise InvariantError(f"chain row {self.states[bad]!r} sums to {self.P[bad].sum()!r}")
        if abs(self.initial.sum() - 1.0) >= PROB_TOL:
            raise InvariantError(f"chain initial distribution sums to {self.initial.sum()!r}")
        if self.reward_epoch_offset == 1 and np.any(self.reward[self.initial > 0] != 0.0):
            raise InvariantError("offset-1 chain has a start state with nonzero reward")
        if self.aug is not None and len(self.aug) != n:
            raise InvariantError("aug annotation length mismatch")

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, x: str) -> int:
        try:
            return self.states.index(x)
        except ValueError:
            raise KeyError(f"unknown chain state {x!r}") from None

    def outcome_table(self) -> OutcomeTable:
        rows = []
        for i in range(self.n):
            targets = np.flatnonzero(self.P[i] > 0.0)
            if self.reward_epoch_offset == 1:
                rows.append([(int(y), float(self.reward[y]), float(self.P[i, y])) for y in targets])
            else:
                rows.append([(int(y), float(self.reward[i]), float(self.P[i, y])) for y in targets])
        return _csr_table(self.initial, rows, self.gamma)


def induce(mdp: Mdp, policy: Policy) -> RewardProcess:
    """Fold a stationary randomized policy into the MDP."""
    pol = policy.check(mdp)
    trans: Dict[Tuple[State, State], float] = {}
    joint: Dict[Tuple[State, State, float], float] = {}
    for x in mdp.states:
        for a, w in pol.rule[x].items():
            if w == 0.0:
                continue
            for y in mdp.states:
                p = mdp.transition.get((x, a, y), 0.0)
                if p > 0.0:
                    trans[(x, y)] = trans.get((x, y), 0.0) + w * p
            for y, j, q in mdp.successors(x, a):
                joint[(x, y, j)] = joint.get((x, y, j), 0.0) + w * q
    rdist = {(x, y, j): q / trans[(x, y)] for (x, y, j), q in joint.items() if trans[(x, y)] > 0.0}
    return RewardProcess(mdp.states, trans, rdist, dict(mdp.initial), mdp.gamma)


def simplify_reward(mdp: Mdp, policy: Policy) -> DetChain:
    """Replace each stochastic reward by its policy-conditional expectation.

    This is the naive baseline: the return mean survives, the variance does not.
    """
    proc = induce(mdp, policy)
    return DetChain(
        tuple(mdp.states),
        proc.transition_matrix(),
        proc.expected_reward(),
        np.array([mdp.initial[x] for x in mdp.states]),
        mdp.gamma,
        reward_epoch_offset=0,
    )


# --------------------------------------------------------------------------
# model files

_NUM = {"type": ["number", "string"]}
_SCHEMA = {
    "type": "object",
    "required": ["gamma", "states", "actions", "transitions", "rewards", "initial"],
    "additionalProperties": False,
    "properties": {
        "gamma": _NUM,
        "states": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "actions": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "string"}},
        },
        "reward_support": {"type": "array", "items": _NUM},
        "transitions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "action", "to", "prob"],
                "additionalProperties": False,
                "properties": {"from": {"type": "string"}, "action": {"type": "string"},
                               "to": {"type": "string"}, "prob": _NUM},
            },
        },
        "rewards": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "action", "to", "value", "prob"],
                "additionalProperties": False,
                "properties": {"from": {"type": "string"}, "action": {"type": "string"},
                               "to": {"type": "string"}, "value": _NUM, "prob": _NUM},
            },
        },
        "initial": {"type": "object", "additionalProperties": _NUM},
        "policy": {"type": "object", "additionalProperties": {"type": "object", "additionalProperties": _NUM}},
    },
}
_POLICY_SCHEMA = {"type": "object", "additionalProperties": {"type": "object", "additionalProperties": _NUM}}


def _num(value, path: str) -> float:
    # YAML 1.1 reads "1e-3" as a string, so numeric strings are accepted.
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ModelSchemaError(f"{path}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ModelSchemaError(f"{path}: non-finite number {value!r}")
    return out


def _stringify_keys(obj):
    # YAML happily produces int/bool keys ("1: 0.5"); identifiers are strings.
    if isinstance(obj, dict):
        return {(k if isinstance(k, str) else str(k)): _stringify_keys(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_stringify_keys(v) for v in obj]
    return obj


def _load(text: str, schema: dict):
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ModelSyntaxError(f"syntax error at {where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ModelSyntaxError(f"syntax error: {exc}") from None
    doc = _stringify_keys(doc)
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelSchemaError(f"{path}: {exc.message}") from None
    return doc


def _policy_from_doc(doc: dict, where: str) -> Policy:
    return Policy({x: {a: _num(p, f"{where}/{x}/{a}") for a, p in row.items()} for x, row in doc.items()})


def parse_model(text: str) -> Tuple[Mdp, Optional[Policy]]:
    """Parse and validate a model file; returns the MDP and its policy, if any."""
    doc = _load(text, _SCHEMA)
    trans: Dict[Tuple[str, str, str], float] = {}
    for i, t in enumerate(doc["transitions"]):
        key = (t["from"], t["action"], t["to"])
        trans[key] = trans.get(key, 0.0) + _num(t["prob"], f"transitions/{i}/prob")
    rdist: Dict[Tuple[str, str, str, float], float] = {}
    for i, r in enumerate(doc["rewards"]):
        key = (r["from"], r["action"], r["to"], _num(r["value"], f"rewards/{i}/value"))
        rdist[key] = rdist.get(key, 0.0) + _num(r["prob"], f"rewards/{i}/prob")
    support = None
    if "reward_support" in doc:
        support = [_num(j, f"reward_support/{i}") for i, j in enumerate(doc["reward_support"])]
    mdp = Mdp.build(
        doc["states"],
        doc["actions"],
        trans,
        rdist,
        {x: _num(p, f"initial/{x}") for x, p in doc["initial"].items()},
        _num(doc["gamma"], "gamma"),
        reward_support=support,
    )
    policy = None
    if "policy" in doc:
        policy = _policy_from_doc(doc["policy"], "policy").check(mdp)
    return mdp, policy


def parse_policy(text: str, mdp: Mdp) -> Policy:
    """Parse a standalone policy file (``state -> action -> prob``)."""
    doc = _load(text, _POLICY_SCHEMA)
    return _policy_from_doc(doc, "policy").check(mdp)


def model_document(mdp: Mdp, policy: Optional[Policy] = None) -> dict:
    doc = {
        "gamma": mdp.gamma,
        "states": list(mdp.states),
        "actions": {x: list(mdp.actions[x]) for x in mdp.states},
        "reward_support": list(mdp.reward_support),
        "transitions": [{"from": x, "action": a, "to": y, "prob": p} for (x, a, y), p in mdp.transition.items()],
        "rewards": [
            {"from": x, "action": a, "to": y, "value": j, "prob": p}
            for (x, a, y, j), p in mdp.reward_dist.items()
        ],
        "initial": {x: mdp.initial[x] for x in mdp.states},
    }
    if policy is not None:
        doc["policy"] = {x: dict(policy.rule[x]) for x in mdp.states}
    return doc


def render_model(mdp: Mdp, policy: Optional[Policy] = None) -> str:
    return yaml.safe_dump(model_document(mdp, policy), sort_keys=False, default_flow_style=None)


def chain_to_mdp(chain: DetChain, action: str = "pi") -> Tuple[Mdp, Policy]:
    """Express a deterministic-reward chain as a one-action MDP.

    The emitted transition reward is r(next) for offset-1 chains and r(current)
    otherwise, so the induced return distribution equals the chain's.
    """
    trans, rdist = {}, {}
    for i, x in enumerate(chain.states):
        for k in np.flatnonzero(chain.P[i] > 0.0):
            y = chain.states[k]
            trans[(x, action, y)] = float(chain.P[i, k])
            j = chain.reward[k] if chain.reward_epoch_offset == 1 else chain.reward[i]
            rdist[(x, action, y, float(j))] = 1.0
    support = sorted(set(float(r) for r in chain.reward) | {float(k[3]) for k in rdist})
    mdp = Mdp.build(chain.states, {x: [action] for x in chain.states}, trans, rdist,
                    {x: float(m) for x, m in zip(chain.states, chain.initial)}, chain.gamma,
                    reward_support=support)
    return mdp, Policy({x: {action: 1.0} for x in chain.states})
