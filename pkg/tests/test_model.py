import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satrisk.instances import fixture_text, random_instance
from satrisk.model import (
    InvariantError,
    ModelSchemaError,
    ModelSyntaxError,
    Policy,
    PolicyMismatchError,
    induce,
    parse_model,
    parse_policy,
    render_model,
    simplify_reward,
)
from satrisk.evaluator import return_moments, value_vector
from satrisk.sat import transform_process

from oracles import expected_reward_brute


def test_parse_ref1(ref1):
    mdp, policy = ref1
    assert mdp.states == ("s",)
    assert mdp.all_actions == ("a",)
    assert len(mdp.reward_support) == 2
    assert mdp.gamma == 0.5
    assert policy.rule == {"s": {"a": 1.0}}


def test_parse_ref2(ref2):
    mdp, policy = ref2
    assert len(mdp.states) == 2
    assert mdp.actions["s1"] == ("a", "b")
    assert mdp.actions["s2"] == ("a",)
    assert len(mdp.reward_support) == 5
    assert policy.rule["s1"] == {"a": 0.5, "b": 0.5}


def test_row_sum_violation_names_the_row():
    text = fixture_text("ref2").replace("to: s1, prob: 0.6", "to: s1, prob: 0.5")
    with pytest.raises(InvariantError, match=r"\(s1, a\).*residual -1\.000e-01"):
        parse_model(text)


def test_roundoff_sums_are_renormalized():
    text = fixture_text("ref2").replace("prob: 0.6}", "prob: 0.6000000001}")
    mdp, _ = parse_model(text)
    assert math.fsum(mdp.transition[("s1", "a", y)] for y in ("s1", "s2")) == pytest.approx(1.0, abs=1e-15)


def test_syntax_error_reports_line():
    with pytest.raises(ModelSyntaxError, match="line 4, column 3"):
        parse_model("gamma: 0.5\nstates: [s]\nactions: {s: [a]\n  - x")


@pytest.mark.parametrize(
    "edit, path",
    [
        (("prob: 0.5}", "prob: half}"), "transitions|rewards"),
        (("gamma: 0.5", "gama: 0.5"), "<root>"),
        (("{s: 1}\npolicy", "{s: [1]}\npolicy"), "initial/s"),
    ],
)
def test_schema_errors_carry_a_path(edit, path):
    text = fixture_text("ref1").replace(*edit)
    with pytest.raises(ModelSchemaError, match=path):
        parse_model(text)


def test_invariant_errors():
    base = fixture_text("ref1")
    with pytest.raises(InvariantError, match="gamma"):
        parse_model(base.replace("gamma: 0.5", "gamma: 1.0"))
    with pytest.raises(InvariantError, match="empty action set"):
        parse_model(base.replace("actions: {s: [a]}", "actions: {s: []}"))
    with pytest.raises(InvariantError, match="reward_support"):
        parse_model(base.replace("states: [s]", "states: [s]\nreward_support: [1]"))


def test_reward_support_derived_when_omitted(ref1):
    assert ref1[0].reward_support == (-1.0, 1.0)


def test_numeric_strings_accepted():
    mdp, _ = parse_model(fixture_text("ref1").replace("gamma: 0.5", "gamma: 5e-1"))
    assert mdp.gamma == 0.5


def test_induce_ref1(ref1):
    proc = induce(*ref1)
    assert proc.transition == {("s", "s"): 1.0}
    assert proc.reward_dist == {("s", "s", 1.0): 0.5, ("s", "s", -1.0): 0.5}


def test_induce_ref2(ref2):
    mdp, policy = ref2
    proc = induce(mdp, policy)
    assert proc.transition[("s1", "s2")] == pytest.approx(0.5 * 0.4 + 0.5 * 1.0, abs=1e-15)
    # d_pi(5 | s1, s2) = 0.5*0.4*0.5 / 0.7
    assert proc.reward_dist[("s1", "s2", 5.0)] == pytest.approx(0.1 / 0.7, abs=1e-15)
    assert proc.reward_dist[("s1", "s2", 0.0)] == pytest.approx(0.5 / 0.7, abs=1e-15)


def test_policy_mismatch(ref2):
    mdp, _ = ref2
    with pytest.raises(PolicyMismatchError, match="'b'"):
        induce(mdp, Policy({"s1": {"a": 1.0}, "s2": {"b": 1.0}}))
    with pytest.raises(PolicyMismatchError, match="no decision rule"):
        induce(mdp, Policy({"s1": {"a": 1.0}}))


def test_parse_policy_file(ref2):
    pol = parse_policy("s1: {a: 1}\ns2: {a: 1}\n", ref2[0])
    assert pol.rule["s1"] == {"a": 1.0}


def test_simplify_ref1(ref1):
    chain = simplify_reward(*ref1)
    assert chain.reward.tolist() == [0.0]
    assert chain.reward_epoch_offset == 0


def test_simplify_deterministic_reward():
    text = fixture_text("ref1").replace("value: 1, prob: 0.5", "value: 1, prob: 1").replace(
        "  - {from: s, action: a, to: s, value: -1, prob: 0.5}\n", "")
    chain = simplify_reward(*parse_model(text))
    assert chain.reward.tolist() == [1.0]


def test_simplify_ref2_matches_brute_sum(ref2):
    mdp, policy = ref2
    chain = simplify_reward(mdp, policy)
    brute = [expected_reward_brute(mdp, policy, x) for x in mdp.states]
    # hand sum: s1 = 0.5*(0.6*1 + 0.4*2) + 0.5*0 = 0.7, s2 = 0.7*2 - 0.3 = 1.1
    assert brute == pytest.approx([0.7, 1.1], abs=1e-15)
    np.testing.assert_allclose(chain.reward, brute, atol=1e-15)


def test_chains_are_immutable(ref2):
    chain = simplify_reward(*ref2)
    with pytest.raises(ValueError):
        chain.P[0, 0] = 1.0


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_render_parse_round_trip(seed):
    mdp, policy = random_instance(np.random.default_rng(seed), max_states=4, max_actions=3, max_rewards=3)
    again, pol2 = parse_model(render_model(mdp, policy))
    assert again == mdp
    assert pol2 == policy
    assert render_model(again, pol2) == render_model(mdp, policy)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_induce_preserves_total_probability(seed):
    mdp, policy = random_instance(np.random.default_rng(seed))
    proc = induce(mdp, policy)
    for x in mdp.states:
        total = sum(p * proc.reward_dist[(x, y, j)]
                    for (x0, y), p in proc.transition.items() if x0 == x
                    for j in mdp.reward_support if (x, y, j) in proc.reward_dist)
        assert total == pytest.approx(1.0, abs=1e-9)
    # consistency with the inducing MDP
    for (x, y, j), d in proc.reward_dist.items():
        joint = sum(w * mdp.transition.get((x, a, y), 0.0) * mdp.reward_dist.get((x, a, y, j), 0.0)
                    for a, w in policy.rule[x].items())
        assert d * proc.transition[(x, y)] == pytest.approx(joint, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_simplification_preserves_the_mean(seed):
    mdp, policy = random_instance(np.random.default_rng(seed), gamma=0.8)
    chain = simplify_reward(mdp, policy)
    simplified_mean = float(chain.initial @ value_vector(chain))
    sat_mean, _ = return_moments(transform_process(mdp, policy))
    assert simplified_mean == pytest.approx(sat_mean, abs=1e-9)
