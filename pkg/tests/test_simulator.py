import math

import numpy as np
import pytest

from satrisk.evaluator import evaluate, utility_taylor
from satrisk.model import DetChain, induce
from satrisk.sat import transform_process
from satrisk.simulator import (
    SampleGroups,
    TractabilityError,
    default_horizon,
    empirical_mean_variance,
    empirical_utility,
    enumerate_truncated,
    group_stream,
    run_groups,
    sample_return,
    truncated_moments,
    truncation_bound,
)

from conftest import small_instances
from oracles import REF2_MEAN, REF2_VAR, atoms_match, moments_from, return_dist, sequence_dist_mdp

REF2_SAMPLE_SEED42_N200 = 8.384502251657894  # pinned from the first run


def test_ref1_single_step_frequencies(ref1):
    proc = induce(*ref1)
    rng = np.random.default_rng(1)
    draws = np.array([sample_return(proc, 1, rng) for _ in range(10_000)])
    assert set(draws) == {1.0, -1.0}
    frac = (draws == 1.0).mean()
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / 10_000)


def test_ref1_two_steps(ref1):
    g = run_groups(induce(*ref1), 4, 2500, 2, seed=3)
    values, counts = np.unique(g.returns, return_counts=True)
    assert values.tolist() == [-1.5, -0.5, 0.5, 1.5]
    assert np.all(np.abs(counts / 10_000 - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / 10_000))


def test_ref2_sample_is_pinned(ref2):
    proc = induce(*ref2)
    assert sample_return(proc, 200, group_stream(42, 0)) == REF2_SAMPLE_SEED42_N200


def test_run_groups_is_deterministic(ref2):
    proc = induce(*ref2)
    a = run_groups(proc, 1, 1, 1, seed=9)
    b = run_groups(proc, 1, 1, 1, seed=9)
    assert a.returns.tolist() == b.returns.tolist()
    c = run_groups(proc, 6, 50, 30, seed=9)
    d = run_groups(proc, 6, 50, 30, seed=9, workers=3)
    assert np.array_equal(c.returns, d.returns)
    # a group's samples do not depend on how many groups were requested
    assert np.array_equal(run_groups(proc, 2, 50, 30, seed=9).returns, c.returns[:2])


def test_returns_are_bounded():
    for mdp, policy in small_instances(20, seed=4):
        g = run_groups(induce(mdp, policy), 2, 30, 25, seed=1)
        bound = max(abs(j) for j in mdp.reward_support) / (1 - mdp.gamma) + 1e-9
        assert np.all(np.isfinite(g.returns)) and np.abs(g.returns).max() <= bound


def test_rejects_bad_arguments(ref1):
    proc = induce(*ref1)
    with pytest.raises(ValueError):
        run_groups(proc, 0, 1, 1, seed=0)
    with pytest.raises(ValueError):
        run_groups(proc, 1, 1, 1, seed=-1)
    g = run_groups(proc, 2, 1, 3, seed=0)
    with pytest.raises(ValueError, match="two simulations"):
        empirical_mean_variance(g, 1.0)


def test_desk_protocol_group_means(ref2):
    g = run_groups(induce(*ref2), 20, 500, 200, seed=42)
    est, err = empirical_mean_variance(g, 0.0)
    assert abs(est - float(REF2_MEAN)) <= 3 * err


def test_k0_is_the_grand_mean(ref2):
    g = run_groups(induce(*ref2), 5, 40, 20, seed=2)
    assert empirical_mean_variance(g, 0.0)[0] == pytest.approx(g.returns.mean(), abs=1e-12)


def test_ref1_mean_variance_estimate(ref1):
    g = run_groups(induce(*ref1), 20, 2000, 40, seed=7)
    est, err = empirical_mean_variance(g, 1.0)
    assert abs(est - (-2 / math.sqrt(3))) <= 3 * err


def test_constant_return_process():
    chain = DetChain(("z",), [[1.0]], [2.0], [1.0], 0.5)
    g = run_groups(chain, 3, 10, 8, seed=0)
    for k in (-2.0, 0.0, 3.0):
        est, err = empirical_mean_variance(g, k)
        assert est == pytest.approx(2.0 * (1 - 0.5 ** 8) / 0.5, abs=1e-12) and err == 0.0


def test_utility_limits(ref2):
    g = run_groups(induce(*ref2), 4, 100, 50, seed=5)
    assert empirical_utility(g, 0.0)[0] == empirical_mean_variance(g, 0.0)[0]
    assert empirical_utility(g, 1e-9)[0] == pytest.approx(empirical_utility(g, 0.0)[0], abs=1e-6)
    one = SampleGroups(np.array([[3.25], [-1.5]]), 1, 0, "test")
    for beta in (-3.0, 0.1, 2.0):
        assert np.allclose([empirical_utility(one, beta)[0]], [0.875])


def test_utility_max_shift_avoids_overflow():
    g = SampleGroups(np.array([[800.0, 801.0], [799.0, 800.0]]), 1, 0, "test")
    est, _ = empirical_utility(g, 2.0)
    assert np.isfinite(est)
    assert est == pytest.approx(800.0 + math.log((1 + math.exp(2)) / 2) / 2 - 0.5, abs=1e-9)
    with pytest.raises(ValueError):
        empirical_utility(SampleGroups(np.array([[np.nan, 1.0]]), 1, 0, "t"), 1.0)


def test_ref2_utility_close_to_taylor(ref2):
    g = run_groups(induce(*ref2), 20, 500, 200, seed=42)
    est, err = empirical_utility(g, -0.05)
    assert abs(est - utility_taylor(float(REF2_MEAN), float(REF2_VAR), -0.05)) <= 3 * err


def test_enumerate_ref1(ref1):
    dist = enumerate_truncated(induce(*ref1), 2)
    assert dist.atoms == {-1.5: 0.25, -0.5: 0.25, 0.5: 0.25, 1.5: 0.25}
    assert dist.to_csv().splitlines()[0] == "value,probability"


def test_enumerate_matches_brute_force():
    for mdp, policy in small_instances(30, seed=21):
        brute = return_dist(sequence_dist_mdp(mdp, policy, 5), mdp.gamma)
        dist = enumerate_truncated(induce(mdp, policy), 5)
        assert sum(dist.atoms.values()) == pytest.approx(1.0, abs=1e-12)
        assert atoms_match({round(v, 11): p for v, p in dist.atoms.items()}, brute, tol=1e-12)
        # the moment recursion agrees with the enumerated law
        m, v = moments_from(dist.atoms)
        assert truncated_moments(induce(mdp, policy), 5) == pytest.approx((m, v), abs=1e-12)


def test_enumeration_guard(ref2):
    with pytest.raises(TractabilityError):
        enumerate_truncated(induce(*ref2), 11)
    with pytest.raises(TractabilityError):
        enumerate_truncated(transform_process(*ref2), 401)
    with pytest.raises(TractabilityError):
        enumerate_truncated(transform_process(*ref2), 40, max_atoms=1000)


def test_truncation_consistency():
    for mdp, policy in small_instances(40, seed=12):
        exact = evaluate(mdp, policy).mean
        bound = truncation_bound(mdp.gamma, max(abs(j) for j in mdp.reward_support), 8)
        assert abs(truncated_moments(induce(mdp, policy), 8)[0] - exact) <= bound + 1e-12


def test_default_horizon():
    assert default_horizon(0.9, 5.0) == 191
    assert truncation_bound(0.9, 5.0, 200) == pytest.approx(50 * 0.9 ** 200, rel=1e-12)


def test_estimator_consistency(ref1):
    proc = induce(*ref1)
    target = -2 / math.sqrt(3)
    inside = 0
    for seed in range(100):
        est, err = empirical_mean_variance(run_groups(proc, 20, 200, 40, seed=seed), 1.0)
        inside += abs(est - target) <= 3 * err
    assert inside >= 99
    errors = []
    for M in (100, 1000, 10_000):
        errs = [abs(empirical_mean_variance(run_groups(proc, 20, M, 40, seed=s), 1.0)[0] - target) for s in range(3)]
        errors.append(np.mean(errs))
    assert errors[0] > errors[1] > errors[2]
