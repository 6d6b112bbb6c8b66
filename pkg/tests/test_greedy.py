import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from activepercept import ActivePerceptionModel, IRRewardMatrix
from activepercept.greedy import (
    SetFunction,
    backup_greedy,
    greedy_argmax,
    greedy_execution_action,
    greedy_solve,
    q_from_gamma,
)
from activepercept.pbvi import (
    backup_decomposed_ir,
    greedy_policy_action,
    initial_value_function,
    q_values,
    sample_beliefs,
    solve,
)
from activepercept.surveillance import GridworldSpec, build_gridworld
from activepercept.verify import GREEDY_FACTOR, ExactOracle, all_subsets, entropy_reward
from conftest import binary_channel, random_ir


def test_modular_function_picks_top_weights():
    w = (3.0, 1.0, 2.0)
    Q = SetFunction(lambda a: sum(w[i] for i in a))
    assert greedy_argmax(Q, range(3), 2) == (0, 2)
    assert greedy_argmax(Q, range(3), 1) == (0,)
    assert greedy_argmax(Q, range(3), 3) == (0, 1, 2)


def test_trace_records_gains():
    trace = []
    greedy_argmax(lambda a: float(len(a)), range(3), 2, trace)
    assert [t[0] for t in trace] == [0, 1]
    assert trace[0][1] == {0: 1.0, 1: 1.0, 2: 1.0}


def test_set_function_memoises():
    calls = []
    Q = SetFunction(lambda a: calls.append(a) or len(a))
    Q((1, 0))
    Q((0, 1))
    assert calls == [(0, 1)] and Q.calls == 1


def coverage_value(sets, weights):
    def f(a):
        cov = set().union(*(sets[i] for i in a)) if a else set()
        return float(sum(weights[e] for e in cov))
    return f


def test_weighted_coverage_bound_against_brute_force():
    sets = [{0, 1, 2}, {2, 3}, {3, 4, 5}, {0, 5}]
    weights = [1.0, 2.0, 1.5, 0.5, 3.0, 1.0]
    f = coverage_value(sets, weights)
    opt = max(f(a) for a in itertools.combinations(range(4), 2))
    g = f(greedy_argmax(f, range(4), 2))
    assert g >= GREEDY_FACTOR * opt - 1e-12


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_greedy_bound_on_random_coverage(seed, k):
    rng = np.random.default_rng(seed)
    n = 5
    sets = [set(np.flatnonzero(rng.random(8) < 0.35)) for _ in range(n)]
    weights = rng.random(8)
    f = coverage_value(sets, weights)
    opt = max(f(a) for a in itertools.combinations(range(n), k))
    assert f(greedy_argmax(f, range(n), k)) >= GREEDY_FACTOR * opt - 1e-12


@given(st.integers(0, 10_000))
def test_greedy_exact_on_modular(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=5)
    k = int(rng.integers(1, 6))
    f = lambda a: float(sum(w[i] for i in a))  # noqa: E731
    best = max(f(a) for a in itertools.combinations(range(5), k))
    assert f(greedy_argmax(f, range(5), k)) == pytest.approx(best, abs=1e-12)


def test_q_matches_exhaustive_bellman_on_every_subset():
    rng = np.random.default_rng(3)
    T = rng.dirichlet(np.ones(3), size=3)
    chans = tuple(rng.dirichlet(np.ones(2), size=3) for _ in range(3))
    m = ActivePerceptionModel(T, chans, IRRewardMatrix(np.eye(3)), budget_k=3, discount=0.9)
    b = rng.dirichlet(np.ones(3))
    Q = q_from_gamma(m, initial_value_function(m), b)
    ref = ExactOracle(m).q(b, 1)[0]
    assert np.allclose(Q.many(all_subsets(3)), ref, atol=1e-12)
    assert Q(()) == pytest.approx(b.max() + 0.9 * (b @ T).max(), abs=1e-12)


def test_uninformative_sensor_does_not_change_q():
    rng = np.random.default_rng(4)
    T = rng.dirichlet(np.ones(3), size=3)
    chans = (rng.dirichlet(np.ones(2), size=3), np.full((3, 2), 0.5))
    m = ActivePerceptionModel(T, chans, IRRewardMatrix(np.eye(3)), budget_k=2, discount=0.9)
    B = sample_beliefs(m, 10, 0)
    G = solve(m, B, horizon=2)[0]
    for b in B:
        Q = q_from_gamma(m, G, b)
        assert abs(Q((0, 1)) - Q((0,))) <= 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_k1_greedy_backup_equals_exact(seed):
    rng = np.random.default_rng(400 + seed)
    m = random_ir(rng, k=1, horizon=3)
    B = sample_beliefs(m, 25, seed)
    for a, b in zip(greedy_solve(m, B), solve(m, B)):
        assert np.abs(a.evaluate(B.beliefs) - b.evaluate(B.beliefs)).max() <= 1e-9


def test_k_equals_n_selects_all_sensors():
    rng = np.random.default_rng(6)
    m = random_ir(rng, n=3, k=3)
    b = rng.dirichlet(np.ones(m.num_states))
    assert greedy_execution_action(m, initial_value_function(m), b) == (0, 1, 2)


def test_greedy_execution_matches_exact_for_k1_and_is_deterministic():
    m = build_gridworld(GridworldSpec(num_cells=6, budget_k=1, horizon=3))
    B = sample_beliefs(m, 30, 0)
    V = solve(m, B)[1]
    for b in B.beliefs[:10]:
        a = greedy_execution_action(m, V, b)
        assert a == greedy_execution_action(m, V, b)
        q = q_values(m, V, b)
        assert q[m.action_table.index[a]] == pytest.approx(q.max(), abs=1e-12)
        assert a == greedy_policy_action(m, V, b)[0]


def test_greedy_value_within_factor_of_exact_on_gridworld():
    # shifted non-negative entropy reward on the camera model, compared against the exhaustive optimum
    m = build_gridworld(GridworldSpec(num_cells=5, budget_k=2, horizon=2, exact_k=False))
    rho = entropy_reward(np.log(m.num_states))
    B = sample_beliefs(m, 6, 0).beliefs
    for t in (1, 2):
        vg = ExactOracle(m, rho, "greedy").value(B, t)
        vs = ExactOracle(m, rho, "optimal").value(B, t)
        assert np.all(vg >= GREEDY_FACTOR ** (2 * t) * vs - 1e-9)
        assert np.all(vg <= vs + 1e-9)


def test_greedy_backup_value_close_to_full_backup():
    m = build_gridworld(GridworldSpec(num_cells=5, budget_k=2, horizon=4))
    B = sample_beliefs(m, 40, 0)
    for g, f in zip(greedy_solve(m, B), solve(m, B)):
        vg, vf = g.evaluate(B.beliefs), f.evaluate(B.beliefs)
        assert np.all(vg >= GREEDY_FACTOR ** 2 * vf - 1e-9)


def test_greedy_backup_respects_exact_k():
    m = build_gridworld(GridworldSpec(num_cells=5, budget_k=2, horizon=2))
    V = backup_greedy(m, initial_value_function(m), sample_beliefs(m, 10, 0))
    assert all(len(a) == 2 for a in V.actions)


def test_greedy_backup_picks_best_single_sensor_value():
    rng = np.random.default_rng(1)
    m = random_ir(rng, n=3, k=1)
    B = sample_beliefs(m, 10, 0)
    g = backup_greedy(m, initial_value_function(m), B)
    d = backup_decomposed_ir(m, initial_value_function(m), B)
    assert np.allclose(g.evaluate(B.beliefs), d.evaluate(B.beliefs), atol=1e-12)
