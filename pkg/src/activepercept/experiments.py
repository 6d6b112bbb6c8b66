"""Seeded experiment drivers shared by the CLI, the benchmarks and the acceptance tests."""
from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .greedy import greedy_solve
from .model import IRRewardMatrix, build_tangent_set, regular_tangent_points
from .pbvi import sample_beliefs, solve
from .surveillance import (
    FactoredPolicy,
    GridworldSpec,
    PlannedPolicy,
    RotateJointPolicy,
    RotatePolicy,
    budget_model,
    build_gridworld,
    coverage_model,
    important_cells_model,
    simulate,
    simulate_multi,
)

DEFAULT_BELIEFS = 200


def solve_policy(model, beliefs=DEFAULT_BELIEFS, seed=7, backend=None, selector="exact",
                 time_varying=False, horizon=None, threads=1, walk_length=None):
    """Solve ``model`` on a sampled belief set; returns (PlannedPolicy, per-backup seconds)."""
    B = sample_beliefs(model, beliefs, seed, walk_length=walk_length)
    timings = []
    if backend == "greedy":
        stages = greedy_solve(model, B, horizon=horizon, threads=threads, timings=timings)
    else:
        stages = solve(model, B, mode=backend, horizon=horizon, threads=threads, timings=timings)
    return PlannedPolicy(model, stages, selector, time_varying), timings


def baseline_comparison(spec=GridworldSpec(), episodes=100, steps=50, seed=7, beliefs=DEFAULT_BELIEFS):
    """Mean cumulative reward of the belief-reward planner, the coverage planner and rotation."""
    model = build_gridworld(spec)
    ir, _ = solve_policy(model, beliefs, seed)
    cov, _ = solve_policy(coverage_model(spec), beliefs, seed)
    scoring = np.asarray(model.reward.rewards)
    return {
        "ir": simulate(model, ir, episodes, steps, seed),
        "coverage": simulate(model, cov, episodes, steps, seed, scoring),
        "rotate": simulate(model, RotatePolicy(spec.num_sensors, spec.budget_k), episodes, steps, seed),
    }


def myopia_comparison(p_stays=(0.9, 0.7, 0.5), spec=GridworldSpec(), episodes=100, steps=50, seed=7,
                      beliefs=DEFAULT_BELIEFS):
    """{p_stay: {"non-myopic": result, "myopic": result}}; myopic plans with h = 1."""
    out = {}
    for p in p_stays:
        model = build_gridworld(replace(spec, p_stay=p))
        far, _ = solve_policy(model, beliefs, seed)
        near, _ = solve_policy(model, beliefs, seed, horizon=1)
        out[p] = {"non-myopic": simulate(model, far, episodes, steps, seed),
                  "myopic": simulate(model, near, episodes, steps, seed)}
    return out


def budget_comparison(total_uses=15, spec=GridworldSpec(), episodes=100, steps=50, seed=7,
                      beliefs=500):
    """Time-varying planning over the whole episode versus one-step lookahead, under a use budget."""
    model = budget_model(spec, total_uses, steps)
    far, _ = solve_policy(model, beliefs, seed, time_varying=True, horizon=steps, walk_length=steps)
    near, _ = solve_policy(model, beliefs, seed, horizon=1, walk_length=steps)
    return {"non-myopic": simulate(model, far, episodes, steps, seed),
            "myopic": simulate(model, near, episodes, steps, seed)}


def tangent_sweep(per_state=(1, 2, 3, 4), spec=GridworldSpec(), episodes=100, steps=50, seed=7,
                  beliefs=DEFAULT_BELIEFS):
    """Entropy-tangent rewards with 1..4 tangents per state; scored by correct guesses."""
    base = build_gridworld(spec)
    scoring = np.asarray(base.reward.rewards)
    out = {}
    for k in per_state:
        tset = build_tangent_set(regular_tangent_points(base.num_states, k))
        model = base.replace(reward=tset)
        pol, _ = solve_policy(model, beliefs, seed)
        out[k] = simulate(model, pol, episodes, steps, seed, scoring)
    return out


def warm_up():
    """Compile the numba kernels on a tiny model so timings exclude JIT."""
    model = build_gridworld(GridworldSpec(num_cells=3, budget_k=2, horizon=2))
    B = sample_beliefs(model, 5, 0)
    solve(model, B)
    greedy_solve(model, B)


def time_backups(model, B, backend, repeats=3, threads=1):
    """(stages, per-stage seconds) of the fastest of ``repeats`` identical solves."""
    best, stages = None, None
    for _ in range(max(1, repeats)):
        timings = []
        if backend == "greedy":
            stages = greedy_solve(model, B, threads=threads, timings=timings)
        else:
            stages = solve(model, B, mode=backend, threads=threads, timings=timings)
        if best is None or sum(timings) < sum(best):
            best = timings
    return stages, best


def greedy_sweep(cells: Sequence[int] = (5, 8, 11), ks: Sequence[int] = (1, 2, 3), spec=GridworldSpec(),
                 episodes=100, steps=50, seed=7, beliefs=DEFAULT_BELIEFS, horizon=10, simulate_rewards=True,
                 repeats=3, backends=("decomposed-ir", "greedy"), threads=1):
    """Full versus greedy PBVI at every (N, K): backup seconds, value at b0 and mean reward."""
    warm_up()
    rows = []
    for n in cells:
        for k in ks:
            s = replace(spec, num_cells=n, budget_k=k, horizon=horizon)
            model = build_gridworld(s)
            B = sample_beliefs(model, beliefs, seed)
            point = {"N": n, "K": k}
            for backend in backends:
                stages, timings = time_backups(model, B, backend, repeats, threads)
                pol = PlannedPolicy(model, stages, "greedy" if backend == "greedy" else "exact")
                point[backend] = {
                    "backup_seconds": float(np.sum(timings)),
                    "stage_seconds": [float(x) for x in timings],
                    "value_at_b0": float(stages[-1].evaluate(model.initial_belief)),
                }
                if simulate_rewards:
                    r = simulate(model, pol, episodes, steps, seed)
                    point[backend]["mean_reward"] = r.mean_reward
                    point[backend]["std_error"] = r.std_error
            rows.append(point)
    return rows


def multi_person_comparison(people=(1, 2, 3), spec=GridworldSpec(), episodes=100, steps=50, seed=7,
                            beliefs=DEFAULT_BELIEFS, important=None):
    """Factored planner, factored coverage and rotation with several independent people."""
    if important is None:
        model = build_gridworld(spec)
        cov_model = coverage_model(spec)
    else:
        model = important_cells_model(spec, important)
        cov_model = coverage_model(spec, important)
    ir, _ = solve_policy(model, beliefs, seed)
    cov, _ = solve_policy(cov_model, beliefs, seed)
    scoring = np.asarray(model.reward.rewards)
    out = {}
    for m in people:
        out[m] = {
            "ir": simulate_multi(model, FactoredPolicy(model, ir.stages), m, episodes, steps, seed),
            "coverage": simulate_multi(model, FactoredPolicy(cov_model, cov.stages), m, episodes, steps,
                                       seed, scoring),
            "rotate": simulate_multi(model, RotateJointPolicy(spec.num_sensors, spec.budget_k), m,
                                     episodes, steps, seed),
        }
    return out


__all__ = [
    "DEFAULT_BELIEFS",
    "baseline_comparison",
    "budget_comparison",
    "greedy_sweep",
    "time_backups",
    "warm_up",
    "multi_person_comparison",
    "myopia_comparison",
    "solve_policy",
    "tangent_sweep",
]

_ = IRRewardMatrix
