"""Camera-selection gridworlds, baseline policies and trajectory simulation.

A person walks on a ring of cells; camera ``i`` watches cell ``i`` and
reports "present" or "absent" with configurable true- and false-positive
rates. Per step the simulator picks sensors, moves the person, draws
readings from the selected cameras, filters the belief and then scores
the guess ``argmax_p b . R[:, p]`` against the true state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .greedy import SetFunction, greedy_argmax, greedy_execution_action, q_from_gamma
from .model import (
    ActivePerceptionModel,
    IRRewardMatrix,
    ModelError,
    StateReward,
    belief_update,
)
from .pbvi import greedy_policy_action, lookahead_vectors, q_values

PRESENT, ABSENT = 0, 1
OBS_SYMBOLS = ("present", "absent")


@dataclass(frozen=True)
class GridworldSpec:
    num_cells: int = 10
    p_stay: float = 0.7
    true_positive_rate: float = 0.75
    false_positive_rate: float = 0.05
    budget_k: int = 1
    discount: float = 0.99
    horizon: int = 10
    exact_k: bool = True

    def __post_init__(self):
        if self.num_cells < 3:
            raise ModelError("a ring needs at least 3 cells")
        for name in ("p_stay", "true_positive_rate", "false_positive_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ModelError(f"{name} must lie in [0, 1]")
        if not 1 <= self.budget_k <= self.num_cells:
            raise ModelError("budget_k must be in [1, num_cells]")

    @property
    def num_sensors(self) -> int:
        return self.num_cells


def ring_transition(num_cells: int, p_stay: float) -> np.ndarray:
    T = np.zeros((num_cells, num_cells))
    move = (1.0 - p_stay) / 2.0
    for c in range(num_cells):
        T[c, c] += p_stay
        T[c, (c - 1) % num_cells] += move
        T[c, (c + 1) % num_cells] += move
    return T


def camera_channels(spec: GridworldSpec) -> tuple:
    out = []
    for i in range(spec.num_cells):
        O = np.empty((spec.num_cells, 2))
        O[:, PRESENT] = spec.false_positive_rate
        O[i, PRESENT] = spec.true_positive_rate
        O[:, ABSENT] = 1.0 - O[:, PRESENT]
        out.append(O)
    return tuple(out)


def build_gridworld(spec: GridworldSpec, reward=None) -> ActivePerceptionModel:
    """Ring gridworld with one camera per cell; default reward is 1 for guessing the cell."""
    n = spec.num_cells
    return ActivePerceptionModel(
        ring_transition(n, spec.p_stay), camera_channels(spec),
        IRRewardMatrix(np.eye(n)) if reward is None else reward,
        budget_k=spec.budget_k, discount=spec.discount, horizon=spec.horizon,
        initial_belief=np.full(n, 1.0 / n), exact_k=spec.exact_k,
        obs_symbols=(OBS_SYMBOLS,) * n,
    )


def coverage_model(spec: GridworldSpec, cells: Optional[Sequence[int]] = None) -> ActivePerceptionModel:
    """Same dynamics, rewarded 1 whenever a selected camera covers the person's cell.

    With ``cells`` only those cells earn coverage reward.
    """
    cov = np.eye(spec.num_cells)
    if cells is not None:
        mask = np.zeros(spec.num_cells, dtype=bool)
        mask[list(cells)] = True
        cov[:, ~mask] = 0.0
    return build_gridworld(spec, StateReward(cov))


def budget_model(spec: GridworldSpec, total_uses: int, steps: int) -> ActivePerceptionModel:
    """Gridworld whose state also tracks how many camera uses remain.

    State ``level * cells + cell`` for levels 0..total_uses, plus an
    exhausted level reached by selecting cameras with no uses left; there
    every camera reports "absent" regardless of the cell, so the reading
    carries no information. The empty sensor set is always available.
    """
    if total_uses < 0:
        raise ModelError("total_uses must be >= 0")
    n = spec.num_cells
    levels = total_uses + 2
    off = total_uses + 1
    ring = ring_transition(n, spec.p_stay)
    passive = np.kron(np.eye(levels), ring)
    shift = np.zeros((levels, levels))
    for lv in range(1, levels - 1):
        shift[lv, lv - 1] = 1.0
    shift[0, off] = 1.0
    shift[off, off] = 1.0
    active = np.kron(shift, ring)
    chans = []
    for O in camera_channels(spec):
        full = np.tile(O, (levels, 1))
        full[off * n:, PRESENT] = 0.0
        full[off * n:, ABSENT] = 1.0
        chans.append(full)
    b0 = np.zeros(levels * n)
    b0[total_uses * n:(total_uses + 1) * n] = 1.0 / n
    return ActivePerceptionModel(
        passive, tuple(chans), IRRewardMatrix(np.tile(np.eye(n), (levels, 1))),
        budget_k=spec.budget_k, discount=spec.discount, horizon=steps,
        initial_belief=b0, active_transition=active, exact_k=False,
        obs_symbols=(OBS_SYMBOLS,) * n,
    )


def remaining_uses(belief, num_cells: int) -> np.ndarray:
    """Belief mass per budget level (last entry: exhausted)."""
    return np.asarray(belief).reshape(-1, num_cells).sum(axis=1)


def important_cells_model(spec: GridworldSpec, cells: Sequence[int]) -> ActivePerceptionModel:
    """Predictions only about ``cells``, plus one column paying 1 on every other cell."""
    cells = sorted(set(int(c) for c in cells))
    if not cells:
        raise ModelError("need at least one important cell")
    if cells[0] < 0 or cells[-1] >= spec.num_cells:
        raise ModelError("important cell out of range")
    n = spec.num_cells
    R = np.eye(n)[:, cells]
    others = np.setdiff1d(np.arange(n), cells)
    if others.size:
        rest = np.zeros((n, 1))
        rest[others] = 1.0
        R = np.hstack([R, rest])
    return build_gridworld(spec, IRRewardMatrix(R))


# --------------------------------------------------------------------------
# policies: ``policy.select(belief, step, steps)`` returns a sensor set


def rotate_policy(step: int, num_sensors: int, k: int = 1) -> tuple:
    """Cameras ``step*k .. step*k + k - 1`` modulo N."""
    return tuple(sorted({(step * k + j) % num_sensors for j in range(k)}))


@dataclass
class RotatePolicy:
    num_sensors: int
    k: int = 1
    name: str = "rotate"

    def select(self, belief, step, steps):
        return rotate_policy(step, self.num_sensors, self.k)


@dataclass
class PlannedPolicy:
    """One-step lookahead on solved stages.

    Stationary policies always look ahead with Gamma_{h-1}; time-varying ones
    use the stage matching the steps left in the episode. ``selector`` is
    "exact" (argmax over the action set) or "greedy" (greedy subset build).
    """

    model: ActivePerceptionModel
    stages: list
    selector: str = "exact"
    time_varying: bool = False
    name: str = "planned"

    def __post_init__(self):
        if self.selector not in ("exact", "greedy"):
            raise ModelError(f"unknown selector {self.selector!r}")
        if not self.stages:
            raise ModelError("need at least one solved stage")

    def steps_to_go(self, step, steps):
        return steps - step if self.time_varying else len(self.stages)

    def select(self, belief, step, steps):
        V = lookahead_vectors(self.model, self.stages, self.steps_to_go(step, steps))
        if self.selector == "greedy":
            return greedy_execution_action(self.model, V, belief)
        return greedy_policy_action(self.model, V, belief)[0]


# --------------------------------------------------------------------------
# simulation


@dataclass
class TrajectoryMetrics:
    true_states: np.ndarray
    predictions: np.ndarray
    correct: np.ndarray
    rewards: np.ndarray
    max_belief: np.ndarray
    sensors: list

    @property
    def cumulative_reward(self) -> float:
        return float(self.rewards.sum())


@dataclass
class SimulationResult:
    trajectories: list = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def totals(self) -> np.ndarray:
        return np.array([t.cumulative_reward for t in self.trajectories])

    @property
    def mean_reward(self) -> float:
        return float(self.totals.mean())

    @property
    def std_error(self) -> float:
        tot = self.totals
        return float(tot.std(ddof=1) / np.sqrt(len(tot))) if len(tot) > 1 else 0.0

    def mean_curve(self) -> np.ndarray:
        """Mean cumulative reward after each step."""
        return np.mean([np.cumsum(t.rewards) for t in self.trajectories], axis=0)

    def rows(self):
        """(episode, step, true_state, predicted, correct, max_belief, sensors) per step.

        With several people, states and predictions are ";"-joined per person.
        """
        for e, tr in enumerate(self.trajectories):
            for k in range(len(tr.rewards)):
                yield (e, k, _label(tr.true_states[k]), _label(tr.predictions[k]), int(tr.correct[k]),
                       float(tr.max_belief[k]), tr.sensors[k])


def _label(x):
    x = np.asarray(x)
    return int(x) if x.ndim == 0 else ";".join(str(int(v)) for v in x)


def _draw(row, u) -> int:
    return min(int(np.searchsorted(np.cumsum(row), u, side="right")), len(row) - 1)


def _episode_streams(seed, episodes):
    # one stream for the person's path and one for sensor noise, per episode,
    # so policies compared under one seed see the same path and noise draws
    for child in np.random.SeedSequence(seed).spawn(episodes):
        ss, so = child.spawn(2)
        yield np.random.default_rng(ss), np.random.default_rng(so)


def _scoring_matrix(model, scoring):
    if scoring is not None:
        return np.asarray(scoring, dtype=float)
    if isinstance(model.reward, IRRewardMatrix):
        return np.asarray(model.reward.rewards)
    return np.eye(model.num_states)


def simulate(model: ActivePerceptionModel, policy, episodes: int, steps: int, seed: int = 0,
             scoring=None) -> SimulationResult:
    """Seeded trajectories; ``scoring`` (|S| x P) rates guesses, default the model's IR matrix.

    A step counts as correct when the guess earns positive reward.
    """
    R = _scoring_matrix(model, scoring)
    n = model.num_sensors
    res = SimulationResult(seed=seed)
    for rs, ro in _episode_streams(seed, episodes):
        u_state = rs.random(steps + 1)
        u_obs = ro.random((steps, n))
        b = np.array(model.initial_belief)
        s = _draw(b, u_state[0])
        states, preds, rew, mx, sens = [], [], [], [], []
        for k in range(steps):
            a = tuple(policy.select(b, k, steps))
            s = _draw(model.transition_for(a)[s], u_state[k + 1])
            z = [None] * n
            for i in a:
                z[i] = _draw(model.obs_channels[i][s], u_obs[k, i])
            b = belief_update(model, b, a, tuple(z))
            p = _kernels.first_max(b @ R)
            states.append(s)
            preds.append(p)
            rew.append(R[s, p])
            mx.append(b.max())
            sens.append(a)
        rew = np.array(rew)
        res.trajectories.append(TrajectoryMetrics(
            np.array(states), np.array(preds), rew > 0, rew, np.array(mx), sens))
    return res


# --------------------------------------------------------------------------
# several people, factored value


def _per_person(models, count):
    if isinstance(models, ActivePerceptionModel):
        return [models] * count
    models = list(models)
    if len(models) != count:
        raise ModelError("need one model per person")
    return models


def factored_value(values, beliefs) -> float:
    """sum_i V^i(b^i); ``values`` is one value function or one per person."""
    beliefs = list(beliefs)
    vals = values if isinstance(values, (list, tuple)) else [values] * len(beliefs)
    return float(sum(V.evaluate(b) for V, b in zip(vals, beliefs)))


def factored_action(models, values, beliefs, k: Optional[int] = None, selector="exact") -> tuple:
    """argmax over sensor sets of sum_i Q^i(b^i, a), exactly or greedily."""
    beliefs = [np.asarray(b, dtype=float) for b in beliefs]
    models = _per_person(models, len(beliefs))
    values = values if isinstance(values, (list, tuple)) else [values] * len(beliefs)
    base = models[0]
    if k is not None and k != base.budget_k:
        models = [m.replace(budget_k=k) for m in models]
        base = models[0]
    if selector == "greedy":
        parts = [q_from_gamma(m, V, b) for m, V, b in zip(models, values, beliefs)]
        Q = SetFunction(batch_fn=lambda subs: np.sum([p.many(subs) for p in parts], axis=0))
        return greedy_argmax(Q, range(base.num_sensors), base.budget_k)
    total = sum(q_values(m, V, b) for m, V, b in zip(models, values, beliefs))
    return base.action_table.actions[_kernels.first_max(total)]


@dataclass
class FactoredPolicy:
    """Multi-person policy on a single-person solution (``stages``), stationary lookahead."""

    model: ActivePerceptionModel
    stages: list
    selector: str = "exact"
    name: str = "factored"

    def select_joint(self, beliefs, step, steps):
        V = lookahead_vectors(self.model, self.stages)
        return factored_action(self.model, V, beliefs, selector=self.selector)


@dataclass
class RotateJointPolicy:
    num_sensors: int
    k: int = 1
    name: str = "rotate"

    def select_joint(self, beliefs, step, steps):
        return rotate_policy(step, self.num_sensors, self.k)


def simulate_multi(model: ActivePerceptionModel, policy, people: int, episodes: int, steps: int,
                   seed: int = 0, scoring=None) -> SimulationResult:
    """Independent people sharing ``model``; every selected camera reports on each person separately.

    Per step the reward is the number of people whose guess earns positive reward.
    """
    R = _scoring_matrix(model, scoring)
    n = model.num_sensors
    res = SimulationResult(seed=seed)
    for rs, ro in _episode_streams(seed, episodes):
        u_state = rs.random((steps + 1, people))
        u_obs = ro.random((steps, people, n))
        bs = [np.array(model.initial_belief) for _ in range(people)]
        ss = [_draw(bs[j], u_state[0, j]) for j in range(people)]
        states, preds, rew, mx, sens = [], [], [], [], []
        for k in range(steps):
            a = tuple(policy.select_joint(bs, k, steps))
            T = model.transition_for(a)
            step_preds, hits, total = [], [], 0.0
            for j in range(people):
                ss[j] = _draw(T[ss[j]], u_state[k + 1, j])
                z = [None] * n
                for i in a:
                    z[i] = _draw(model.obs_channels[i][ss[j]], u_obs[k, j, i])
                bs[j] = belief_update(model, bs[j], a, tuple(z))
                p = _kernels.first_max(bs[j] @ R)
                step_preds.append(p)
                total += R[ss[j], p]
            states.append(list(ss))
            preds.append(step_preds)
            rew.append(total)
            mx.append(min(b.max() for b in bs))
            sens.append(a)
        rew = np.array(rew)
        res.trajectories.append(TrajectoryMetrics(
            np.array(states), np.array(preds), rew >= people, rew, np.array(mx), sens))
    return res


__all__ = [
    "FactoredPolicy",
    "GridworldSpec",
    "PlannedPolicy",
    "RotateJointPolicy",
    "RotatePolicy",
    "SimulationResult",
    "TrajectoryMetrics",
    "budget_model",
    "build_gridworld",
    "camera_channels",
    "coverage_model",
    "factored_action",
    "factored_value",
    "important_cells_model",
    "remaining_uses",
    "ring_transition",
    "rotate_policy",
    "simulate",
    "simulate_multi",
]
