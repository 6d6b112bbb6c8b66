"""Tabular active-perception POMDPs: types, belief arithmetic and entropy rewards.

Sensors are indexed from 0. A joint observation is a tuple with one entry per
sensor: ``None`` for an unselected sensor, otherwise the index of the reading
within that sensor's non-null alphabet.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

STOCHASTIC_TOL = 1e-12
BELIEF_TOL = 1e-9
TANGENT_FLOOR = 1e-6


class ModelError(ValueError):
    """Raised for malformed models or inputs that violate a model invariant."""


class ZeroProbabilityObservation(ModelError):
    """Bayes rule is undefined for an observation with zero probability."""


class ResourceBudgetError(RuntimeError):
    """An exhaustive computation would exceed its configured size budget."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_stochastic(mat: np.ndarray, name: str) -> None:
    if mat.ndim != 2:
        raise ModelError(f"{name} must be a matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)) or np.any(mat < 0):
        raise ModelError(f"{name} has negative or non-finite entries")
    dev = np.abs(mat.sum(axis=1) - 1.0).max()
    if dev > STOCHASTIC_TOL:
        raise ModelError(f"{name} rows must sum to 1 (max deviation {dev:.3g})")


def validate_belief(b, num_states: Optional[int] = None) -> np.ndarray:
    """Return ``b`` as a float array after checking it lies on the simplex."""
    arr = np.asarray(b, dtype=float)
    if arr.ndim != 1:
        raise ModelError("belief must be a vector")
    if num_states is not None and arr.shape[0] != num_states:
        raise ModelError(f"belief has {arr.shape[0]} entries, model has {num_states} states")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > BELIEF_TOL:
        raise ModelError("belief must be non-negative and sum to 1")
    return arr


def uniform_belief(num_states: int) -> np.ndarray:
    return np.full(num_states, 1.0 / num_states)


def sensor_set(sensors, num_sensors: Optional[int] = None) -> tuple:
    """Canonical sorted, duplicate-free tuple of sensor indices."""
    out = tuple(sorted(set(int(i) for i in sensors)))
    if num_sensors is not None and out and (out[0] < 0 or out[-1] >= num_sensors):
        raise ModelError(f"sensor index out of range in {out}")
    return out


# --------------------------------------------------------------------------
# reward representations


@dataclass(frozen=True, eq=False)
class AlphaVector:
    values: np.ndarray
    normal_action: tuple = ()
    prediction_action: Optional[int] = None


@dataclass(frozen=True, eq=False)
class TangentRewardSet:
    """Gamma_rho: rho(b) = max_k vectors[k] . b."""

    vectors: np.ndarray
    tangent_points: Optional[np.ndarray] = None

    def __post_init__(self):
        vec = np.atleast_2d(np.array(self.vectors, dtype=float))
        if vec.shape[0] == 0 or not np.all(np.isfinite(vec)):
            raise ModelError("tangent set needs at least one finite vector")
        object.__setattr__(self, "vectors", _frozen(vec))
        if self.tangent_points is not None:
            object.__setattr__(self, "tangent_points", _frozen(np.atleast_2d(self.tangent_points)))

    kind = "tangent"

    @property
    def reward_vectors(self) -> np.ndarray:
        return self.vectors

    def shifted(self, c: float) -> "TangentRewardSet":
        return TangentRewardSet(self.vectors + c, self.tangent_points)

    def alpha_vectors(self) -> list:
        return [AlphaVector(v.copy(), (), k) for k, v in enumerate(self.vectors)]


@dataclass(frozen=True, eq=False)
class IRRewardMatrix:
    """R(s, a_p) over prediction actions; column ``p`` rewards prediction ``p``."""

    rewards: np.ndarray

    def __post_init__(self):
        r = np.array(self.rewards, dtype=float)
        if r.ndim != 2 or r.shape[1] == 0 or not np.all(np.isfinite(r)):
            raise ModelError("IR reward must be a finite |S| x |A_p| matrix")
        object.__setattr__(self, "rewards", _frozen(r))

    kind = "ir"

    @property
    def reward_vectors(self) -> np.ndarray:
        return self.rewards.T

    @property
    def num_predictions(self) -> int:
        return self.rewards.shape[1]


@dataclass(frozen=True, eq=False)
class StateReward:
    """R(s, a) = max over selected sensors i of coverage[i, s]; zero for no sensor."""

    coverage: np.ndarray

    def __post_init__(self):
        c = np.array(self.coverage, dtype=float)
        if c.ndim != 2 or not np.all(np.isfinite(c)):
            raise ModelError("state reward coverage must be a finite N x |S| matrix")
        object.__setattr__(self, "coverage", _frozen(c))

    kind = "state"

    def vector(self, action: Sequence[int]) -> np.ndarray:
        if len(action) == 0:
            return np.zeros(self.coverage.shape[1])
        return self.coverage[list(action)].max(axis=0)


Reward = Union[TangentRewardSet, IRRewardMatrix, StateReward]


# --------------------------------------------------------------------------
# action tables


@dataclass(frozen=True, eq=False)
class ActionTable:
    """Stacked joint-observation likelihoods for a list of sensor subsets.

    ``lik[r]`` is Pr(z_r | s', a) for observation row ``r``; the rows of action
    ``k`` are ``ptr[k]:ptr[k+1]``. ``tid[k]`` selects the transition matrix
    (0: no sensor selected, 1: some sensor selected).
    """

    actions: list
    lik: np.ndarray
    ptr: np.ndarray
    tid: np.ndarray
    observations: list
    index: dict = field(repr=False)

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def ids(self, subsets) -> np.ndarray:
        return np.array([self.index[s] for s in subsets], dtype=np.int64)

    def rows(self, k: int) -> range:
        return range(self.ptr[k], self.ptr[k + 1])


def subsets_up_to(num_sensors: int, max_size: int, min_size: int = 0) -> list:
    """All sensor subsets with ``min_size <= |a| <= max_size``: size ascending, lexicographic within a size."""
    out = []
    for k in range(min_size, min(max_size, num_sensors) + 1):
        out.extend(itertools.combinations(range(num_sensors), k))
    return out


# --------------------------------------------------------------------------
# the model


@dataclass(frozen=True, eq=False)
class ActivePerceptionModel:
    """Sensor-selection POMDP with factored, conditionally independent channels.

    ``transition`` applies whenever no sensor is selected and, unless
    ``active_transition`` is given, also when sensors are selected. The budget
    environment is the only place the two differ. With ``exact_k`` the action
    set is restricted to subsets of exactly ``budget_k`` sensors.
    """

    transition: np.ndarray
    obs_channels: tuple
    reward: Reward
    budget_k: int = 1
    discount: float = 1.0
    horizon: int = 1
    initial_belief: Optional[np.ndarray] = None
    active_transition: Optional[np.ndarray] = None
    exact_k: bool = False
    obs_symbols: Optional[tuple] = None

    def __post_init__(self):
        T = np.array(self.transition, dtype=float)
        _check_stochastic(T, "transition")
        ns = T.shape[0]
        if T.shape != (ns, ns) or ns < 1:
            raise ModelError("transition must be square")
        object.__setattr__(self, "transition", _frozen(T))
        if self.active_transition is not None:
            Ta = np.array(self.active_transition, dtype=float)
            _check_stochastic(Ta, "active_transition")
            if Ta.shape != T.shape:
                raise ModelError("active_transition must match transition's shape")
            object.__setattr__(self, "active_transition", _frozen(Ta))
        chans = []
        for i, o in enumerate(self.obs_channels):
            o = np.array(o, dtype=float)
            _check_stochastic(o, f"obs_channels[{i}]")
            if o.shape[0] != ns:
                raise ModelError(f"obs_channels[{i}] must have {ns} rows")
            chans.append(_frozen(o))
        if not chans:
            raise ModelError("model needs at least one sensor")
        object.__setattr__(self, "obs_channels", tuple(chans))
        n = len(chans)
        if not 1 <= self.budget_k <= n:
            raise ModelError(f"budget_k must be in [1, {n}]")
        if not 0.0 < self.discount <= 1.0:
            raise ModelError("discount must lie in (0, 1]")
        if self.horizon < 1:
            raise ModelError("horizon must be >= 1")
        b0 = uniform_belief(ns) if self.initial_belief is None else self.initial_belief
        object.__setattr__(self, "initial_belief", _frozen(validate_belief(b0, ns)))
        self._check_reward()
        if self.obs_symbols is not None:
            syms = tuple(tuple(str(x) for x in s) for s in self.obs_symbols)
            if len(syms) != n or any(len(s) != c.shape[1] for s, c in zip(syms, chans)):
                raise ModelError("obs_symbols must name every reading of every sensor")
            object.__setattr__(self, "obs_symbols", syms)

    def _check_reward(self):
        r, ns = self.reward, self.num_states
        if isinstance(r, TangentRewardSet):
            ok = r.vectors.shape[1] == ns
        elif isinstance(r, IRRewardMatrix):
            ok = r.rewards.shape[0] == ns
        elif isinstance(r, StateReward):
            ok = r.coverage.shape == (self.num_sensors, ns)
        else:
            raise ModelError(f"unsupported reward type {type(r).__name__}")
        if not ok:
            raise ModelError("reward dimensions do not match the model")

    # -- sizes ---------------------------------------------------------------
    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_sensors(self) -> int:
        return len(self.obs_channels)

    @property
    def obs_sizes(self) -> tuple:
        return tuple(o.shape[1] for o in self.obs_channels)

    def replace(self, **changes) -> "ActivePerceptionModel":
        fields = dict(
            transition=self.transition, obs_channels=self.obs_channels, reward=self.reward,
            budget_k=self.budget_k, discount=self.discount, horizon=self.horizon,
            initial_belief=self.initial_belief, active_transition=self.active_transition,
            exact_k=self.exact_k, obs_symbols=self.obs_symbols,
        )
        fields.update(changes)
        return ActivePerceptionModel(**fields)

    # -- actions -------------------------------------------------------------
    @cached_property
    def actions(self) -> list:
        """The action set A in enumeration (tie-break) order."""
        lo = self.budget_k if self.exact_k else 0
        return subsets_up_to(self.num_sensors, self.budget_k, lo)

    def transition_for(self, action) -> np.ndarray:
        if len(action) and self.active_transition is not None:
            return self.active_transition
        return self.transition

    @cached_property
    def transition_stack(self) -> np.ndarray:
        Ta = self.transition if self.active_transition is None else self.active_transition
        return np.ascontiguousarray(np.stack([self.transition, Ta]))

    def joint_likelihood(self, action, z) -> np.ndarray:
        """Pr(z | s', a) for every s', as the product of per-sensor channels."""
        out = np.ones(self.num_states)
        for i in action:
            out = out * self.obs_channels[i][:, z[i]]
        return out

    def build_action_table(self, subsets) -> ActionTable:
        subsets = [sensor_set(a, self.num_sensors) for a in subsets]
        rows, obs, ptr, tid = [], [], [0], []
        for a in subsets:
            for z in enumerate_observations(self, a, check_budget=False):
                rows.append(self.joint_likelihood(a, z))
                obs.append(z)
            ptr.append(len(rows))
            tid.append(1 if a else 0)
        lik = np.ascontiguousarray(np.array(rows, dtype=float).reshape(len(rows), self.num_states))
        return ActionTable(
            actions=subsets, lik=lik, ptr=np.array(ptr, dtype=np.int64),
            tid=np.array(tid, dtype=np.int64), observations=obs,
            index={a: k for k, a in enumerate(subsets)},
        )

    @cached_property
    def action_table(self) -> ActionTable:
        """Table over the action set A."""
        return self.build_action_table(self.actions)

    @cached_property
    def greedy_table(self) -> ActionTable:
        """Table over every subset of size <= K (greedy passes through smaller sets under ``exact_k``)."""
        return self.build_action_table(subsets_up_to(self.num_sensors, self.budget_k))

    @cached_property
    def greedy_masks(self) -> np.ndarray:
        """Bitmask -> action id of ``greedy_table`` (-1 for subsets larger than K)."""
        if self.num_sensors > 24:
            raise ModelError("bitmask lookup supports at most 24 sensors")
        out = np.full(1 << self.num_sensors, -1, dtype=np.int64)
        for k, a in enumerate(self.greedy_table.actions):
            out[sum(1 << i for i in a)] = k
        return out

    def subset_table(self, max_size: int) -> ActionTable:
        if max_size == self.budget_k:
            return self.greedy_table
        cache = self.__dict__.setdefault("_subset_tables", {})
        if max_size not in cache:
            cache[max_size] = self.build_action_table(subsets_up_to(self.num_sensors, max_size))
        return cache[max_size]


# --------------------------------------------------------------------------
# belief operations


def enumerate_observations(model: ActivePerceptionModel, action, check_budget: bool = True) -> list:
    """All joint observations for ``action``: the product of the selected sensors' alphabets."""
    action = sensor_set(action, model.num_sensors)
    if check_budget and len(action) > model.budget_k:
        raise ModelError(f"{action} exceeds the sensor budget {model.budget_k}")
    n = model.num_sensors
    sizes = model.obs_sizes
    out = []
    for combo in itertools.product(*(range(sizes[i]) for i in action)):
        z = [None] * n
        for i, v in zip(action, combo):
            z[i] = v
        out.append(tuple(z))
    return out


def _check_compatible(model, action, z):
    if len(z) != model.num_sensors:
        raise ModelError("joint observation must have one entry per sensor")
    sel = set(action)
    for i, zi in enumerate(z):
        if (zi is None) == (i in sel):
            raise ModelError(f"observation {z} is incompatible with sensors {action}")
        if zi is not None and not 0 <= zi < model.obs_sizes[i]:
            raise ModelError(f"reading {zi} out of range for sensor {i}")


def observation_probability(model: ActivePerceptionModel, b, action, z) -> float:
    action = sensor_set(action, model.num_sensors)
    _check_compatible(model, action, z)
    bp = np.asarray(b, dtype=float) @ model.transition_for(action)
    return float(bp @ model.joint_likelihood(action, z))


def belief_update(model: ActivePerceptionModel, b, action, z) -> np.ndarray:
    """Bayes-filter posterior after selecting ``action`` and observing ``z``."""
    action = sensor_set(action, model.num_sensors)
    _check_compatible(model, action, z)
    bp = np.asarray(b, dtype=float) @ model.transition_for(action)
    joint = bp * model.joint_likelihood(action, z)
    p = joint.sum()
    if not p > 0.0:
        raise ZeroProbabilityObservation(f"observation {z} has zero probability under {action}")
    return joint / p


def predicted_belief(model: ActivePerceptionModel, b, action=()) -> np.ndarray:
    return np.asarray(b, dtype=float) @ model.transition_for(action)


# --------------------------------------------------------------------------
# entropy and tangents


def belief_entropy(b) -> Union[float, np.ndarray]:
    """Shannon entropy in nats with 0 ln 0 = 0; works row-wise on a matrix."""
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0)), 0.0)
    h = -terms.sum(axis=-1)
    return float(h) if h.ndim == 0 else h


def clamp_tangent_point(beta) -> np.ndarray:
    beta = np.maximum(np.asarray(beta, dtype=float), TANGENT_FLOOR)
    return beta / beta.sum()


def entropy_tangent(beta) -> AlphaVector:
    """Hyperplane ln(beta) touching the negative entropy at ``beta``.

    Entries below 1e-6 are raised to it and the point renormalised, so the
    vector is an exact tangent at the clamped point and stays below -H
    everywhere (Gibbs' inequality).
    """
    return AlphaVector(np.log(clamp_tangent_point(beta)))


def build_tangent_set(tangent_points) -> TangentRewardSet:
    pts = [np.asarray(p, dtype=float) for p in tangent_points]
    if not pts:
        raise ModelError("need at least one tangent point")
    clamped = np.array([clamp_tangent_point(p) for p in pts])
    return TangentRewardSet(np.log(clamped), clamped)


def regular_tangent_points(num_states: int, per_state: int) -> list:
    """``per_state`` tangent points peaked on each state.

    Point ``j`` of state ``s`` puts mass ``1/|S| + (1 - 1/|S|) j / per_state``
    on ``s`` and spreads the rest evenly, so doubling ``per_state`` keeps every
    earlier point.
    """
    if per_state < 1:
        raise ModelError("per_state must be >= 1")
    if num_states == 1:
        return [np.ones(1)]
    pts = []
    for s in range(num_states):
        for j in range(1, per_state + 1):
            p = 1.0 / num_states + (1.0 - 1.0 / num_states) * j / per_state
            beta = np.full(num_states, (1.0 - p) / (num_states - 1))
            beta[s] = p
            pts.append(beta)
    return pts


def rho_eval(reward, b, action=()) -> float:
    """Immediate belief reward: max over reward vectors, or R(., a) . b for a state reward."""
    b = np.asarray(b, dtype=float)
    if isinstance(reward, StateReward):
        return float(reward.vector(action) @ b)
    return float((reward.reward_vectors @ b).max())


def best_prediction(reward, b) -> int:
    """Index of the reward vector maximising b . alpha; lowest index on ties."""
    return int(np.argmax(reward.reward_vectors @ np.asarray(b, dtype=float)))
