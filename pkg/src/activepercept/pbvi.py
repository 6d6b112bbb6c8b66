"""Point-based value iteration for active-perception POMDPs.

Backups work belief by belief. For a belief ``b`` and sensor set ``a`` the
continuation term ``sum_z max_alpha alpha^{a,z} . b`` is scored on the
predicted belief ``b T_a`` without materialising every back-projected vector;
only the winning action's alpha-vector is assembled.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .model import (
    ActivePerceptionModel,
    IRRewardMatrix,
    ModelError,
    StateReward,
    TangentRewardSet,
    belief_update,
    enumerate_observations,
    observation_probability,
)

MODES = ("naive-ir", "decomposed-ir", "crosssum-rho")
DEDUP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Gamma_t: rows of ``vectors`` with their normal and prediction actions."""

    stage: int
    vectors: np.ndarray
    actions: list = field(default_factory=list)
    predictions: list = field(default_factory=list)

    def __post_init__(self):
        vec = np.ascontiguousarray(np.atleast_2d(np.array(self.vectors, dtype=float)))
        if vec.shape[0] == 0:
            raise ModelError("a value function needs at least one vector")
        if not np.all(np.isfinite(vec)):
            raise ModelError("alpha-vectors must be finite")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        n = vec.shape[0]
        acts = list(self.actions) or [()] * n
        preds = list(self.predictions) or [None] * n
        object.__setattr__(self, "actions", [tuple(a) for a in acts])
        object.__setattr__(self, "predictions", preds)

    def __len__(self):
        return self.vectors.shape[0]

    def evaluate(self, b):
        """max_alpha alpha . b, for one belief or row-wise for a matrix of beliefs."""
        return (np.asarray(b, dtype=float) @ self.vectors.T).max(axis=-1)

    def best_index(self, b) -> int:
        return int(np.argmax(self.vectors @ np.asarray(b, dtype=float)))


@dataclass(frozen=True, eq=False)
class BeliefSet:
    beliefs: np.ndarray
    seed: Optional[int] = None
    method: str = "random-walk"

    def __len__(self):
        return self.beliefs.shape[0]

    def __iter__(self):
        return iter(self.beliefs)


# --------------------------------------------------------------------------
# helpers


def _as_matrix(gamma) -> np.ndarray:
    if isinstance(gamma, ValueFunction):
        return gamma.vectors
    return np.ascontiguousarray(np.atleast_2d(np.asarray(gamma, dtype=float)))


def _as_beliefs(B) -> np.ndarray:
    if isinstance(B, BeliefSet):
        return B.beliefs
    return np.atleast_2d(np.asarray(B, dtype=float))


def dedup_rows(vectors: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    """Indices of the first occurrence of each row under L-infinity distance < tol."""
    keep = []
    for i, v in enumerate(vectors):
        if not keep or np.abs(vectors[keep] - v).max(axis=1).min() >= tol:
            keep.append(i)
    return np.array(keep, dtype=np.int64)


def state_reward_matrix(model: ActivePerceptionModel, table=None) -> np.ndarray:
    """R(., a) for every action of ``table`` (default: the action set), one row per action."""
    table = model.action_table if table is None else table
    return np.array([model.reward.vector(a) for a in table.actions])


def initial_value_function(model: ActivePerceptionModel) -> ValueFunction:
    """Gamma_0: the reward vectors themselves."""
    r = model.reward
    if isinstance(r, IRRewardMatrix):
        vec = r.reward_vectors
        return ValueFunction(0, vec, [()] * len(vec), list(range(len(vec))))
    if isinstance(r, TangentRewardSet):
        return ValueFunction(0, r.vectors, [()] * len(r.vectors), list(range(len(r.vectors))))
    mat = state_reward_matrix(model)
    keep = dedup_rows(mat)
    return ValueFunction(0, mat[keep], [model.actions[k] for k in keep], [None] * len(keep))


def _continuation_vector(model, table, k, best, G) -> np.ndarray:
    """gamma * T_a @ sum_z lik_z * alpha_{best(z)} for action row-block ``k``."""
    rows = np.arange(table.ptr[k], table.ptr[k + 1])
    inner = (table.lik[rows] * G[best[rows]]).sum(axis=0)
    return model.discount * (model.transition_stack[table.tid[k]] @ inner)


def continuation_values(model, G, b, table=None, ids=None):
    """(values, best rows) of sum_z max_alpha for the actions ``ids`` of ``table``, undiscounted."""
    table = model.action_table if table is None else table
    if ids is None:
        ids = np.arange(table.num_actions, dtype=np.int64)
    bp = np.ascontiguousarray(np.asarray(b, dtype=float) @ model.transition_stack)
    best = np.zeros(table.lik.shape[0], dtype=np.int64)
    vals = _kernels.eval_actions(bp, table.lik, table.ptr, table.tid, ids, G, best)
    return vals, best


# --------------------------------------------------------------------------
# per-belief backups


def _point_decomposed(model, G, b, Rvec):
    table = model.action_table
    fut, best = continuation_values(model, G, b, table)
    p = _kernels.first_max(Rvec @ b)
    k = _kernels.first_max(fut)
    alpha = Rvec[p] + _continuation_vector(model, table, k, best, G)
    return alpha, table.actions[k], p


def _point_state(model, G, b, Rstate):
    table = model.action_table
    fut, best = continuation_values(model, G, b, table)
    k = _kernels.first_max(Rstate @ b + model.discount * fut)
    alpha = Rstate[k] + _continuation_vector(model, table, k, best, G)
    return alpha, table.actions[k], None


def _point_naive(model, G, b, Rvec):
    # the joint <a_n, a_p> space is treated as flat: the observation argmax is
    # recomputed for every prediction action
    table = model.action_table
    bp = np.ascontiguousarray(b @ model.transition_stack)
    rv = Rvec @ b
    n_p = Rvec.shape[0]
    q = np.empty(table.num_actions * n_p)
    rows_buf = np.zeros(table.lik.shape[0], dtype=np.int64)
    for k in range(table.num_actions):
        ids = np.array([k], dtype=np.int64)
        for p in range(n_p):
            fut = _kernels.eval_actions(bp, table.lik, table.ptr, table.tid, ids, G, rows_buf)[0]
            q[k * n_p + p] = rv[p] + model.discount * fut
    j = _kernels.first_max(q)
    k, p = divmod(j, n_p)
    _kernels.eval_actions(bp, table.lik, table.ptr, table.tid, np.array([k], dtype=np.int64), G, rows_buf)
    alpha = Rvec[p] + _continuation_vector(model, table, k, rows_buf, G)
    return alpha, table.actions[k], p


def _require(model, cls, mode):
    if not isinstance(model.reward, cls):
        raise ModelError(f"backend {mode!r} needs a {cls.__name__} reward, model has {type(model.reward).__name__}")


def _run_points(point_fn, model, G, B, args, threads):
    B = _as_beliefs(B)
    if threads is None or threads <= 1 or len(B) < 2:
        return [point_fn(model, G, b, *args) for b in B]
    chunks = np.array_split(np.arange(len(B)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda idx: [point_fn(model, G, B[i], *args) for i in idx], chunks)
    return [r for part in parts for r in part]


def _assemble(stage, results) -> ValueFunction:
    vecs = np.array([r[0] for r in results])
    keep = dedup_rows(vecs)
    return ValueFunction(stage, vecs[keep], [results[i][1] for i in keep], [results[i][2] for i in keep])


def _stage_of(gamma_prev) -> int:
    return gamma_prev.stage + 1 if isinstance(gamma_prev, ValueFunction) else 1


def backup_naive_ir(model, gamma_prev, B, threads=1) -> ValueFunction:
    _require(model, IRRewardMatrix, "naive-ir")
    G = _as_matrix(gamma_prev)
    Rvec = np.ascontiguousarray(model.reward.reward_vectors)
    return _assemble(_stage_of(gamma_prev), _run_points(_point_naive, model, G, B, (Rvec,), threads))


def backup_decomposed_ir(model, gamma_prev, B, threads=1) -> ValueFunction:
    _require(model, IRRewardMatrix, "decomposed-ir")
    G = _as_matrix(gamma_prev)
    Rvec = np.ascontiguousarray(model.reward.reward_vectors)
    return _assemble(_stage_of(gamma_prev), _run_points(_point_decomposed, model, G, B, (Rvec,), threads))


def backup_crosssum_rho(model, gamma_prev, B, threads=1) -> ValueFunction:
    """Gamma_rho backup with the maximisation over Gamma_rho split from the observation argmax."""
    _require(model, TangentRewardSet, "crosssum-rho")
    G = _as_matrix(gamma_prev)
    Rvec = np.ascontiguousarray(model.reward.vectors)
    return _assemble(_stage_of(gamma_prev), _run_points(_point_decomposed, model, G, B, (Rvec,), threads))


def backup_state_reward(model, gamma_prev, B, threads=1) -> ValueFunction:
    _require(model, StateReward, "state")
    G = _as_matrix(gamma_prev)
    Rstate = np.ascontiguousarray(state_reward_matrix(model))
    return _assemble(_stage_of(gamma_prev), _run_points(_point_state, model, G, B, (Rstate,), threads))


def backup_crosssum_full(model, gamma_prev, B) -> ValueFunction:
    """Literal cross-sum Gamma_rho + Gamma^{a,z_1} + Gamma^{a,z_2} + ...; exponential, tiny models only."""
    G = _as_matrix(gamma_prev)
    R = model.reward.reward_vectors
    table = model.action_table
    B = _as_beliefs(B)
    cands, labels = [], []
    for k, a in enumerate(table.actions):
        Ta = model.transition_stack[table.tid[k]]
        acc = np.array(R, dtype=float)
        lab = [(p,) for p in range(len(R))]
        for r in table.rows(k):
            g = model.discount * ((table.lik[r][None, :] * G) @ Ta.T)
            acc = (acc[:, None, :] + g[None, :, :]).reshape(-1, model.num_states)
            lab = [l + (j,) for l in lab for j in range(len(G))]
        cands.append(acc)
        labels.extend((a, l[0]) for l in lab)
    allv = np.concatenate(cands)
    pick = (B @ allv.T).argmax(axis=1)
    keep = dedup_rows(allv[pick])
    return ValueFunction(
        _stage_of(gamma_prev), allv[pick][keep],
        [labels[pick[i]][0] for i in keep], [labels[pick[i]][1] for i in keep],
    )


_BACKUPS = {
    "naive-ir": backup_naive_ir,
    "decomposed-ir": backup_decomposed_ir,
    "crosssum-rho": backup_crosssum_rho,
    "state": backup_state_reward,
}


def default_mode(model) -> str:
    r = model.reward
    if isinstance(r, IRRewardMatrix):
        return "decomposed-ir"
    if isinstance(r, TangentRewardSet):
        return "crosssum-rho"
    return "state"


def solve(model, B, mode=None, horizon=None, threads=1, timings=None) -> list:
    """Iterate the selected backup from Gamma_0; returns the value functions of stages 1..h.

    ``timings``, if a list, receives the wall-clock seconds of each backup.
    """
    import time

    mode = default_mode(model) if mode is None else mode
    if mode not in _BACKUPS:
        raise ModelError(f"unknown backend {mode!r}")
    backup = _BACKUPS[mode]
    h = model.horizon if horizon is None else horizon
    V = initial_value_function(model)
    out = []
    for _ in range(h):
        t0 = time.perf_counter()
        V = backup(model, V, B, threads=threads)
        if timings is not None:
            timings.append(time.perf_counter() - t0)
        out.append(V)
    return out


def lookahead_vectors(model, stages: list, steps_to_go: Optional[int] = None) -> ValueFunction:
    """Gamma_{t-1} used to pick the action with ``t`` steps to go (default: the full horizon)."""
    t = len(stages) if steps_to_go is None else min(steps_to_go, len(stages))
    if t <= 1:
        return initial_value_function(model)
    return stages[t - 2]


# --------------------------------------------------------------------------
# execution-time action choice


def q_values(model, gamma, b, table=None, ids=None) -> np.ndarray:
    """Q(b, a) = rho-term + discount * sum_z Pr(z|a,b) V(b^{a,z}) for the actions ``ids`` of ``table``."""
    table = model.action_table if table is None else table
    G = _as_matrix(gamma)
    b = np.asarray(b, dtype=float)
    fut, _ = continuation_values(model, G, b, table, ids)
    r = model.reward
    if isinstance(r, StateReward):
        acts = table.actions if ids is None else [table.actions[i] for i in ids]
        rterm = np.array([r.vector(a) @ b for a in acts])
    else:
        rterm = float((r.reward_vectors @ b).max())
    return rterm + model.discount * fut


def greedy_policy_action(model, V, b):
    """Exact one-step-lookahead argmax over A; returns (sensor set, prediction index or None)."""
    q = q_values(model, V, b)
    a = model.action_table.actions[_kernels.first_max(q)]
    pred = None
    if not isinstance(model.reward, StateReward):
        pred = _kernels.first_max(model.reward.reward_vectors @ np.asarray(b, dtype=float))
    return a, pred


# --------------------------------------------------------------------------
# belief sampling


def sample_beliefs(model, count: int, seed: int = 0, walk_length: Optional[int] = None) -> BeliefSet:
    """b0 plus distinct beliefs met along seeded random walks (random sensor sets, simulated observations)."""
    if count < 1:
        raise ModelError("count must be >= 1")
    rng = np.random.default_rng(seed)
    ns = model.num_states
    walk_length = max(model.horizon, 10) if walk_length is None else walk_length
    beliefs = [np.array(model.initial_belief)]
    acts = model.actions
    attempts = 0
    max_attempts = 200 * count + 1000
    while len(beliefs) < count and attempts < max_attempts:
        b = np.array(model.initial_belief)
        s = rng.choice(ns, p=b)
        for _ in range(walk_length):
            attempts += 1
            a = acts[rng.integers(len(acts))]
            T = model.transition_for(a)
            s = rng.choice(ns, p=T[s])
            z = [None] * model.num_sensors
            for i in a:
                z[i] = int(rng.choice(model.obs_sizes[i], p=model.obs_channels[i][s]))
            b = belief_update(model, b, a, tuple(z))
            if np.abs(np.array(beliefs) - b).sum(axis=1).min() >= 1e-9:
                beliefs.append(b)
                if len(beliefs) >= count:
                    break
    return BeliefSet(np.array(beliefs), seed, "random-walk")


def reachable_beliefs(model, b, depth: int, actions=None) -> np.ndarray:
    """Every belief reachable from ``b`` within ``depth`` steps (deduplicated, ``b`` first)."""
    actions = model.actions if actions is None else actions
    frontier = [np.asarray(b, dtype=float)]
    out = list(frontier)
    for _ in range(depth):
        nxt = []
        for x in frontier:
            for a in actions:
                for z in enumerate_observations(model, a, check_budget=False):
                    if observation_probability(model, x, a, z) > 0:
                        nxt.append(belief_update(model, x, a, z))
        frontier = nxt
        out.extend(nxt)
    arr = np.array(out)
    keep = dedup_rows(arr, 1e-9)
    return arr[keep]
