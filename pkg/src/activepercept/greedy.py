"""Greedy maximisation over sensor subsets and greedy point-based backups."""
from __future__ import annotations

import time

import numpy as np

from . import _kernels
from .model import ModelError, StateReward, sensor_set
from .pbvi import (
    ValueFunction,
    _as_matrix,
    _assemble,
    _continuation_vector,
    _run_points,
    _stage_of,
    continuation_values,
    initial_value_function,
)


class SetFunction:
    """Memoised set function over canonical sensor subsets.

    ``fn`` maps one subset to a value; ``batch_fn``, if given, maps a list of
    subsets to an array and is used when greedy evaluates a whole round.
    """

    def __init__(self, fn=None, batch_fn=None):
        if fn is None and batch_fn is None:
            raise ValueError("need fn or batch_fn")
        self._fn = fn
        self._batch_fn = batch_fn
        self.cache = {}
        self.calls = 0

    def __call__(self, subset) -> float:
        return self.many([subset])[0]

    def many(self, subsets) -> list:
        keys = [sensor_set(s) for s in subsets]
        missing = [k for k in dict.fromkeys(keys) if k not in self.cache]
        if missing:
            self.calls += len(missing)
            if self._batch_fn is not None:
                vals = self._batch_fn(missing)
            else:
                vals = [self._fn(k) for k in missing]
            for k, v in zip(missing, vals):
                self.cache[k] = float(v)
        return [self.cache[k] for k in keys]


def _as_set_function(Q) -> SetFunction:
    return Q if isinstance(Q, SetFunction) else SetFunction(Q)


def greedy_argmax(Q, ground, K: int, trace=None) -> tuple:
    """Build a subset of size min(K, |ground|) by repeatedly adding the largest marginal gain.

    Ties go to the lowest sensor index. ``trace``, if a list, receives
    ``(chosen, gains)`` per round, ``gains`` mapping each candidate to its
    marginal gain.
    """
    Q = _as_set_function(Q)
    ground = sorted(set(int(e) for e in ground))
    chosen = ()
    base = Q(chosen)
    for _ in range(min(K, len(ground))):
        cands = [e for e in ground if e not in chosen]
        vals = Q.many([chosen + (e,) for e in cands])
        gains = [v - base for v in vals]
        j = _kernels.first_max(gains)
        if trace is not None:
            trace.append((cands[j], dict(zip(cands, gains))))
        chosen = sensor_set(chosen + (cands[j],))
        base = vals[j]
    return chosen


def q_from_gamma(model, gamma, b, table=None) -> SetFunction:
    """Q(b, .) as a set function over all subsets, backed by ``gamma`` (Gamma_{t-1}).

    Subsets larger than K are allowed; their likelihood table is built on demand.
    """
    G = _as_matrix(gamma)
    b = np.asarray(b, dtype=float)
    table = model.greedy_table if table is None else table
    r = model.reward
    rterm = None if isinstance(r, StateReward) else float((r.reward_vectors @ b).max())

    def batch(subsets):
        if all(s in table.index for s in subsets):
            tab = table
        else:
            tab = model.subset_table(max(len(s) for s in subsets))
        ids = tab.ids(subsets)
        fut, _ = continuation_values(model, G, b, tab, ids)
        if rterm is None:
            rt = np.array([r.vector(s) @ b for s in subsets])
        else:
            rt = rterm
        return rt + model.discount * fut

    return SetFunction(batch_fn=batch)


def _point_greedy(model, G, b, Rvec):
    table = model.greedy_table
    bp = np.ascontiguousarray(b @ model.transition_stack)
    r = model.reward
    state = isinstance(r, StateReward)
    best = np.zeros(table.lik.shape[0], dtype=np.int64)
    if state:
        rterm = np.array([r.vector(a) @ b for a in table.actions])
    else:
        rterm = np.zeros(table.num_actions)
    k = _kernels.greedy_select(
        bp, table.lik, table.ptr, table.tid, G, model.greedy_masks,
        model.num_sensors, model.budget_k, rterm, best,
    )
    a = table.actions[k]
    if state:
        return r.vector(a) + _continuation_vector(model, table, k, best, G), a, None
    p = _kernels.first_max(Rvec @ b)
    return Rvec[p] + _continuation_vector(model, table, k, best, G), a, p


def backup_greedy(model, gamma_prev, B, threads=1) -> ValueFunction:
    """Point-based backup with the argmax over sensor sets replaced by greedy_argmax."""
    G = _as_matrix(gamma_prev)
    r = model.reward
    Rvec = None if isinstance(r, StateReward) else np.ascontiguousarray(r.reward_vectors)
    return _assemble(_stage_of(gamma_prev), _run_points(_point_greedy, model, G, B, (Rvec,), threads))


def greedy_solve(model, B, horizon=None, threads=1, timings=None) -> list:
    h = model.horizon if horizon is None else horizon
    if h < 1:
        raise ModelError("horizon must be >= 1")
    V = initial_value_function(model)
    out = []
    for _ in range(h):
        t0 = time.perf_counter()
        V = backup_greedy(model, V, B, threads=threads)
        if timings is not None:
            timings.append(time.perf_counter() - t0)
        out.append(V)
    return out


def greedy_execution_action(model, V, b) -> tuple:
    return greedy_argmax(q_from_gamma(model, V, b), range(model.num_sensors), model.budget_k)
