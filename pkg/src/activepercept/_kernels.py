"""Hot inner loops of the point-based backups.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics (ties resolve to the lowest index in both).
``ACTIVE_PERCEPT_NUMBA=0`` selects the numpy path at import time; the
benchmark in ``benchmarks/bench_kernels.py`` times both directly.
"""
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("ACTIVE_PERCEPT_NUMBA", "1") != "0"


def eval_actions_numpy(bp, lik, ptr, tid, act_ids, gamma_mat, best_out):
    """Sum over joint observations of the best continuation value.

    For each action ``a`` in ``act_ids`` returns
    ``sum_r max_j gamma_mat[j] . (bp[tid[a]] * lik[r])`` over its observation
    rows ``ptr[a] <= r < ptr[a+1]``; the maximising ``j`` of every visited row
    is written into ``best_out[r]``.
    """
    starts = ptr[act_ids]
    counts = ptr[act_ids + 1] - starts
    rows = np.repeat(starts - np.cumsum(counts) + counts, counts) + np.arange(counts.sum())
    w = bp[np.repeat(tid[act_ids], counts)] * lik[rows]
    scores = w @ gamma_mat.T
    best = scores.argmax(axis=1)
    best_out[rows] = best
    vmax = scores[np.arange(rows.shape[0]), best]
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return np.add.reduceat(vmax, offsets)


def first_max(values, tol=1e-12):
    """Lowest index whose value is within ``tol`` (relative to max(1, |max|)) of the maximum."""
    values = np.asarray(values)
    m = values.max()
    return int(np.flatnonzero(values >= m - tol * max(1.0, abs(m)))[0])


def greedy_select_numpy(bp, lik, ptr, tid, gamma_mat, mask_to_id, num_sensors, k, rterm, best_out):
    """Greedy subset construction; returns the action id of the chosen subset.

    ``mask_to_id[mask]`` maps a sensor bitmask to its action id and ``rterm``
    holds the action-dependent reward term per action id (zeros when the
    reward does not depend on the action). Adding the element with the largest
    Q(Y + e) equals adding the largest marginal gain, so Q(Y) is not needed.
    """
    mask = 0
    chosen = mask_to_id[0]
    for _ in range(min(k, num_sensors)):
        cands = np.array([e for e in range(num_sensors) if not (mask >> e) & 1], dtype=np.int64)
        ids = mask_to_id[mask | (np.int64(1) << cands)]
        vals = rterm[ids] + eval_actions_numpy(bp, lik, ptr, tid, ids, gamma_mat, best_out)
        j = first_max(vals)
        mask |= 1 << int(cands[j])
        chosen = ids[j]
    return int(chosen)


def belief_batch_numpy(bp, lik):
    """Unnormalised posteriors ``bp * lik[r]`` and their masses for every row."""
    joint = bp[None, :] * lik
    return joint, joint.sum(axis=1)


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def eval_actions_numba(bp, lik, ptr, tid, act_ids, gamma_mat, best_out):
        m, ns = gamma_mat.shape
        out = np.empty(act_ids.shape[0])
        w = np.empty(ns)
        for k in range(act_ids.shape[0]):
            a = act_ids[k]
            t = tid[a]
            total = 0.0
            for r in range(ptr[a], ptr[a + 1]):
                for s in range(ns):
                    w[s] = bp[t, s] * lik[r, s]
                bestv = -np.inf
                bestj = 0
                for j in range(m):
                    acc = 0.0
                    for s in range(ns):
                        acc += gamma_mat[j, s] * w[s]
                    if acc > bestv:
                        bestv = acc
                        bestj = j
                best_out[r] = bestj
                total += bestv
            out[k] = total
        return out

    @njit(cache=True, nogil=True)
    def greedy_select_numba(bp, lik, ptr, tid, gamma_mat, mask_to_id, num_sensors, k, rterm, best_out):
        mask = 0
        chosen = mask_to_id[0]
        rounds = min(k, num_sensors)
        ids = np.empty(num_sensors, dtype=np.int64)
        for _ in range(rounds):
            nc = 0
            for e in range(num_sensors):
                if not (mask >> e) & 1:
                    ids[nc] = mask_to_id[mask | (1 << e)]
                    nc += 1
            v = eval_actions_numba(bp, lik, ptr, tid, ids[:nc], gamma_mat, best_out)
            m = -np.inf
            for c in range(nc):
                v[c] += rterm[ids[c]]
                if v[c] > m:
                    m = v[c]
            thr = m - 1e-12 * max(1.0, abs(m))
            pick = 0
            for c in range(nc):
                if v[c] >= thr:
                    pick = c
                    break
            chosen = ids[pick]
            nc = 0
            for e in range(num_sensors):
                if not (mask >> e) & 1:
                    if nc == pick:
                        mask |= 1 << e
                        break
                    nc += 1
        return chosen

    @njit(cache=True, nogil=True)
    def belief_batch_numba(bp, lik):
        nr, ns = lik.shape
        joint = np.empty((nr, ns))
        mass = np.zeros(nr)
        for r in range(nr):
            for s in range(ns):
                v = bp[s] * lik[r, s]
                joint[r, s] = v
                mass[r] += v
        return joint, mass

else:  # pragma: no cover
    eval_actions_numba = eval_actions_numpy
    greedy_select_numba = greedy_select_numpy
    belief_batch_numba = belief_batch_numpy


if USE_NUMBA:
    eval_actions = eval_actions_numba
    greedy_select = greedy_select_numba
    belief_batch = belief_batch_numba
else:
    eval_actions = eval_actions_numpy
    greedy_select = greedy_select_numpy
    belief_batch = belief_batch_numpy


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
