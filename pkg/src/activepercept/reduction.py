"""Translating between belief-reward (rho) and prediction-reward (IR) models and policies.

A rho-model carries a ``TangentRewardSet``; its IR counterpart has one
prediction action per vector and ``R(s, p) = vectors[p, s]``. Dynamics,
observations, initial belief and horizon are shared verbatim.
"""
from __future__ import annotations

import hashlib

import numpy as np

from . import _kernels
from .model import (
    ActivePerceptionModel,
    IRRewardMatrix,
    ModelError,
    ResourceBudgetError,
    TangentRewardSet,
    enumerate_observations,
)

POLICY_NODE_BUDGET = 2_000_000


def reduce_rho_to_ir(model: ActivePerceptionModel) -> ActivePerceptionModel:
    if not isinstance(model.reward, TangentRewardSet):
        raise ModelError("reduce_rho_to_ir needs a TangentRewardSet reward")
    return model.replace(reward=IRRewardMatrix(np.array(model.reward.vectors).T))


def reduce_ir_to_rho(model: ActivePerceptionModel) -> ActivePerceptionModel:
    if not isinstance(model.reward, IRRewardMatrix):
        raise ModelError("reduce_ir_to_rho needs an IRRewardMatrix reward")
    return model.replace(reward=TangentRewardSet(np.array(model.reward.rewards).T))


def expected_prediction(rewards: np.ndarray, b) -> int:
    """argmax_p sum_s b(s) R(s, p), lowest index on ties."""
    return _kernels.first_max(np.asarray(b, dtype=float) @ np.asarray(rewards))


# --------------------------------------------------------------------------
# policies
#
# A policy is a callable ``policy(b, steps_to_go)``. For rho-models it returns
# a sensor set; for IR models a ``(sensor set, prediction)`` pair.


def _key(b) -> bytes:
    return np.ascontiguousarray(b, dtype=float).tobytes()


class TablePolicy:
    """Explicit belief -> action table per steps-to-go, nearest-belief (L1) fallback."""

    def __init__(self, table=None, default=None):
        self.table = {} if table is None else dict(table)
        self.default = default

    def set(self, b, steps_to_go, action):
        self.table[(int(steps_to_go), _key(b))] = (np.array(b, dtype=float), action)

    def __call__(self, b, steps_to_go):
        hit = self.table.get((int(steps_to_go), _key(b)))
        if hit is not None:
            return hit[1]
        same = [v for (t, _), v in self.table.items() if t == steps_to_go] or list(self.table.values())
        if not same:
            if self.default is None:
                raise KeyError("empty policy table")
            return self.default
        b = np.asarray(b, dtype=float)
        dist = [np.abs(x - b).sum() for x, _ in same]
        return same[int(np.argmin(dist))][1]

    def __len__(self):
        return len(self.table)


class HashedRandomPolicy:
    """Deterministic pseudo-random action per (belief, steps-to-go), total on the simplex."""

    def __init__(self, actions, seed=0):
        self.actions = list(actions)
        self.seed = int(seed)

    def __call__(self, b, steps_to_go):
        h = hashlib.blake2b(_key(b), digest_size=8, key=str((self.seed, int(steps_to_go))).encode())
        return self.actions[int.from_bytes(h.digest(), "little") % len(self.actions)]


def _action_rows(model, action):
    table = model.action_table
    k = table.index.get(action)
    if k is None:
        table = model.build_action_table([action])
        k = 0
    return model.transition_for(action), table.lik[table.ptr[k]:table.ptr[k + 1]]


def expand_level(model, B, actions):
    """Children of every belief row under its action.

    Returns (posteriors, probabilities, parent row); zero-probability
    observations are dropped. Rows come out grouped by parent, then by
    observation order, independent of the model's reward.
    """
    parents, probs, posts = [], [], []
    cache = {}
    for i, a in enumerate(actions):
        if a not in cache:
            cache[a] = _action_rows(model, a)
        T, lik = cache[a]
        joint = (B[i] @ T)[None, :] * lik
        mass = joint.sum(axis=1)
        keep = mass > 0
        posts.append(joint[keep] / mass[keep][:, None])
        probs.append(mass[keep])
        parents.append(np.full(int(keep.sum()), i))
    ns = B.shape[1]
    if not posts:
        return np.empty((0, ns)), np.empty(0), np.empty(0, dtype=np.int64)
    return np.concatenate(posts), np.concatenate(probs), np.concatenate(parents)


def _normal(reward, act):
    return tuple(act[0]) if isinstance(reward, IRRewardMatrix) else tuple(act)


def random_table_policy(model, beliefs, t: int, seed=0, predictions=None) -> TablePolicy:
    """Random normal actions over the belief trees reachable from ``beliefs`` within ``t`` steps.

    Every root gets an entry for each steps-to-go 0..t, so the table also
    serves shorter horizons. With ``predictions`` (an |S| x |A_p| reward
    matrix) entries are IR actions whose prediction is the expected-reward
    argmax.
    """
    rng = np.random.default_rng(seed)
    acts = model.actions
    pol = TablePolicy()

    def assign(b, steps):
        key = (steps, _key(b))
        if key not in pol.table:
            a = acts[rng.integers(len(acts))] if steps > 0 else ()
            pol.set(b, steps, a if predictions is None else (a, expected_prediction(predictions, b)))
        hit = pol.table[key][1]
        return hit if predictions is None else hit[0]

    roots = np.atleast_2d(np.asarray(beliefs, dtype=float))
    for horizon in range(t + 1):
        level = roots
        for steps in range(horizon, 0, -1):
            level_acts = [tuple(assign(b, steps)) for b in level]
            level, _, _ = expand_level(model, level, level_acts)
        for b in level:
            assign(b, 0)
    return pol


def reduce_policy_rho_to_ir(policy, rewards):
    """IR policy: same sensors as ``policy`` plus the expected-reward-maximising prediction."""
    R = np.asarray(rewards.rewards if isinstance(rewards, IRRewardMatrix) else rewards)

    def pi_ir(b, steps_to_go):
        return policy(b, steps_to_go), expected_prediction(R, b)

    return pi_ir


def reduce_policy_ir_to_rho(policy):
    """rho policy: the normal-action component of ``policy``."""

    def pi_rho(b, steps_to_go):
        return policy(b, steps_to_go)[0]

    return pi_rho


# --------------------------------------------------------------------------
# exhaustive policy evaluation


def policy_value(model: ActivePerceptionModel, policy, t: int, b, node_budget=POLICY_NODE_BUDGET):
    """V_t^pi(b) by expanding every observation branch; V_0 is the immediate reward.

    Works level by level on all roots at once; ``b`` may be one belief (float
    result) or a matrix of beliefs (array result).
    """
    if t < 0:
        raise ModelError("t must be >= 0")
    roots = np.asarray(b, dtype=float)
    B = np.atleast_2d(roots)
    widest = max(len(enumerate_observations(model, a, check_budget=False)) for a in model.actions)
    if B.shape[0] * sum(widest ** k for k in range(t + 1)) > node_budget:
        raise ResourceBudgetError(f"horizon {t} expands past {node_budget} nodes")
    r = model.reward
    level = B
    weight = np.ones(B.shape[0])
    root = np.arange(B.shape[0])
    total = np.zeros(B.shape[0])
    for k in range(t + 1):
        steps = t - k
        acts = [policy(x, steps) for x in level]
        if isinstance(r, IRRewardMatrix):
            imm = np.array([x @ r.rewards[:, a[1]] for x, a in zip(level, acts)])
        elif isinstance(r, TangentRewardSet):
            imm = (level @ r.vectors.T).max(axis=1) if len(level) else np.empty(0)
        else:
            imm = np.array([r.vector(tuple(a)) @ x for x, a in zip(level, acts)])
        if len(level):
            total += np.bincount(root, weights=(model.discount ** k) * weight * imm, minlength=B.shape[0])
        if steps == 0:
            break
        level, prob, parent = expand_level(model, level, [_normal(r, a) for a in acts])
        weight = weight[parent] * prob
        root = root[parent]
    return float(total[0]) if roots.ndim == 1 else total


def equivalence_check(model_rho, policy_rho, t: int, beliefs) -> float:
    """max |V^IR - V^rho| after reducing the rho-model and its policy to IR."""
    model_ir = reduce_rho_to_ir(model_rho)
    policy_ir = reduce_policy_rho_to_ir(policy_rho, model_ir.reward)
    B = np.atleast_2d(beliefs)
    return float(np.abs(policy_value(model_ir, policy_ir, t, B) - policy_value(model_rho, policy_rho, t, B)).max())


def equivalence_check_ir(model_ir, policy_ir, t: int, beliefs) -> float:
    """Reverse direction; ``policy_ir`` must predict the expected-reward argmax."""
    model_rho = reduce_ir_to_rho(model_ir)
    policy_rho = reduce_policy_ir_to_rho(policy_ir)
    R = model_ir.reward.rewards
    B = np.atleast_2d(beliefs)
    checked = _ArgmaxGuard(policy_ir, R)
    dev = np.abs(policy_value(model_rho, policy_rho, t, B) - policy_value(model_ir, checked, t, B)).max()
    return float(dev)


class _ArgmaxGuard:
    """Wraps an IR policy and rejects predictions that do not maximise b . R."""

    def __init__(self, policy, rewards):
        self.policy = policy
        self.rewards = rewards

    def __call__(self, b, steps_to_go):
        a = self.policy(b, steps_to_go)
        v = b @ self.rewards
        if v[a[1]] < v.max() - 1e-12:
            raise ModelError("IR policy predictions must maximise expected immediate reward")
        return a


def value_function_policy(model, stages, selector="exact"):
    """Policy acting by one-step lookahead on solved stages; IR models add the prediction."""
    from .greedy import greedy_execution_action
    from .pbvi import greedy_policy_action, lookahead_vectors

    def pi(b, steps_to_go):
        V = lookahead_vectors(model, stages, max(steps_to_go, 1))
        if selector == "greedy":
            a = greedy_execution_action(model, V, b)
        else:
            a = greedy_policy_action(model, V, b)[0]
        if isinstance(model.reward, IRRewardMatrix):
            return a, expected_prediction(model.reward.rewards, b)
        return a

    return pi


__all__ = [
    "HashedRandomPolicy",
    "TablePolicy",
    "equivalence_check",
    "equivalence_check_ir",
    "expand_level",
    "policy_value",
    "random_table_policy",
    "reduce_ir_to_rho",
    "reduce_policy_ir_to_rho",
    "reduce_policy_rho_to_ir",
    "reduce_rho_to_ir",
    "value_function_policy",
]
