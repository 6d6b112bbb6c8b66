"""Exhaustive finite-horizon oracles and numerical property checks on tiny instances.

Everything here expands every sensor subset and every joint observation, so
it is exponential in the horizon and meant for models with a handful of
states and sensors. The expansion is batched: all posteriors of a level are
stacked and evaluated together.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import (
    ActivePerceptionModel,
    ModelError,
    ResourceBudgetError,
    StateReward,
    TangentRewardSet,
    belief_entropy,
    build_tangent_set,
    regular_tangent_points,
    subsets_up_to,
)

TOL = 1e-9
NODE_BUDGET = 50_000_000
CHUNK_ROWS = 400_000
GREEDY_FACTOR = 1.0 - math.exp(-1.0)


# --------------------------------------------------------------------------
# belief rewards for the oracle


def entropy_reward(shift: float = 0.0, marginal: Optional[np.ndarray] = None) -> Callable:
    """rho(b) = -H(b) + shift, row-wise. ``marginal`` (|S| x |S'|) maps beliefs first."""

    def rho(B):
        B = np.asarray(B, dtype=float)
        if marginal is not None:
            B = B @ marginal
        return shift - belief_entropy(np.atleast_2d(B))

    return rho


def tangent_reward(vectors, marginal: Optional[np.ndarray] = None) -> Callable:
    vec = np.atleast_2d(np.asarray(vectors, dtype=float))

    def rho(B):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if marginal is not None:
            B = B @ marginal
        return (B @ vec.T).max(axis=1)

    return rho


def model_reward(model: ActivePerceptionModel) -> Callable:
    r = model.reward
    if isinstance(r, StateReward):
        raise ModelError("state rewards depend on the action; the oracle handles them directly")
    return tangent_reward(r.reward_vectors)


# --------------------------------------------------------------------------
# the exhaustive oracle


class ExactOracle:
    """V_t and Q_t by full recursion over sensor subsets and joint observations.

    ``rho`` maps a batch of beliefs to immediate rewards (default: the model's
    own reward). ``policy`` picks the action at every node below the root:
    ``"optimal"`` (max over the action set), ``"greedy"`` (greedy subset
    construction on the node's Q values) or a callable ``policy(b, steps_to_go)``.
    """

    def __init__(self, model: ActivePerceptionModel, rho: Optional[Callable] = None,
                 policy="optimal", node_budget: int = NODE_BUDGET, chunk_rows: int = CHUNK_ROWS):
        self.model = model
        self.state_reward = rho is None and isinstance(model.reward, StateReward)
        self.rho = None if self.state_reward else (model_reward(model) if rho is None else rho)
        if not (policy in ("optimal", "greedy") or callable(policy)):
            raise ModelError(f"unknown oracle policy {policy!r}")
        self.policy = policy
        self.node_budget = node_budget
        self.chunk_rows = chunk_rows
        self._tables = {}

    # -- helpers -------------------------------------------------------------
    def _table(self, subsets):
        key = tuple(subsets)
        if key not in self._tables:
            self._tables[key] = self.model.build_action_table(list(subsets))
        return self._tables[key]

    def _node_subsets(self):
        if self.policy == "greedy":
            return subsets_up_to(self.model.num_sensors, self.model.budget_k)
        return list(self.model.actions)

    def _rterm(self, B, subsets):
        if self.state_reward:
            R = np.array([self.model.reward.vector(a) for a in subsets])
            return B @ R.T
        return np.repeat(self.rho(B)[:, None], len(subsets), axis=1)

    def estimate_nodes(self, num_beliefs: int, t: int, subsets=None) -> int:
        top = self._table(self.model.actions if subsets is None else list(subsets)).lik.shape[0]
        inner = self._table(self._node_subsets()).lik.shape[0]
        return num_beliefs * top * inner ** max(t - 1, 0)

    def _check_budget(self, num_beliefs, t, subsets=None):
        n = self.estimate_nodes(num_beliefs, t, subsets)
        if n > self.node_budget:
            raise ResourceBudgetError(f"exhaustive expansion needs ~{n} nodes, budget is {self.node_budget}")

    # -- recursion -----------------------------------------------------------
    def _q(self, B, t, subsets):
        table = self._table(subsets)
        nr = table.lik.shape[0]
        out = np.empty((B.shape[0], len(subsets)))
        step = max(1, self.chunk_rows // nr)
        for lo in range(0, B.shape[0], step):
            Bc = B[lo:lo + step]
            bp = np.einsum("ms,kst->kmt", Bc, self.model.transition_stack)
            joint = bp[table.tid[np.repeat(np.arange(len(subsets)), np.diff(table.ptr))]]
            joint = joint * table.lik[:, None, :]  # rows x M x S
            mass = joint.sum(axis=2)
            pos = mass > 0
            cont = np.zeros_like(mass)
            if pos.any():
                post = joint[pos] / mass[pos][:, None]
                cont[pos] = mass[pos] * self._value(post, t - 1)
            fut = np.add.reduceat(cont, table.ptr[:-1], axis=0).T
            out[lo:lo + step] = self._rterm(Bc, subsets) + self.model.discount * fut
        return out

    def _value(self, B, t):
        if t == 0:
            if self.state_reward:
                return self._rterm(B, self.model.actions).max(axis=1)
            return self.rho(B)
        if callable(self.policy):
            return self._value_policy(B, t)
        subsets = self._node_subsets()
        Q = self._q(B, t, subsets)
        if self.policy == "optimal":
            return Q.max(axis=1)
        return Q[np.arange(Q.shape[0]), greedy_rows(Q, subsets, self.model.num_sensors, self.model.budget_k)]

    def _value_policy(self, B, t):
        if isinstance(self.policy, OpenLoopPolicy):
            return self._q(B, t, [self.policy(None, t)])[:, 0]
        acts = [tuple(self.policy(b, t)) for b in B]
        out = np.empty(B.shape[0])
        for a in dict.fromkeys(acts):
            idx = np.array([i for i, x in enumerate(acts) if x == a])
            out[idx] = self._q(B[idx], t, [a])[:, 0]
        return out

    # -- public --------------------------------------------------------------
    def value(self, B, t: int) -> np.ndarray:
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if t < 0:
            raise ModelError("t must be >= 0")
        if t > 0 and not callable(self.policy):
            self._check_budget(B.shape[0], t, self._node_subsets())
        return self._value(B, t)

    def q(self, B, t: int, subsets=None) -> np.ndarray:
        """Q_t(b, a) for every belief row and every subset (default: all 2^N subsets)."""
        if t < 1:
            raise ModelError("Q needs t >= 1")
        B = np.atleast_2d(np.asarray(B, dtype=float))
        subsets = all_subsets(self.model.num_sensors) if subsets is None else [tuple(s) for s in subsets]
        self._check_budget(B.shape[0], t, subsets)
        return self._q(B, t, subsets)


class OpenLoopPolicy:
    """Fixed sensor set per steps-to-go, ignoring the belief."""

    def __init__(self, plan: dict):
        self.plan = {int(k): tuple(v) for k, v in plan.items()}

    def __call__(self, b, steps_to_go):
        return self.plan[int(steps_to_go)]

    @classmethod
    def random(cls, model, horizon: int, rng):
        acts = model.actions
        return cls({t: acts[rng.integers(len(acts))] for t in range(1, horizon + 1)})


def all_subsets(n: int) -> list:
    return subsets_up_to(n, n)


def greedy_rows(Q, subsets, num_sensors, k) -> np.ndarray:
    """Greedy subset construction on each row of a Q table; returns column indices.

    Same rule as the backup kernel: per round, add the sensor whose union has
    the largest Q, lowest index within 1e-12 (relative) of the best.
    """
    lookup = np.full(1 << num_sensors, -1, dtype=np.int64)
    for j, a in enumerate(subsets):
        lookup[sum(1 << i for i in a)] = j
    m = Q.shape[0]
    rows = np.arange(m)
    mask = np.zeros(m, dtype=np.int64)
    for _ in range(min(k, num_sensors)):
        vals = np.full((m, num_sensors), -np.inf)
        for e in range(num_sensors):
            free = ((mask >> e) & 1) == 0
            ids = lookup[mask | (1 << e)]
            vals[free, e] = Q[rows[free], ids[free]]
        top = vals.max(axis=1)
        thr = top - 1e-12 * np.maximum(1.0, np.abs(top))
        pick = np.argmax(vals >= thr[:, None], axis=1)
        mask |= np.int64(1) << pick
    return lookup[mask]


def exact_value(model, t: int, b, rho=None, policy="optimal", node_budget=NODE_BUDGET):
    """V_t(b) by exhaustive expansion; a float for one belief, an array for a matrix."""
    B = np.asarray(b, dtype=float)
    v = ExactOracle(model, rho, policy, node_budget).value(B, t)
    return float(v[0]) if B.ndim == 1 else v


def greedy_exact_value(model, t: int, b, rho=None, node_budget=NODE_BUDGET):
    """V^G_t(b): the greedy Bellman operator applied t times, exhaustively."""
    return exact_value(model, t, b, rho, "greedy", node_budget)


# --------------------------------------------------------------------------
# reports


@dataclass
class CheckReport:
    name: str
    passed: bool
    worst_violation: float
    checked: int
    witness: Optional[dict] = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SubmodularityReport(CheckReport):
    """Worst value of Delta(e|a_N) - Delta(e|a_M) over every a_M <= a_N, e outside a_N."""


def _mask_pairs(n):
    """All (M, N, e) with M subset of N and e not in N, as bitmask arrays."""
    Ms, Ns, Es = [], [], []
    for N in range(1 << n):
        sub = N
        while True:
            for e in range(n):
                if not (N >> e) & 1:
                    Ms.append(sub)
                    Ns.append(N)
                    Es.append(e)
            if sub == 0:
                break
            sub = (sub - 1) & N
    return np.array(Ms), np.array(Ns), np.array(Es)


def _mask_columns(n):
    order = all_subsets(n)
    col = np.empty(1 << n, dtype=np.int64)
    for j, a in enumerate(order):
        col[sum(1 << i for i in a)] = j
    return col


def _bits(mask) -> tuple:
    return tuple(i for i in range(64) if (int(mask) >> i) & 1)


def submodularity_violations(Q, n):
    """Per (belief, triple) diminishing-returns violation; positive means violated."""
    col = _mask_columns(n)
    M, N, e = _mask_pairs(n)
    e_bit = np.int64(1) << e
    gain_M = Q[:, col[M | e_bit]] - Q[:, col[M]]
    gain_N = Q[:, col[N | e_bit]] - Q[:, col[N]]
    return gain_N - gain_M, (M, N, e)


def _subset_witness(B, idx, triples):
    i, j = idx
    M, N, e = triples
    return {"belief": B[i].tolist(), "a_M": list(_bits(M[j])), "a_N": list(_bits(N[j])), "a_e": int(e[j])}


def check_submodularity(model, t: int, beliefs, policy="optimal", rho=None, tol=TOL,
                        node_budget=NODE_BUDGET) -> SubmodularityReport:
    """Enumerate every a_M <= a_N, a_e outside a_N on exhaustive Q_t (default rho: exact -H)."""
    if model.num_sensors > 6:
        raise ModelError("submodularity enumeration supports at most 6 sensors")
    B = np.atleast_2d(np.asarray(beliefs, dtype=float))
    rho = entropy_reward() if rho is None else rho
    Q = ExactOracle(model, rho, policy, node_budget).q(B, t)
    viol, triples = submodularity_violations(Q, model.num_sensors)
    worst = float(viol.max()) if viol.size else 0.0
    passed = worst <= tol
    witness = None if passed else _subset_witness(B, np.unravel_index(np.argmax(viol), viol.shape), triples)
    return SubmodularityReport("submodularity", passed, max(worst, 0.0), int(viol.size), witness,
                               {"t": t, "policy": policy if isinstance(policy, str) else "callable"})


def check_monotonicity(model, t: int, beliefs, policy="optimal", rho=None, tol=TOL,
                       node_budget=NODE_BUDGET) -> CheckReport:
    """Q_t(b, a_M) <= Q_t(b, a_N) + tol for every nested pair."""
    n = model.num_sensors
    B = np.atleast_2d(np.asarray(beliefs, dtype=float))
    rho = entropy_reward() if rho is None else rho
    Q = ExactOracle(model, rho, policy, node_budget).q(B, t)
    col = _mask_columns(n)
    pairs = [(sub, N) for N in range(1 << n) for sub in range(1 << n) if sub & N == sub and sub != N]
    M = np.array([p[0] for p in pairs])
    N = np.array([p[1] for p in pairs])
    viol = Q[:, col[M]] - Q[:, col[N]]
    worst = float(viol.max())
    passed = worst <= tol
    witness = None
    if not passed:
        i, j = np.unravel_index(np.argmax(viol), viol.shape)
        witness = {"belief": B[i].tolist(), "a_M": list(_bits(M[j])), "a_N": list(_bits(N[j]))}
    return CheckReport("monotonicity", passed, max(worst, 0.0), int(viol.size), witness, {"t": t})


def check_nonnegativity(model, t: int, beliefs, policy="optimal", rho=None, tol=TOL,
                        node_budget=NODE_BUDGET) -> CheckReport:
    """Every Q_t(b, a) >= -tol, with rho = -H + ln|S| by default."""
    B = np.atleast_2d(np.asarray(beliefs, dtype=float))
    rho = entropy_reward(math.log(model.num_states)) if rho is None else rho
    Q = ExactOracle(model, rho, policy, node_budget).q(B, t)
    worst = float(-Q.min())
    passed = worst <= tol
    witness = None
    if not passed:
        i, j = np.unravel_index(np.argmin(Q), Q.shape)
        witness = {"belief": B[i].tolist(), "a": list(all_subsets(model.num_sensors)[j])}
    return CheckReport("nonnegativity", passed, max(worst, 0.0), int(Q.size), witness, {"t": t})


def check_greedy_value_bound(model, beliefs, t_max: int, rho=None, tol=TOL,
                         node_budget=NODE_BUDGET) -> CheckReport:
    """V^G_t(b) >= (1 - 1/e)^(2t) V*_t(b) - tol for t = 0..t_max (default rho: -H + ln|S|)."""
    B = np.atleast_2d(np.asarray(beliefs, dtype=float))
    rho = entropy_reward(math.log(model.num_states)) if rho is None else rho
    opt = ExactOracle(model, rho, "optimal", node_budget)
    grd = ExactOracle(model, rho, "greedy", node_budget)
    worst, witness, ratios = -np.inf, None, {}
    for t in range(t_max + 1):
        vs, vg = opt.value(B, t), grd.value(B, t)
        gap = GREEDY_FACTOR ** (2 * t) * vs - vg
        ratios[t] = float((vg / np.where(vs > 0, vs, np.nan)).min()) if np.any(vs > 0) else 1.0
        i = int(np.argmax(gap))
        if gap[i] > worst:
            worst = float(gap[i])
            witness = {"t": t, "belief": B[i].tolist(), "greedy": float(vg[i]), "optimal": float(vs[i])}
    passed = worst <= tol
    return CheckReport("greedy-value-bound", passed, max(worst, 0.0), B.shape[0] * (t_max + 1),
                       None if passed else witness, {"min_ratio_by_t": ratios})


def check_tangent_gap(model, densities=(2, 4, 8), t: int = 1, beliefs=None, seed=0,
                      node_budget=NODE_BUDGET) -> CheckReport:
    """Sampled sup |V*_t(exact entropy) - V*_t(tangent reward)| per tangent density.

    Tangent points come from ``regular_tangent_points``, whose grids are nested
    when the density doubles, so the gap should not increase.
    """
    ns = model.num_states
    if beliefs is None:
        beliefs = np.random.default_rng(seed).dirichlet(np.ones(ns), size=25)
    B = np.atleast_2d(np.asarray(beliefs, dtype=float))
    exact = ExactOracle(model, entropy_reward(), "optimal", node_budget).value(B, t)
    gaps = []
    for d in densities:
        tset = build_tangent_set(regular_tangent_points(ns, d))
        approx = ExactOracle(model, tangent_reward(tset.vectors), "optimal", node_budget).value(B, t)
        gaps.append(float(np.abs(exact - approx).max()))
    incr = [max(0.0, b - a) for a, b in zip(gaps, gaps[1:])]
    worst = max(incr) if incr else 0.0
    return CheckReport("tangent-gap", worst <= TOL, worst, len(densities) * B.shape[0], None,
                       {"densities": list(densities), "gaps": gaps, "t": t})


# --------------------------------------------------------------------------
# entropy identities on explicit joint tables


def conditional_entropy(prior, channels, subset) -> float:
    """H(s | z_subset) from the exhaustive joint table of state and readings."""
    prior = np.asarray(prior, dtype=float)
    joint = prior.copy()[None, :]
    for i in subset:
        O = np.asarray(channels[i], dtype=float)
        joint = (joint[:, None, :] * O.T[None, :, :]).reshape(-1, prior.shape[0])
    pz = joint.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(joint > 0, joint / pz[:, None], 1.0)
        return float(-(joint * np.log(ratio)).sum())


def posterior_entropy_expectation(model, b, action) -> float:
    """sum_z Pr(z) H(b^{a,z}) through the Bayes filter."""
    from .model import belief_update, enumerate_observations, observation_probability

    total = 0.0
    for z in enumerate_observations(model, action, check_budget=False):
        p = observation_probability(model, b, action, z)
        if p > 0:
            total += p * belief_entropy(belief_update(model, b, action, z))
    return total


def check_conditional_entropy_identity(model, beliefs, tol=TOL) -> CheckReport:
    """Expected posterior entropy equals H(s'|z) from the joint Pr(z, s') table, every subset."""
    worst, witness, n = 0.0, None, 0
    subsets = all_subsets(model.num_sensors)
    for b in np.atleast_2d(beliefs):
        for a in subsets:
            lhs = posterior_entropy_expectation(model, b, a)
            rhs = conditional_entropy(b @ model.transition_for(a), model.obs_channels, a)
            n += 1
            if abs(lhs - rhs) > worst:
                worst = abs(lhs - rhs)
                witness = {"belief": list(map(float, b)), "a": list(a)}
    passed = worst <= tol
    return CheckReport("conditional-entropy-identity", passed, worst, n, None if passed else witness)


def check_entropy_submodularity(prior, channels, tol=TOL) -> CheckReport:
    """H(s|z_{A|B}) + H(s|z_{A&B}) >= H(s|z_A) + H(s|z_B) - tol for all reading subsets A, B."""
    n = len(channels)
    H = {m: conditional_entropy(prior, channels, _bits(m)) for m in range(1 << n)}
    worst, witness, count = -np.inf, None, 0
    for A, Bm in itertools.combinations_with_replacement(range(1 << n), 2):
        v = H[A] + H[Bm] - H[A | Bm] - H[A & Bm]
        count += 1
        if v > worst:
            worst, witness = v, {"A": list(_bits(A)), "B": list(_bits(Bm))}
    passed = worst <= tol
    return CheckReport("entropy-submodularity", passed, max(worst, 0.0), count, None if passed else witness)


def check_epsilon_transfer(model, t: int, beliefs, tangent_vectors, policy, node_budget=NODE_BUDGET) -> CheckReport:
    """Tangent-reward Q_t is eps'-submodular with eps' = 4 (gamma + 1) eta.

    ``policy`` must be a fixed callable so exact and tangent rewards follow the
    same policy. eta is the measured sup of |V_{t-1} - V~_{t-1}| over every
    posterior reached from ``beliefs`` and of |rho - rho~| at the beliefs
    themselves.
    """
    if not callable(policy):
        raise ModelError("epsilon transfer needs one policy shared by both rewards")
    B = np.atleast_2d(np.asarray(beliefs, dtype=float))
    exact, approx = entropy_reward(), tangent_reward(tangent_vectors)
    q_tan = ExactOracle(model, approx, policy, node_budget).q(B, t)
    viol, _ = submodularity_violations(q_tan, model.num_sensors)
    worst = float(max(viol.max(), 0.0))
    eta = float(np.abs(exact(B) - approx(B)).max())
    table = model.build_action_table(all_subsets(model.num_sensors))
    bp = np.einsum("ms,kst->kmt", B, model.transition_stack)
    joint = bp[table.tid[np.repeat(np.arange(table.num_actions), np.diff(table.ptr))]] * table.lik[:, None, :]
    mass = joint.sum(axis=2)
    post = joint[mass > 0] / mass[mass > 0][:, None]
    v_exact = ExactOracle(model, exact, policy, node_budget).value(post, t - 1)
    v_tan = ExactOracle(model, approx, policy, node_budget).value(post, t - 1)
    eta = max(eta, float(np.abs(v_exact - v_tan).max()))
    bound = 4.0 * (model.discount + 1.0) * eta
    return CheckReport("epsilon-transfer", worst <= bound + TOL, worst, int(viol.size), None,
                       {"eta": eta, "bound": bound})


# --------------------------------------------------------------------------
# correlated channels


def correlated_noise_model(num_cells: int, num_sensors: int, accuracy: float, flip: float,
                           noise_stay: float = 1.0, p_stay: float = 1.0, seed=None):
    """Sensors that are independent given (cell, shared noise bit) but correlated given the cell.

    The hidden state is ``(cell, noise)``; while the noise bit is 1 every
    sensor's reading is flipped with probability ``flip``. Returns the model
    and the |S| x cells marginalisation matrix for an entropy reward over the
    cell alone.
    """
    rng = np.random.default_rng(seed)
    cells = num_cells
    ns = 2 * cells
    Tc = np.full((cells, cells), (1 - p_stay) / max(cells - 1, 1))
    np.fill_diagonal(Tc, p_stay if cells > 1 else 1.0)
    Tn = np.array([[noise_stay, 1 - noise_stay], [1 - noise_stay, noise_stay]])
    T = np.kron(Tc, Tn)
    chans = []
    for i in range(num_sensors):
        target = i % cells if seed is None else int(rng.integers(cells))
        O = np.empty((ns, 2))
        for c in range(cells):
            hit = accuracy if c == target else 1 - accuracy
            for nb in range(2):
                p = hit if nb == 0 else (1 - flip) * hit + flip * (1 - hit)
                O[2 * c + nb] = (p, 1 - p)
        chans.append(O)
    marginal = np.kron(np.eye(cells), np.ones((2, 1)))
    b0 = np.full(ns, 1.0 / ns)
    model = ActivePerceptionModel(T, tuple(chans), TangentRewardSet(np.zeros((1, ns))),
                                  budget_k=min(2, num_sensors), initial_belief=b0)
    return model, marginal


def search_correlated_counterexample(trials: int = 20, seed: int = 0, t: int = 1) -> dict:
    """Random correlated-noise instances; records the worst submodularity violation found."""
    rng = np.random.default_rng(seed)
    worst, found = 0.0, None
    for k in range(trials):
        cells = int(rng.integers(2, 4))
        nsens = int(rng.integers(2, 4))
        acc = float(rng.uniform(0.6, 0.95))
        flip = float(rng.uniform(0.5, 1.0))
        model, marg = correlated_noise_model(cells, nsens, acc, flip, seed=int(rng.integers(1 << 31)))
        B = rng.dirichlet(np.ones(model.num_states), size=10)
        rep = check_submodularity(model, t, B, rho=entropy_reward(marginal=marg))
        if rep.worst_violation > worst:
            worst = rep.worst_violation
            found = {"trial": k, "cells": cells, "sensors": nsens, "accuracy": acc, "flip": flip,
                     "witness": rep.witness}
    return {"trials": trials, "seed": seed, "t": t, "worst_violation": worst,
            "violation_found": worst > TOL, "instance": found}


# --------------------------------------------------------------------------
# seeded suites


def random_channels(rng, num_states, num_sensors, max_readings=3):
    return tuple(rng.dirichlet(np.ones(int(rng.integers(2, max_readings + 1))), size=num_states)
                 for _ in range(num_sensors))


def random_rho_model(rng, max_states=5, max_sensors=4, max_k=2, horizon=4) -> ActivePerceptionModel:
    """Random tangent-reward model: random dynamics, channels and 1..5 entropy tangents."""
    ns = int(rng.integers(2, max_states + 1))
    n = int(rng.integers(1, max_sensors + 1))
    k = int(rng.integers(1, min(max_k, n) + 1))
    pts = rng.dirichlet(np.ones(ns), size=int(rng.integers(1, 6)))
    return ActivePerceptionModel(
        rng.dirichlet(np.ones(ns), size=ns), random_channels(rng, ns, n),
        build_tangent_set(pts), budget_k=k, discount=float(rng.uniform(0.5, 1.0)), horizon=horizon,
        initial_belief=rng.dirichlet(np.ones(ns)),
    )


def random_ir_model(rng, max_states=5, max_sensors=4, max_k=2, horizon=4) -> ActivePerceptionModel:
    from .model import IRRewardMatrix

    m = random_rho_model(rng, max_states, max_sensors, max_k, horizon)
    R = rng.uniform(-1.0, 1.0, size=(m.num_states, int(rng.integers(1, 6))))
    return m.replace(reward=IRRewardMatrix(R))


def equivalence_suite(seed=7, models=20, beliefs=50, t_max=4) -> dict:
    """Max |V^IR - V^rho| over random model/policy pairs, both reduction directions."""
    from .reduction import equivalence_check, equivalence_check_ir, random_table_policy

    rng = np.random.default_rng(seed)
    worst = {"rho-to-ir": 0.0, "ir-to-rho": 0.0}
    per_t = {t: 0.0 for t in range(1, t_max + 1)}
    for i in range(models):
        m = random_rho_model(rng, horizon=t_max)
        B = rng.dirichlet(np.ones(m.num_states), size=beliefs)
        pol = random_table_policy(m, B, t_max, seed=seed + i)
        mi = random_ir_model(rng, horizon=t_max)
        Bi = rng.dirichlet(np.ones(mi.num_states), size=beliefs)
        pol_ir = random_table_policy(mi, Bi, t_max, seed=seed + i, predictions=mi.reward.rewards)
        for t in range(1, t_max + 1):
            d1 = equivalence_check(m, pol, t, B)
            d2 = equivalence_check_ir(mi, pol_ir, t, Bi)
            worst["rho-to-ir"] = max(worst["rho-to-ir"], d1)
            worst["ir-to-rho"] = max(worst["ir-to-rho"], d2)
            per_t[t] = max(per_t[t], d1, d2)
    dev = max(worst.values())
    return {"suite": "equivalence", "seed": seed, "models": models, "beliefs": beliefs, "t_max": t_max,
            "max_deviation": dev, "by_direction": worst, "by_horizon": {str(k): v for k, v in per_t.items()},
            "passed": dev <= TOL}


def entropy_suite(seed=7, count=6, max_sensors=5, max_states=3, k=2):
    """Conditionally independent binary-channel models, half static and half dynamic.

    Returns a list of ``(model, static)`` pairs.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        ns = int(rng.integers(2, max_states + 1))
        n = int(rng.integers(3, max_sensors + 1))
        static = i % 2 == 0
        T = np.eye(ns) if static else rng.dirichlet(np.ones(ns), size=ns)
        chans = tuple(rng.dirichlet(np.ones(2), size=ns) for _ in range(n))
        model = ActivePerceptionModel(T, chans, TangentRewardSet(np.zeros((1, ns))),
                                      budget_k=min(k, n), discount=0.9)
        out.append((model, static))
    return out


def premise_policies(model, static, t, rng, count=3):
    """Continuation policies for which the full reading history is independent given the state.

    Any continuation works for t = 1 (there is none). Beyond one step the
    premise needs a static state and a fixed, belief-independent schedule of
    sensor sets.
    """
    if t == 1:
        return ["optimal"]
    if not static:
        return []
    return [OpenLoopPolicy.random(model, t, rng) for _ in range(count)]


def property_suite(seed=7, t_max=3, beliefs=25, count=6, max_sensors=5) -> dict:
    """Submodularity, monotonicity and non-negativity over the entropy suite, t = 1..t_max."""
    rng = np.random.default_rng(seed + 1)
    checks = {"submodularity": 0.0, "monotonicity": 0.0, "nonnegativity": 0.0}
    evaluated = 0
    for model, static in entropy_suite(seed, count, max_sensors):
        B = rng.dirichlet(np.ones(model.num_states), size=beliefs)
        for t in range(1, t_max + 1):
            for pol in premise_policies(model, static, t, rng):
                checks["submodularity"] = max(checks["submodularity"],
                                              check_submodularity(model, t, B, pol).worst_violation)
                checks["monotonicity"] = max(checks["monotonicity"],
                                             check_monotonicity(model, t, B, pol).worst_violation)
                checks["nonnegativity"] = max(checks["nonnegativity"],
                                              check_nonnegativity(model, t, B, pol).worst_violation)
                evaluated += 1
            for pol in ("optimal", "greedy"):
                checks["monotonicity"] = max(checks["monotonicity"],
                                             check_monotonicity(model, t, B, pol).worst_violation)
                checks["nonnegativity"] = max(checks["nonnegativity"],
                                              check_nonnegativity(model, t, B, pol).worst_violation)
    return {"suite": "properties", "seed": seed, "t_max": t_max, "beliefs": beliefs, "models": count,
            "policies_checked": evaluated, "worst_violation": checks,
            "passed": all(v <= TOL for v in checks.values())}


def bound_suite(seed=7, t_max=3, beliefs=25, count=6, max_sensors=5) -> dict:
    """Greedy-versus-optimal bound on the entropy suite with rho = -H + ln|S|."""
    rng = np.random.default_rng(seed + 1)
    worst, ratios = 0.0, []
    for model, _ in entropy_suite(seed, count, max_sensors):
        B = rng.dirichlet(np.ones(model.num_states), size=beliefs)
        rep = check_greedy_value_bound(model, B, t_max)
        worst = max(worst, rep.worst_violation)
        ratios.append(min(rep.details["min_ratio_by_t"].values()))
    return {"suite": "bounds", "seed": seed, "t_max": t_max, "worst_violation": worst,
            "min_greedy_ratio": float(min(ratios)), "passed": worst <= TOL}


def identity_suite(seed=7, priors=20, max_sensors=4, max_states=4, beliefs=10) -> dict:
    """Conditional-entropy identity, entropy submodularity and K = 1 greedy/exact backup agreement."""
    from .greedy import greedy_solve
    from .pbvi import sample_beliefs, solve

    rng = np.random.default_rng(seed + 2)
    identity = submod = 0.0
    for model, _ in entropy_suite(seed):
        B = rng.dirichlet(np.ones(model.num_states), size=beliefs)
        identity = max(identity, check_conditional_entropy_identity(model, B).worst_violation)
    for _ in range(priors):
        ns = int(rng.integers(2, max_states + 1))
        n = int(rng.integers(2, max_sensors + 1))
        prior = rng.dirichlet(np.ones(ns))
        submod = max(submod, check_entropy_submodularity(prior, random_channels(rng, ns, n)).worst_violation)
    backup = 0.0
    for i in range(5):
        m = random_ir_model(rng, max_k=1, horizon=3).replace(budget_k=1)
        Bs = sample_beliefs(m, 30, seed + i)
        full, gr = solve(m, Bs), greedy_solve(m, Bs)
        for v_full, v_gr in zip(full, gr):
            backup = max(backup, float(np.abs(v_full.evaluate(Bs.beliefs) - v_gr.evaluate(Bs.beliefs)).max()))
    worst = {"conditional-entropy-identity": identity, "entropy-submodularity": submod,
             "greedy-k1-backup": backup}
    return {"suite": "identities", "seed": seed, "worst_violation": worst,
            "passed": all(v <= TOL for v in worst.values())}


def adaptive_counterexample(seed=7, t=2, beliefs=25) -> dict:
    """Submodularity with adaptive continuations, outside the independence premise; recorded, not asserted."""
    rng = np.random.default_rng(seed + 1)
    out = []
    for model, static in entropy_suite(seed):
        B = rng.dirichlet(np.ones(model.num_states), size=beliefs)
        rep = check_submodularity(model, t, B, "optimal")
        out.append({"static": static, "states": model.num_states, "sensors": model.num_sensors,
                    "worst_violation": rep.worst_violation, "witness": rep.witness})
    return {"t": t, "seed": seed, "instances": out}


__all__ = [
    "CheckReport",
    "ExactOracle",
    "adaptive_counterexample",
    "identity_suite",
    "bound_suite",
    "entropy_suite",
    "equivalence_suite",
    "premise_policies",
    "property_suite",
    "random_ir_model",
    "random_rho_model",
    "OpenLoopPolicy",
    "SubmodularityReport",
    "check_conditional_entropy_identity",
    "check_entropy_submodularity",
    "check_epsilon_transfer",
    "check_monotonicity",
    "check_nonnegativity",
    "check_submodularity",
    "check_tangent_gap",
    "check_greedy_value_bound",
    "conditional_entropy",
    "correlated_noise_model",
    "entropy_reward",
    "exact_value",
    "greedy_exact_value",
    "greedy_rows",
    "search_correlated_counterexample",
    "tangent_reward",
]
