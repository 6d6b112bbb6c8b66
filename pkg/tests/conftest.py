import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from activepercept import ActivePerceptionModel, IRRewardMatrix, TangentRewardSet, build_tangent_set

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def binary_channel(rates):
    """Channel matrix with Pr(reading 0 | s) = rates[s]."""
    r = np.asarray(rates, dtype=float)
    return np.stack([r, 1.0 - r], axis=1)


@pytest.fixture
def two_state_tangent_model():
    """Static 2-state model with one noisy sensor and tangents at (0.3, 0.7) and (0.7, 0.3)."""
    return ActivePerceptionModel(
        np.eye(2), (binary_channel([0.8, 0.3]),), build_tangent_set([[0.3, 0.7], [0.7, 0.3]]),
        budget_k=1, discount=0.9, horizon=3,
    )


@pytest.fixture
def small_ir_model():
    rng = np.random.default_rng(11)
    T = rng.dirichlet(np.ones(3), size=3)
    chans = (binary_channel([0.9, 0.2, 0.5]), rng.dirichlet(np.ones(3), size=3), binary_channel([0.1, 0.6, 0.7]))
    return ActivePerceptionModel(T, chans, IRRewardMatrix(np.eye(3)), budget_k=2, discount=0.95, horizon=3)


def random_ir(rng, ns=None, n=None, k=None, preds=None, horizon=3, static=False):
    ns = ns or int(rng.integers(2, 5))
    n = n or int(rng.integers(1, 4))
    k = k or int(rng.integers(1, n + 1))
    preds = preds or int(rng.integers(1, 4))
    T = np.eye(ns) if static else rng.dirichlet(np.ones(ns), size=ns)
    chans = tuple(rng.dirichlet(np.ones(int(rng.integers(2, 4))), size=ns) for _ in range(n))
    R = rng.normal(size=(ns, preds))
    return ActivePerceptionModel(T, chans, IRRewardMatrix(R), budget_k=k, discount=0.9, horizon=horizon)


def random_rho(rng, **kw):
    m = random_ir(rng, **kw)
    return m.replace(reward=TangentRewardSet(np.asarray(m.reward.rewards).T))


# one line per acceptance criterion, filled in by test_acceptance and printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
