"""Planning for active-perception POMDPs whose reward measures belief uncertainty."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ActivePerceptionModel,
    AlphaVector,
    IRRewardMatrix,
    ModelError,
    ResourceBudgetError,
    StateReward,
    TangentRewardSet,
    ZeroProbabilityObservation,
    belief_entropy,
    belief_update,
    build_tangent_set,
    entropy_tangent,
    enumerate_observations,
    observation_probability,
    regular_tangent_points,
)
from .pbvi import BeliefSet, ValueFunction, sample_beliefs, solve  # noqa: E402
from .greedy import greedy_argmax, greedy_solve  # noqa: E402
from .reduction import reduce_ir_to_rho, reduce_rho_to_ir  # noqa: E402

__all__ = [
    "ActivePerceptionModel",
    "AlphaVector",
    "BeliefSet",
    "IRRewardMatrix",
    "ModelError",
    "ResourceBudgetError",
    "StateReward",
    "TangentRewardSet",
    "ValueFunction",
    "ZeroProbabilityObservation",
    "__version__",
    "belief_entropy",
    "belief_update",
    "build_tangent_set",
    "entropy_tangent",
    "enumerate_observations",
    "greedy_argmax",
    "greedy_solve",
    "observation_probability",
    "reduce_ir_to_rho",
    "reduce_rho_to_ir",
    "regular_tangent_points",
    "sample_beliefs",
    "solve",
]
