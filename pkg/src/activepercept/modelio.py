"""JSON documents for models, value functions, reports and run manifests.

Floats are written with ``repr`` precision so a load reproduces every array
bit for bit, and keys are sorted so identical content gives identical bytes.
Each document kind has a versioned JSON schema under ``schemas/``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .model import (
    ActivePerceptionModel,
    IRRewardMatrix,
    ModelError,
    StateReward,
    TangentRewardSet,
)
from .pbvi import ValueFunction

MODEL_FORMAT = "activepercept-model"
VALUE_FUNCTION_FORMAT = "activepercept-value-function"
REPORT_FORMAT = "activepercept-report"
FORMAT_VERSION = 1


class ModelFileError(ModelError):
    """A model or value-function file is unreadable, malformed or inconsistent."""


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files(__package__).joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc: dict, name: str) -> None:
    """Raise ModelFileError unless ``doc`` matches schema ``name``."""
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ModelFileError(f"{name} document invalid at {where}: {e.message}") from None


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ModelFileError(f"no such file: {path}") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFileError(f"cannot parse {path}: {e}") from None


def _mat(a):
    return np.asarray(a, dtype=float).tolist()


# --------------------------------------------------------------------------
# models


def reward_to_dict(reward) -> dict:
    if isinstance(reward, TangentRewardSet):
        pts = None if reward.tangent_points is None else _mat(reward.tangent_points)
        return {"kind": "tangent", "vectors": _mat(reward.vectors), "tangent_points": pts}
    if isinstance(reward, IRRewardMatrix):
        return {"kind": "ir", "rewards": _mat(reward.rewards)}
    if isinstance(reward, StateReward):
        return {"kind": "state", "coverage": _mat(reward.coverage)}
    raise ModelError(f"cannot serialise reward of type {type(reward).__name__}")


def reward_from_dict(d: dict):
    kind = d["kind"]
    if kind == "tangent":
        pts = d.get("tangent_points")
        return TangentRewardSet(np.array(d["vectors"], dtype=float),
                                None if pts is None else np.array(pts, dtype=float))
    if kind == "ir":
        return IRRewardMatrix(np.array(d["rewards"], dtype=float))
    return StateReward(np.array(d["coverage"], dtype=float))


def model_to_dict(model: ActivePerceptionModel) -> dict:
    sensors = []
    for i, ch in enumerate(model.obs_channels):
        s = {"channel": _mat(ch)}
        if model.obs_symbols is not None:
            s["symbols"] = list(model.obs_symbols[i])
        sensors.append(s)
    return {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "transition": _mat(model.transition),
        "active_transition": None if model.active_transition is None else _mat(model.active_transition),
        "sensors": sensors,
        "reward": reward_to_dict(model.reward),
        "budget_k": int(model.budget_k),
        "exact_k": bool(model.exact_k),
        "discount": float(model.discount),
        "horizon": int(model.horizon),
        "initial_belief": np.asarray(model.initial_belief, dtype=float).tolist(),
    }


def model_from_dict(doc: dict) -> ActivePerceptionModel:
    validate(doc, "model")
    sensors = doc["sensors"]
    have = ["symbols" in s for s in sensors]
    if any(have) and not all(have):
        raise ModelFileError("either every sensor declares symbols or none does")
    try:
        return ActivePerceptionModel(
            transition=np.array(doc["transition"], dtype=float),
            obs_channels=tuple(np.array(s["channel"], dtype=float) for s in sensors),
            reward=reward_from_dict(doc["reward"]),
            budget_k=doc["budget_k"],
            discount=doc["discount"],
            horizon=doc["horizon"],
            initial_belief=np.array(doc["initial_belief"], dtype=float),
            active_transition=None if doc.get("active_transition") is None
            else np.array(doc["active_transition"], dtype=float),
            exact_k=doc.get("exact_k", False),
            obs_symbols=tuple(s["symbols"] for s in sensors) if all(have) else None,
        )
    except ModelFileError:
        raise
    except (ModelError, ValueError) as e:
        # ragged nested lists surface as ValueError from numpy
        raise ModelFileError(f"inconsistent model: {e}") from None


def save_model(model: ActivePerceptionModel, path) -> None:
    write_json(model_to_dict(model), path)


def load_model(path) -> ActivePerceptionModel:
    return model_from_dict(read_json(path))


# --------------------------------------------------------------------------
# value functions


def value_function_to_dict(stages, backend: str, beliefs=None, manifest=None) -> dict:
    out = {
        "format": VALUE_FUNCTION_FORMAT,
        "version": FORMAT_VERSION,
        "backend": backend,
        "stages": [
            {
                "stage": int(v.stage),
                "vectors": _mat(v.vectors),
                "actions": [[int(i) for i in a] for a in v.actions],
                "predictions": [None if p is None else int(p) for p in v.predictions],
            }
            for v in stages
        ],
    }
    if beliefs is not None:
        out["beliefs"] = {"count": len(beliefs), "seed": beliefs.seed, "method": beliefs.method}
    if manifest is not None:
        out["manifest"] = manifest.to_dict() if isinstance(manifest, RunManifest) else manifest
    return out


def value_function_from_dict(doc: dict, model: ActivePerceptionModel = None) -> list:
    """Stage list ready for execution; with ``model`` the dimensions are checked."""
    validate(doc, "value_function")
    stages = []
    for i, s in enumerate(doc["stages"]):
        n = len(s["vectors"])
        if len(s["actions"]) not in (0, n) or len(s["predictions"]) not in (0, n):
            raise ModelFileError(f"stage {i}: annotations do not match the vector count")
        try:
            v = ValueFunction(s["stage"], np.array(s["vectors"], dtype=float), s["actions"], s["predictions"])
        except (ModelError, ValueError) as e:
            raise ModelFileError(f"stage {i}: {e}") from None
        if model is not None:
            if v.vectors.shape[1] != model.num_states:
                raise ModelFileError(f"stage {i}: vectors have {v.vectors.shape[1]} entries, "
                                     f"model has {model.num_states} states")
            if any(j >= model.num_sensors for a in v.actions for j in a):
                raise ModelFileError(f"stage {i}: action names a sensor the model lacks")
        stages.append(v)
    if [v.stage for v in stages] != list(range(1, len(stages) + 1)):
        raise ModelFileError("stages must be numbered 1, 2, 3, ... in order")
    return stages


def save_value_function(stages, path, backend: str, beliefs=None, manifest=None) -> None:
    write_json(value_function_to_dict(stages, backend, beliefs, manifest), path)


def load_value_function(path, model: ActivePerceptionModel = None):
    """(stages, backend) from a value-function file."""
    doc = read_json(path)
    return value_function_from_dict(doc, model), doc["backend"]


# --------------------------------------------------------------------------
# manifests and reports


@dataclass
class RunManifest:
    """Everything that determines a run's output; ``timings`` is informational only."""

    subcommand: str
    flags: dict
    seed: int = None
    version: str = ""
    backend: str = None
    timings: dict = field(default_factory=dict)

    def to_dict(self, with_timings=True) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if not with_timings:
            d.pop("timings", None)
        validate(d, "manifest")
        return d


def report_to_dict(suite: str, passed: bool, results: dict, manifest=None) -> dict:
    out = {"format": REPORT_FORMAT, "version": FORMAT_VERSION, "suite": suite,
           "passed": bool(passed), "results": _plain(results)}
    if manifest is not None:
        out["manifest"] = manifest.to_dict() if isinstance(manifest, RunManifest) else manifest
    validate(out, "report")
    return out


def _plain(x):
    """Recursively convert numpy scalars/arrays and tuples to JSON-native values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


__all__ = [
    "FORMAT_VERSION",
    "ModelFileError",
    "RunManifest",
    "dumps",
    "load_model",
    "load_schema",
    "load_value_function",
    "model_from_dict",
    "model_to_dict",
    "read_json",
    "report_to_dict",
    "save_model",
    "save_value_function",
    "validate",
    "value_function_from_dict",
    "value_function_to_dict",
    "write_json",
]
