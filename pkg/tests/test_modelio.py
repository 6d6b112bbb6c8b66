import json

import numpy as np
import pytest

from activepercept import ActivePerceptionModel, IRRewardMatrix, build_tangent_set
from activepercept.modelio import (
    ModelFileError,
    RunManifest,
    dumps,
    load_model,
    load_value_function,
    model_from_dict,
    model_to_dict,
    report_to_dict,
    save_model,
    save_value_function,
    validate,
    value_function_from_dict,
    value_function_to_dict,
)
from activepercept.pbvi import sample_beliefs, solve
from activepercept.surveillance import GridworldSpec, budget_model, build_gridworld, coverage_model
from conftest import binary_channel


def models():
    spec = GridworldSpec(num_cells=4, budget_k=2)
    yield build_gridworld(spec)
    yield coverage_model(spec)
    yield budget_model(GridworldSpec(num_cells=3), 2, 4)
    yield ActivePerceptionModel(np.eye(2), (binary_channel([0.8, 0.3]),),
                                build_tangent_set([[0.7, 0.3], [0.3, 0.7]]), discount=0.9)


def same_model(a, b):
    assert np.array_equal(a.transition, b.transition)
    assert all(np.array_equal(x, y) for x, y in zip(a.obs_channels, b.obs_channels))
    assert type(a.reward) is type(b.reward)
    assert dumps(model_to_dict(a)) == dumps(model_to_dict(b))
    assert (a.budget_k, a.exact_k, a.discount, a.horizon) == (b.budget_k, b.exact_k, b.discount, b.horizon)


@pytest.mark.parametrize("m", list(models()), ids=["grid", "coverage", "budget", "tangent"])
def test_model_round_trip(m, tmp_path):
    p = tmp_path / "m.json"
    save_model(m, p)
    back = load_model(p)
    same_model(m, back)
    save_model(back, tmp_path / "m2.json")
    assert p.read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_floats_survive_bit_for_bit():
    rng = np.random.default_rng(0)
    R = rng.normal(size=(3, 3))
    m = ActivePerceptionModel(rng.dirichlet(np.ones(3), size=3), (rng.dirichlet(np.ones(2), size=3),),
                              IRRewardMatrix(R))
    back = model_from_dict(json.loads(dumps(model_to_dict(m))))
    assert np.array_equal(back.reward.rewards, R)


def test_schema_rejects_bad_documents():
    doc = model_to_dict(build_gridworld(GridworldSpec(num_cells=3)))
    bad = dict(doc, format="other")
    with pytest.raises(ModelFileError, match="format"):
        model_from_dict(bad)
    with pytest.raises(ModelFileError, match="<root>"):
        model_from_dict(dict(doc, extra=1))
    with pytest.raises(ModelFileError):
        model_from_dict(dict(doc, discount=1.5))
    broken = json.loads(json.dumps(doc))
    broken["transition"][0][0] = 0.5
    with pytest.raises(ModelFileError, match="inconsistent"):
        model_from_dict(broken)


def test_symbols_must_be_all_or_none():
    doc = model_to_dict(build_gridworld(GridworldSpec(num_cells=3)))
    assert list(model_from_dict(doc).obs_symbols[1]) == ["present", "absent"]
    del doc["sensors"][0]["symbols"]
    with pytest.raises(ModelFileError, match="symbols"):
        model_from_dict(doc)
    for s in doc["sensors"]:
        s.pop("symbols", None)
    assert model_from_dict(doc).obs_symbols is None


def test_missing_and_unparseable_files(tmp_path):
    with pytest.raises(ModelFileError, match="no such file"):
        load_model(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ModelFileError, match="cannot parse"):
        load_model(tmp_path / "bad.json")


def test_value_function_round_trip(tmp_path):
    m = build_gridworld(GridworldSpec(num_cells=4, horizon=3))
    B = sample_beliefs(m, 15, 0)
    stages = solve(m, B)
    p = tmp_path / "vf.json"
    save_value_function(stages, p, "decomposed-ir", B)
    back, backend = load_value_function(p, m)
    assert backend == "decomposed-ir" and len(back) == 3
    for a, b in zip(stages, back):
        assert a.stage == b.stage and np.array_equal(a.vectors, b.vectors)
        assert [tuple(x) for x in a.actions] == [tuple(x) for x in b.actions]
        assert list(a.predictions) == list(b.predictions)
    doc = json.loads(p.read_text())
    assert doc["beliefs"] == {"count": 15, "seed": 0, "method": B.method}


def test_value_function_checks_against_model():
    m = build_gridworld(GridworldSpec(num_cells=4, horizon=2))
    doc = value_function_to_dict(solve(m, sample_beliefs(m, 5, 0)), "decomposed-ir")
    with pytest.raises(ModelFileError, match="states"):
        value_function_from_dict(doc, build_gridworld(GridworldSpec(num_cells=5)))
    renumbered = json.loads(json.dumps(doc))
    renumbered["stages"][0]["stage"] = 2
    with pytest.raises(ModelFileError, match="numbered"):
        value_function_from_dict(renumbered)
    short = json.loads(json.dumps(doc))
    short["stages"][0]["predictions"] = short["stages"][0]["predictions"][:-1] + [0, 0]
    with pytest.raises(ModelFileError, match="annotations"):
        value_function_from_dict(short)


def test_manifest_and_report_validate():
    man = RunManifest("verify", {"suite": "identities"}, seed=7, version="0.1.0", timings={"total": 1.0})
    assert "timings" not in man.to_dict(with_timings=False)
    rep = report_to_dict("identities", True, {"x": np.float64(1.5), "v": np.arange(2), "t": (1, 2)}, man)
    assert rep["results"] == {"x": 1.5, "v": [0, 1], "t": [1, 2]}
    json.dumps(rep)
    with pytest.raises(ModelFileError):
        RunManifest("unknown", {}).to_dict()
    with pytest.raises(ModelFileError):
        validate({"format": "activepercept-report"}, "report")


def test_dumps_is_key_sorted_and_rejects_nan():
    assert dumps({"b": 1, "a": 2}).index('"a"') < dumps({"b": 1, "a": 2}).index('"b"')
    with pytest.raises(ValueError):
        dumps({"x": float("nan")})
