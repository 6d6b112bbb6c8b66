import csv
import json

import jsonschema
import numpy as np
import pytest

from activepercept import cli
from activepercept.modelio import load_model, load_schema, load_value_function, save_model
from activepercept.surveillance import GridworldSpec, PlannedPolicy, build_gridworld, simulate
from activepercept import ActivePerceptionModel, build_tangent_set
from conftest import binary_channel

GRID = ["--env", "grid", "--cells", "4", "--horizon", "3"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path) as f:
        return list(csv.reader(f))


def test_parse_int_list():
    assert cli.parse_int_list("N=5,8,11") == [5, 8, 11]
    assert cli.parse_int_list("1..3") == [1, 2, 3]
    assert cli.parse_int_list("5..11:3") == [5, 8, 11]
    with pytest.raises(cli.FlagError):
        cli.parse_int_list("a,b")


def test_solve_writes_schema_valid_deterministic_output(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("solve", *GRID, "--beliefs", 20, "--out", a, "--timings", tmp_path / "t.json") == 0
    assert "solved 3 stages" in capsys.readouterr().out
    assert run("solve", *GRID, "--beliefs", 20, "--threads", 1, "--out", b) == 0
    doc = json.loads(a.read_text())
    jsonschema.validate(doc, load_schema("value_function"))
    jsonschema.validate(doc["manifest"], load_schema("manifest"))
    assert doc["manifest"]["seed"] == 7 and "timings" not in doc["manifest"]
    ta = json.loads((tmp_path / "t.json").read_text())["backup_seconds"]
    assert len(ta) == 3
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    assert da["stages"] == db["stages"]


def test_solve_twice_is_byte_identical(tmp_path):
    for name in ("a.json", "b.json"):
        assert run("solve", *GRID, "--beliefs", 15, "--out", tmp_path / name) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_solve_then_sim_matches_in_process(tmp_path, capsys):
    vf, model_path, out = tmp_path / "vf.json", tmp_path / "m.json", tmp_path / "sim.csv"
    assert run("solve", *GRID, "--beliefs", 20, "--out", vf, "--write-model", model_path) == 0
    assert run("sim", "--model", model_path, "--policy", "planned", "--vf", vf,
               "--episodes", 3, "--steps", 10, "--seed", 4, "--out", out) == 0
    rows = read_csv(out)
    assert tuple(rows[0]) == cli.METRIC_COLUMNS and len(rows) == 31
    model = load_model(model_path)
    stages, _ = load_value_function(vf, model)
    res = simulate(model, PlannedPolicy(model, stages), 3, 10, 4)
    assert [float(r[-1]) for r in rows[1:]] == [r for tr in res.trajectories for r in tr.rewards]
    man = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
    jsonschema.validate(man, load_schema("manifest"))
    assert man["subcommand"] == "sim" and "out" not in man["flags"]


def test_sim_is_deterministic(tmp_path):
    for name in ("a.csv", "b.csv"):
        assert run("sim", *GRID, "--policy", "myopic", "--beliefs", 10, "--episodes", 2,
                   "--steps", 8, "--out", tmp_path / name) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_sim_multi_person_and_rotate(tmp_path):
    out = tmp_path / "m.csv"
    assert run("sim", *GRID, "--k", 2, "--policy", "rotate", "--people", 2, "--episodes", 2,
               "--steps", 5, "--out", out) == 0
    rows = read_csv(out)
    assert len(rows) == 11 and rows[1][2].count(";") == 1


@pytest.mark.parametrize("suite", ["equivalence", "identities", "bounds", "submodularity", "monotonicity"])
def test_verify_report(suite, tmp_path, capsys):
    rep = tmp_path / "r.json"
    argv = ["verify", "--suite", suite, "--seed", 7, "--report", rep]
    if suite != "identities":
        argv += ["--models", 2, "--beliefs", 3, "--t-max", 1]
    assert run(*argv) == 0
    doc = json.loads(rep.read_text())
    jsonschema.validate(doc, load_schema("report"))
    assert doc["passed"] is True
    assert capsys.readouterr().out.startswith(f"{suite}: PASS")


def test_reduce_round_trip(tmp_path):
    m = ActivePerceptionModel(np.eye(2), (binary_channel([0.8, 0.3]),),
                              build_tangent_set([[0.7, 0.3], [0.3, 0.7]]))
    save_model(m, tmp_path / "rho.json")
    assert run("reduce", "--direction", "rho-to-ir", "--model", tmp_path / "rho.json",
               "--out", tmp_path / "ir.json") == 0
    R = load_model(tmp_path / "ir.json").reward.rewards
    assert np.allclose(np.diag(R), -0.357, atol=5e-3)
    assert run("reduce", "--direction", "ir-to-rho", "--model", tmp_path / "ir.json",
               "--out", tmp_path / "back.json") == 0
    assert np.array_equal(load_model(tmp_path / "back.json").reward.vectors, m.reward.vectors)
    assert run("reduce", "--direction", "ir-to-rho", "--model", tmp_path / "rho.json",
               "--out", tmp_path / "x.json") == 1


def test_bench_csv(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert run("bench", "--grid", "N=4", "--k", "1..2", "--horizon", 2, "--beliefs", 10,
               "--repeats", 1, "--out", out) == 0
    rows = read_csv(out)
    assert tuple(rows[0]) == cli.BENCH_COLUMNS
    totals = [r for r in rows[1:] if r[3] == "total"]
    assert len(totals) == 4 and all(float(r[4]) > 0 and float(r[5]) > 0 for r in totals)
    assert "time ratio" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["solve", "--out", "x.json"],
    ["solve", "--env", "grid", "--model", "m.json", "--out", "x.json"],
    ["solve", "--env", "grid", "--p-stay", "1.5", "--out", "x.json"],
    ["solve", "--env", "grid", "--backend", "crosssum-rho", "--out", "x.json"],
    ["sim", "--env", "grid", "--policy", "planned", "--out", "x.csv"],
    ["sim", "--model", "missing.json", "--out", "x.csv"],
    ["bench", "--grid", "N=2", "--out", "x.csv"],
    ["bench", "--backends", "nope", "--out", "x.csv"],
    ["verify", "--suite", "nope"],
])
def test_user_errors_exit_one_with_single_line(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("activepercept: ") and "\n" not in err


def test_bad_model_file_is_named(tmp_path, capsys):
    (tmp_path / "m.json").write_text('{"format": "activepercept-model"}')
    assert run("solve", "--model", tmp_path / "m.json", "--out", tmp_path / "o.json") == 1
    assert "ModelFileError" in capsys.readouterr().err


def test_missing_output_directory(tmp_path, capsys):
    assert run("solve", *GRID, "--out", tmp_path / "no" / "x.json") == 1
    assert "FlagError" in capsys.readouterr().err


def test_internal_error_exits_two(monkeypatch, capsys):
    def boom(args):
        raise RuntimeError("bug")
    parser = cli.build_parser
    monkeypatch.setattr(cli, "build_parser", lambda: _with_func(parser(), boom))
    assert cli.main(["reduce", "--direction", "rho-to-ir", "--model", "a", "--out", "b"]) == 2
    assert "internal error" in capsys.readouterr().err


def _with_func(parser, func):
    parser.set_defaults(func=func)
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            sub.set_defaults(func=func)
    return parser


def test_gridworld_model_from_env_matches_builder(tmp_path):
    assert run("solve", *GRID, "--beliefs", 5, "--out", tmp_path / "v.json",
               "--write-model", tmp_path / "m.json") == 0
    ref = build_gridworld(GridworldSpec(num_cells=4, horizon=3))
    assert np.array_equal(load_model(tmp_path / "m.json").transition, ref.transition)


def test_sim_multi_env_defaults_to_two_people(tmp_path):
    out = tmp_path / "multi.csv"
    assert run("sim", "--env", "multi", "--cells", 4, "--k", 2, "--horizon", 2, "--policy", "ir",
               "--beliefs", 10, "--episodes", 2, "--steps", 4, "--out", out) == 0
    rows = read_csv(out)
    assert len(rows) == 9 and rows[1][2].count(";") == 1
    man = json.loads((tmp_path / "multi.csv.manifest.json").read_text())
    assert man["flags"]["people"] == 2 and man["flags"]["env"] == "multi"
