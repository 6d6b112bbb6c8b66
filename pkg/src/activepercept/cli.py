"""Command-line entry point: solve, sim, verify, reduce and bench.

Exit codes: 0 success, 1 user error (bad flags, bad model file, resource
budget exceeded), 2 internal error. Failures print one line to stderr.
Verbosity follows the ACTIVE_PERCEPT_LOG environment variable (a logging
level name or number, default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .experiments import solve_policy, time_backups, warm_up
from .model import IRRewardMatrix, ModelError, ResourceBudgetError, StateReward, TangentRewardSet
from .modelio import (
    ModelFileError,
    RunManifest,
    load_model,
    load_value_function,
    report_to_dict,
    save_model,
    value_function_to_dict,
    write_json,
)
from .pbvi import MODES, default_mode, sample_beliefs
from .reduction import reduce_ir_to_rho, reduce_rho_to_ir
from .surveillance import (
    FactoredPolicy,
    GridworldSpec,
    PlannedPolicy,
    RotateJointPolicy,
    RotatePolicy,
    budget_model,
    build_gridworld,
    coverage_model,
    important_cells_model,
    simulate,
    simulate_multi,
)

log = logging.getLogger("activepercept")

SOLVE_BACKENDS = MODES + ("state", "greedy")
SIM_POLICIES = ("ir", "coverage", "rotate", "myopic", "greedy", "planned")
VERIFY_SUITES = ("equivalence", "submodularity", "monotonicity", "bounds", "identities")
ENVS = ("grid", "budget", "multi", "important")
METRIC_COLUMNS = ("episode", "step", "true_state", "predicted", "correct", "max_belief", "sensors", "reward")
BENCH_COLUMNS = ("backend", "N", "K", "stage", "seconds", "value_at_b0")
# flags naming output files do not change results and stay out of manifests
OUTPUT_FLAGS = ("out", "report", "write_model", "timings")


class FlagError(ValueError):
    """Command-line flags are missing, malformed or contradict each other."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise FlagError(message)


# --------------------------------------------------------------------------
# helpers


def parse_int_list(text: str, name: str = "value") -> list:
    """"5,8,11", "5..11" or "5..11:3", optionally prefixed "N="."""
    body = text.split("=", 1)[1] if "=" in text else text
    out = []
    for part in body.split(","):
        part = part.strip()
        m = re.fullmatch(r"(\d+)\.\.(\d+)(?::(\d+))?", part)
        if m:
            lo, hi, step = int(m[1]), int(m[2]), int(m[3] or 1)
            if lo > hi or step < 1:
                raise FlagError(f"bad range {part!r} for {name}")
            out.extend(range(lo, hi + 1, step))
        elif part.isdigit():
            out.append(int(part))
        else:
            raise FlagError(f"cannot parse {name} {text!r}")
    if not out:
        raise FlagError(f"empty {name} list")
    return out


def _positive(name):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"{name} must be >= 1")
        return v
    return conv


def _probability(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def _manifest(args, backend=None):
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in OUTPUT_FLAGS and k != "func"}
    return RunManifest(args.command, flags, getattr(args, "seed", None), __version__, backend)


def _spec(args) -> GridworldSpec:
    try:
        return GridworldSpec(num_cells=args.cells, p_stay=args.p_stay, true_positive_rate=args.tp,
                             false_positive_rate=args.fp, budget_k=args.k, discount=args.discount,
                             horizon=args.horizon or 10)
    except ModelError as e:
        raise FlagError(str(e)) from None


def _important(args, spec):
    if args.important is None:
        raise FlagError("--env important needs --important CELLS")
    cells = parse_int_list(args.important, "--important")
    if any(c >= spec.num_cells for c in cells):
        raise FlagError("--important names a cell outside the grid")
    return cells


def _env_model(args):
    spec = _spec(args)
    if args.env in ("grid", "multi"):
        return build_gridworld(spec)
    if args.env == "budget":
        return budget_model(spec, args.budget, args.steps)
    return important_cells_model(spec, _important(args, spec))


def _sensor_label(a) -> str:
    return ";".join(str(i) for i in a)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _check_out_dir(path):
    if path is not None and not Path(path).resolve().parent.is_dir():
        raise FlagError(f"output directory for {path} does not exist")


# --------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    _check_out_dir(args.out)
    if (args.model is None) == (args.env is None):
        raise FlagError("give exactly one of --model and --env")
    model = load_model(args.model) if args.model else _env_model(args)
    if args.model and args.horizon is not None:
        model = model.replace(horizon=args.horizon)
    backend = args.backend or default_mode(model)
    if backend in MODES[:2] and not isinstance(model.reward, IRRewardMatrix):
        raise FlagError(f"backend {backend} needs an IR reward")
    if backend == "crosssum-rho" and not isinstance(model.reward, TangentRewardSet):
        raise FlagError("backend crosssum-rho needs a tangent reward")
    if backend == "state" and not isinstance(model.reward, StateReward):
        raise FlagError("backend state needs a state reward")
    horizon = model.horizon
    walk = args.walk_length or (args.steps if args.env == "budget" else None)
    B = sample_beliefs(model, args.beliefs, args.seed, walk_length=walk)
    timings = []
    if backend == "greedy":
        from .greedy import greedy_solve
        stages = greedy_solve(model, B, horizon=horizon, threads=args.threads, timings=timings)
    else:
        from .pbvi import solve
        stages = solve(model, B, mode=backend, horizon=horizon, threads=args.threads, timings=timings)
    manifest = _manifest(args, backend)
    write_json(value_function_to_dict(stages, backend, B, manifest.to_dict(with_timings=False)), args.out)
    if args.timings:
        write_json({"backup_seconds": [float(t) for t in timings]}, args.timings)
    if args.write_model:
        save_model(model, args.write_model)
    log.info("backup seconds: %s", ", ".join(f"{t:.4f}" for t in timings))
    print(f"solved {len(stages)} stages with {backend}: |Gamma_h| = {len(stages[-1])}, "
          f"V(b0) = {stages[-1].evaluate(model.initial_belief):.6f}")
    return 0


def _sim_policy(args, model):
    """Policy object for ``sim`` plus the matrix that scores guesses (None: the model's own)."""
    steps_tv = args.env == "budget"
    beliefs = args.beliefs or (500 if args.env == "budget" else 200)
    walk = args.steps if args.env == "budget" else None
    kw = dict(beliefs=beliefs, seed=args.seed, threads=args.threads, walk_length=walk)
    if args.policy == "rotate":
        return RotatePolicy(model.num_sensors, model.budget_k), None
    if args.policy == "planned":
        if args.vf is None:
            raise FlagError("--policy planned needs --vf")
        stages, backend = load_value_function(args.vf, model)
        sel = "greedy" if backend == "greedy" else "exact"
        return PlannedPolicy(model, stages, sel, args.time_varying or steps_tv), None
    if args.policy == "coverage":
        if args.model:
            raise FlagError("--policy coverage needs --env grid or --env important")
        if args.env == "budget":
            raise FlagError("--policy coverage is not defined for --env budget")
        spec = _spec(args)
        cells = _important(args, spec) if args.env == "important" else None
        cov = coverage_model(spec, cells)
        pol, _ = solve_policy(cov, **kw)
        return pol, np.asarray(model.reward.rewards)
    if args.policy == "myopic":
        pol, _ = solve_policy(model, horizon=1, **kw)
        return pol, None
    if args.policy == "greedy":
        pol, _ = solve_policy(model, backend="greedy", selector="greedy", time_varying=steps_tv,
                              horizon=args.steps if steps_tv else None, **kw)
        return pol, None
    pol, _ = solve_policy(model, time_varying=steps_tv or args.time_varying,
                          horizon=args.steps if steps_tv else None, **kw)
    return pol, None


def cmd_sim(args) -> int:
    _check_out_dir(args.out)
    if (args.model is None) == (args.env is None):
        raise FlagError("give exactly one of --model and --env")
    if args.vf is not None and args.policy != "planned":
        raise FlagError("--vf only applies to --policy planned")
    model = load_model(args.model) if args.model else _env_model(args)
    if not isinstance(model.reward, IRRewardMatrix) and args.policy != "rotate":
        raise FlagError("sim scores guesses and needs a model with an IR reward")
    if args.people is None:
        args.people = 2 if args.env == "multi" else 1
    if args.people > 1 and args.env == "budget":
        raise FlagError("--people > 1 is not supported with --env budget")
    pol, scoring = _sim_policy(args, model)
    if args.people > 1:
        if isinstance(pol, PlannedPolicy):
            joint = FactoredPolicy(pol.model, pol.stages, pol.selector)
        else:
            joint = RotateJointPolicy(model.num_sensors, model.budget_k)
        res = simulate_multi(model, joint, args.people, args.episodes, args.steps, args.seed, scoring)
    else:
        res = simulate(model, pol, args.episodes, args.steps, args.seed, scoring)
    rows = []
    for (e, k, s, p, c, mx, a), tr_r in zip(res.rows(), _step_rewards(res)):
        rows.append((e, k, s, p, c, repr(float(mx)), _sensor_label(a), repr(float(tr_r))))
    _write_csv(args.out, METRIC_COLUMNS, rows)
    write_json(_manifest(args).to_dict(with_timings=False), f"{args.out}.manifest.json")
    print(f"{args.policy}: mean cumulative reward {res.mean_reward:.4f} +/- {res.std_error:.4f} "
          f"over {args.episodes} episodes")
    return 0


def _step_rewards(res):
    for tr in res.trajectories:
        yield from tr.rewards


def cmd_verify(args) -> int:
    from . import verify

    _check_out_dir(args.report)
    s = args.suite
    if s == "equivalence":
        res = verify.equivalence_suite(args.seed, models=args.models or 20, beliefs=args.beliefs or 50,
                                       t_max=args.t_max or 4)
        passed, headline = res["passed"], f"max deviation {res['max_deviation']:.3e}"
    elif s in ("submodularity", "monotonicity"):
        res = verify.property_suite(args.seed, t_max=args.t_max or 3, beliefs=args.beliefs or 25,
                                    count=args.models or 6)
        keys = ("submodularity", "nonnegativity") if s == "submodularity" else ("monotonicity",)
        worst = max(res["worst_violation"][k] for k in keys)
        passed, headline = worst <= verify.TOL, f"worst violation {worst:.3e}"
    elif s == "bounds":
        res = verify.bound_suite(args.seed, t_max=args.t_max or 3, beliefs=args.beliefs or 25,
                                 count=args.models or 6)
        passed, headline = res["passed"], (f"worst violation {res['worst_violation']:.3e}, "
                                           f"min greedy/optimal {res['min_greedy_ratio']:.4f}")
    else:
        res = verify.identity_suite(args.seed)
        passed, headline = res["passed"], f"worst violation {max(res['worst_violation'].values()):.3e}"
    res.pop("passed", None)
    if args.report:
        write_json(report_to_dict(s, passed, res, _manifest(args).to_dict(with_timings=False)), args.report)
    print(f"{s}: {'PASS' if passed else 'FAIL'} ({headline})")
    return 0


def cmd_reduce(args) -> int:
    _check_out_dir(args.out)
    model = load_model(args.model)
    want = TangentRewardSet if args.direction == "rho-to-ir" else IRRewardMatrix
    if not isinstance(model.reward, want):
        kind = "tangent" if want is TangentRewardSet else "ir"
        raise ModelFileError(f"--direction {args.direction} needs a model with a {kind} reward")
    out = reduce_rho_to_ir(model) if args.direction == "rho-to-ir" else reduce_ir_to_rho(model)
    save_model(out, args.out)
    print(f"wrote {args.direction} reduction with {model.num_states} states to {args.out}")
    return 0


def cmd_bench(args) -> int:
    _check_out_dir(args.out)
    backends = [b.strip() for b in args.backends.split(",") if b.strip()]
    bad = [b for b in backends if b not in ("naive-ir", "decomposed-ir", "greedy")]
    if bad or not backends:
        raise FlagError(f"bench backends must be among naive-ir, decomposed-ir, greedy; got {args.backends!r}")
    cells = parse_int_list(args.grid, "--grid")
    ks = parse_int_list(args.k, "--k")
    if min(cells) < 3:
        raise FlagError("--grid values must be >= 3")
    if any(k > n for n in cells for k in ks):
        raise FlagError("--k exceeds the number of cameras for some grid size")
    warm_up()
    spec = GridworldSpec(p_stay=args.p_stay, true_positive_rate=args.tp, false_positive_rate=args.fp,
                         discount=args.discount, horizon=args.horizon)
    rows, totals = [], {}
    for n in cells:
        for k in ks:
            model = build_gridworld(replace(spec, num_cells=n, budget_k=k))
            B = sample_beliefs(model, args.beliefs, args.seed)
            for b in backends:
                stages, timings = time_backups(model, B, b, args.repeats, args.threads)
                v0 = repr(float(stages[-1].evaluate(model.initial_belief)))
                for i, t in enumerate(timings, start=1):
                    rows.append((b, n, k, i, repr(float(t)), ""))
                rows.append((b, n, k, "total", repr(float(np.sum(timings))), v0))
                totals[(b, n, k)] = float(np.sum(timings))
                log.info("%s N=%d K=%d: %.4fs", b, n, k, totals[(b, n, k)])
    _write_csv(args.out, BENCH_COLUMNS, rows)
    write_json(_manifest(args).to_dict(with_timings=False), f"{args.out}.manifest.json")
    if "greedy" in backends and len(backends) > 1:
        full = next(b for b in backends if b != "greedy")
        for k in ks:
            ratios = " ".join(f"N={n}:{totals[(full, n, k)] / totals[('greedy', n, k)]:.2f}" for n in cells)
            print(f"K={k} {full}/greedy time ratio {ratios}")
    print(f"wrote {len(rows)} rows to {args.out} (kernels: {_kernels.backend_name()})")
    return 0


# --------------------------------------------------------------------------
# parser


def _env_flags(p, steps_default=50):
    p.add_argument("--env", choices=ENVS)
    p.add_argument("--cells", type=_positive("--cells"), default=10)
    p.add_argument("--k", type=_positive("--k"), default=1)
    p.add_argument("--p-stay", type=_probability, default=0.7)
    p.add_argument("--tp", type=_probability, default=0.75, help="camera true-positive rate")
    p.add_argument("--fp", type=_probability, default=0.05, help="camera false-positive rate")
    p.add_argument("--discount", type=float, default=0.99)
    p.add_argument("--horizon", type=_positive("--horizon"),
                   help="planning horizon (default 10, or the horizon stored in --model)")
    p.add_argument("--budget", type=_positive("--budget"), default=15, help="camera uses for --env budget")
    p.add_argument("--steps", type=_positive("--steps"), default=steps_default)
    p.add_argument("--important", help="comma-separated cells for --env important")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="activepercept", description="Active-perception POMDP planning and experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    threads = dict(type=_positive("--threads"), default=os.cpu_count() or 1)

    s = sub.add_parser("solve", help="solve a model and write its value functions")
    s.add_argument("--model", help="model JSON file")
    _env_flags(s)
    s.add_argument("--backend", choices=SOLVE_BACKENDS)
    s.add_argument("--beliefs", type=_positive("--beliefs"), default=200)
    s.add_argument("--walk-length", type=_positive("--walk-length"))
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--threads", **threads)
    s.add_argument("--out", required=True)
    s.add_argument("--write-model", help="also write the solved model as JSON")
    s.add_argument("--timings", help="write backup seconds to this JSON file")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sim", help="simulate a policy and write per-step metrics CSV")
    s.add_argument("--model", help="model JSON file (IR reward)")
    _env_flags(s)
    s.add_argument("--policy", choices=SIM_POLICIES, default="ir")
    s.add_argument("--vf", help="value-function JSON for --policy planned")
    s.add_argument("--time-varying", action="store_true", help="act on the stage matching steps left")
    s.add_argument("--people", type=_positive("--people"),
                   help="independent people to track (default 2 for --env multi, else 1)")
    s.add_argument("--beliefs", type=_positive("--beliefs"))
    s.add_argument("--episodes", type=_positive("--episodes"), default=100)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--threads", **threads)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("verify", help="run a seeded verification suite")
    s.add_argument("--suite", choices=VERIFY_SUITES, required=True)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--models", type=_positive("--models"))
    s.add_argument("--beliefs", type=_positive("--beliefs"))
    s.add_argument("--t-max", type=_positive("--t-max"))
    s.add_argument("--report")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("reduce", help="convert between belief-reward and prediction-reward models")
    s.add_argument("--direction", choices=("rho-to-ir", "ir-to-rho"), required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("bench", help="time backups over a gridworld sweep")
    s.add_argument("--backends", default="decomposed-ir,greedy")
    s.add_argument("--grid", default="N=5,8,11", help='cell counts, e.g. "N=5,8,11" or "5..11:3"')
    s.add_argument("--k", default="1..3")
    s.add_argument("--p-stay", type=_probability, default=0.7)
    s.add_argument("--tp", type=_probability, default=0.75)
    s.add_argument("--fp", type=_probability, default=0.05)
    s.add_argument("--discount", type=float, default=0.99)
    s.add_argument("--horizon", type=_positive("--horizon"), default=10)
    s.add_argument("--beliefs", type=_positive("--beliefs"), default=200)
    s.add_argument("--repeats", type=_positive("--repeats"), default=3)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--threads", **threads)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench)
    return p


def _setup_logging():
    level = os.environ.get("ACTIVE_PERCEPT_LOG", "WARNING").strip()
    level = int(level) if level.isdigit() else getattr(logging, level.upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except FlagError as e:
        print(f"activepercept: FlagError: {e}", file=sys.stderr)
    except ModelFileError as e:
        print(f"activepercept: ModelFileError: {e}", file=sys.stderr)
    except ResourceBudgetError as e:
        print(f"activepercept: ResourceBudgetError: {e}", file=sys.stderr)
    except ModelError as e:
        print(f"activepercept: ModelError: {e}", file=sys.stderr)
    except OSError as e:
        print(f"activepercept: IOError: {e}", file=sys.stderr)
    except Exception as e:  # noqa: BLE001 - anything else is a bug
        log.debug("internal error", exc_info=True)
        print(f"activepercept: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
