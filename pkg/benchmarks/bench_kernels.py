"""Time the numba kernels against their numpy fallbacks on gridworld backups.

    python3 benchmarks/bench_kernels.py [--cells 8] [--k 2] [--repeats 20]

Both variants run on identical inputs and their outputs are compared before
timing; the process-wide selection (ACTIVE_PERCEPT_NUMBA) is not consulted.
"""
import argparse
import time

import numpy as np

from activepercept import _kernels
from activepercept.experiments import solve_policy
from activepercept.surveillance import GridworldSpec, build_gridworld


def _best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--cells", type=int, default=8)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--beliefs", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    model = build_gridworld(GridworldSpec(num_cells=args.cells, budget_k=args.k, horizon=5))
    pol, _ = solve_policy(model, beliefs=args.beliefs, seed=0)
    G = np.ascontiguousarray(pol.stages[-1].vectors)
    table = model.action_table
    b = np.random.default_rng(0).dirichlet(np.ones(model.num_states))
    bp = np.ascontiguousarray(b @ model.transition_stack)
    ids = np.arange(table.num_actions, dtype=np.int64)
    gt = model.greedy_table
    masks = model.greedy_masks
    gbp = np.ascontiguousarray(b @ model.transition_stack)
    rterm = np.zeros(gt.num_actions)

    def run(kind):
        ev = getattr(_kernels, f"eval_actions_{kind}")
        gs = getattr(_kernels, f"greedy_select_{kind}")
        bb = getattr(_kernels, f"belief_batch_{kind}")
        best = np.zeros(table.lik.shape[0], dtype=np.int64)
        gbest = np.zeros(gt.lik.shape[0], dtype=np.int64)
        return {
            "eval_actions": lambda: ev(bp, table.lik, table.ptr, table.tid, ids, G, best),
            "greedy_select": lambda: gs(gbp, gt.lik, gt.ptr, gt.tid, G, masks, model.num_sensors,
                                        model.budget_k, rterm, gbest),
            "belief_batch": lambda: bb(bp[0], table.lik),
        }

    fast, slow = run("numba"), run("numpy")
    print(f"gridworld N={args.cells} K={args.k}: {table.num_actions} actions, "
          f"{table.lik.shape[0]} observation rows, |Gamma|={G.shape[0]}")
    print(f"{'kernel':<15}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for name in fast:
        a, c = fast[name](), slow[name]()
        a, c = (a, c) if isinstance(a, tuple) else ((a,), (c,))
        if not all(np.allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), atol=1e-12)
                   for x, y in zip(a, c)):
            raise SystemExit(f"{name}: numba and numpy outputs differ")
        tf = _best_of(fast[name], args.repeats)
        ts = _best_of(slow[name], args.repeats)
        print(f"{name:<15}{tf:>12.2e}{ts:>12.2e}{ts / tf:>10.1f}")


if __name__ == "__main__":
    main()
