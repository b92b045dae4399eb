"""Compiled vs pure-Python orbit kernels.

Runs the same orbits through both backends and prints wall times.  The
return maps are expanding, so last-bit rounding differences between the two
kernels double every step and whole chaotic orbits cannot be compared.
Agreement is checked instead on a short prefix and on single steps restarted
from states sampled along the compiled orbit::

    python3 benchmarks/bench_core.py [--steps 100000] [--repeat 3] [--json out.json]
"""
import argparse
import json
import time

import numpy as np

from pseudobilliard import fixtures as fx
from pseudobilliard.dynamics import ServerState, orbit, random_start, server_draws, server_orbit, start_state


def cases():
    n3 = fx.standard(3)
    s3 = start_state(n3, 0, [0.0, 0.3, 0.7])
    yield "n3 return map", lambda be, n: orbit(n3, s3, n, backend=be), _one_map(n3)
    yield "n3 + tangent", lambda be, n: orbit(n3, s3, n, tangent=True, backend=be), _one_map(n3)
    n4 = fx.standard(4)
    s4 = random_start(n4, np.random.default_rng(4))
    yield "n4 + tangent", lambda be, n: orbit(n4, s4, n, tangent=True, backend=be), _one_map(n4)
    cut = fx.corner_cut()
    sc = start_state(cut, 1, [0.3, 0.0, 0.7])
    yield "n3 corner cut", lambda be, n: orbit(cut, sc, n, backend=be), _one_map(cut)
    srv = fx.server_triangle("stochastic")
    ss = ServerState(0, np.array([0.3, 0.0]), 0)
    yield "stochastic server", lambda be, n: server_orbit(srv, ss, n, backend=be), _one_server(srv)


PREFIX = 20
SAMPLES = 200


def agreement(rc, rp, run_python_one):
    """Prefix agreement plus one-step agreement from sampled compiled states."""
    m = min(PREFIX, len(rc), len(rp))
    if not (np.array_equal(rc.facets[:m], rp.facets[:m])
            and np.allclose(rc.points[:m], rp.points[:m], atol=1e-9, rtol=0)):
        return False, float("inf")
    worst = 0.0
    ks = np.unique(np.linspace(0, len(rc) - 2, SAMPLES).astype(int)) if len(rc) > 1 else []
    for k in ks:
        one = run_python_one(rc, k)
        if one is None:
            continue
        if len(one) != 1 or one.facets[0] != rc.facets[k + 1]:
            return False, float("inf")
        worst = max(worst, float(np.abs(one.points[0] - rc.points[k + 1]).max()))
    return worst < 1e-12, worst


def _one_map(model):
    def step(rc, k):
        return orbit(model, rc.state(k + 1), 1, backend="python")
    return step


def _one_server(model):
    cache = {}

    def step(rc, k):
        # step k+1 of the orbit consumes draw k+1 of the stream
        n = len(rc)
        if n not in cache:
            cache[n] = server_draws(model.policy.seed, n)
        s = ServerState(int(rc.facets[k]), rc.points[k], int(rc.indices[k]))
        return server_orbit(model, s, 1, draws=cache[n][k + 1:k + 2], backend="python")
    return step


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None, help="also write the results here")
    args = ap.parse_args(argv)
    rows = []
    print(f"{'case':<20} {'steps':>8} {'cython s':>10} {'python s':>10} {'speedup':>8}  agree")
    for name, run, one_step in cases():
        tc, rc = best_of(lambda: run("cython", args.steps), args.repeat)
        tp, rp = best_of(lambda: run("python", args.steps), 1)
        agree, worst = agreement(rc, rp, one_step)
        rows.append(dict(case=name, steps=len(rc), cython_s=tc, python_s=tp,
                         speedup=tp / tc, agree=bool(agree), one_step_max_diff=worst))
        print(f"{name:<20} {len(rc):>8} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f}  {agree} ({worst:.1e})")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["agree"] for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
