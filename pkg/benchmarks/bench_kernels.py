"""Time every per-step kernel under both backends, then a short closed-loop run.

    python3 benchmarks/bench_kernels.py [--agents 6] [--repeat 2000]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dtvopt import _core_py

try:
    from dtvopt import _core
except ImportError:
    _core = None


def kernel_cases(n: int, rng: np.random.Generator):
    X = np.ascontiguousarray(rng.uniform(-3, 3, (n, 2)))
    tails, heads = np.triu_indices(n, 1)
    tails = np.ascontiguousarray(tails, dtype=np.intp)
    heads = np.ascontiguousarray(heads, dtype=np.intp)
    gains = np.ones(tails.size)
    conn = np.ones((n, n), dtype=np.uint8)
    np.fill_diagonal(conn, 0)
    Xsep = np.ascontiguousarray(np.c_[np.arange(n) * 0.6, np.zeros(n)])
    M = np.ascontiguousarray(rng.normal(size=(n, 2, 2)))
    code = np.zeros(2 * n)
    amp = rng.normal(size=2 * n)
    om = np.ones(2 * n)
    ph = np.zeros(2 * n)
    off = np.zeros(2 * n)
    return {
        "sign_coupling": lambda k: k.sign_coupling(X, tails, heads, gains, 0.0),
        "sign_coupling (sig^0.5)": lambda k: k.sign_coupling(X, tails, heads, gains, 0.5),
        "layer_coupling": lambda k: k.layer_coupling(X, tails, heads, gains, 0.5),
        "potential_coupling": lambda k: k.potential_coupling(Xsep, tails, heads, conn,
                                                             float(n), 0.5),
        "proximity_edges": lambda k: k.proximity_edges(X, 2.0),
        "pair_distance_range": lambda k: k.pair_distance_range(X),
        "pd_inverse": lambda k: k.pd_inverse(M, 1e-6),
        "eval_signals": lambda k: k.eval_signals(code, amp, om, ph, off, 0.7),
    }


def closed_loop_seconds(backend: str, preset: str, t_end: float) -> float:
    """Wall time of a short preset run in a fresh interpreter on one backend."""
    env = dict(os.environ)
    env["DTVOPT_PURE_PYTHON"] = "1" if backend == "python" else "0"
    code = ("import time; from dtvopt import parse_scenario, integrate, BACKEND;"
            f"c = parse_scenario('{preset}').with_override('integrator.t_end', {t_end});"
            "t = time.perf_counter(); integrate(c); print(BACKEND, time.perf_counter() - t)")
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True).stdout.split()
    if out[0] != backend:
        raise RuntimeError(f"asked for the {backend} backend but got {out[0]}")
    return float(out[1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agents", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--t-end", type=float, default=1.0)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = kernel_cases(args.agents, rng)
    print(f"kernels, {args.agents} agents, all pairs as edges (microseconds per call)")
    print(f"{'kernel':28s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, fn in cases.items():
        py = timeit.timeit(lambda: fn(_core_py), number=args.repeat) / args.repeat * 1e6
        if _core is None:
            print(f"{name:28s} {py:10.2f} {'n/a':>10s}")
            continue
        cc = timeit.timeit(lambda: fn(_core), number=args.repeat) / args.repeat * 1e6
        print(f"{name:28s} {py:10.2f} {cc:10.2f} {py / cc:7.1f}x")
    if _core is None:
        print("compiled extension not built; closed-loop comparison skipped")
        return
    print(f"\nclosed loop, t_end = {args.t_end} (seconds)")
    for preset in ("fig1", "fig3", "fig5"):
        py = closed_loop_seconds("python", preset, args.t_end)
        cc = closed_loop_seconds("compiled", preset, args.t_end)
        print(f"{preset:28s} {py:10.2f} {cc:10.2f} {py / cc:7.1f}x")


if __name__ == "__main__":
    main()
