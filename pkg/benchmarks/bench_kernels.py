"""Compare the numba kernels with their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Both kernel paths are timed in-process on the same inputs.  An end-to-end
Volterra solve is then timed in two subprocesses, one per value of
``LIPINV_NUMBA``, so the switch is exercised the way users flip it.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from lipinv import _kernels as K

END_TO_END = """
import time
import numpy as np
from lipinv.solver import solve
from lipinv.volterra import VolterraProblem, build_map
P = VolterraProblem({n}, 1.0, "sin", {{"amplitude": 0.9}})
pm = build_map(P)
solve(pm, P.y, np.zeros({n}))
t = time.perf_counter()
for _ in range(3):
    solve(pm, P.y, np.zeros({n}))
print((time.perf_counter() - t) / 3)
"""


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_quadrature(repeat):
    rows = []
    rng = np.random.default_rng(0)
    for n in (50, 200, 800):
        t = np.linspace(0.0, 1.0, n + 1)
        x = rng.standard_normal(n + 1)
        W = K.trapezoid_weights(n)
        args = (K.PHI_SIN, 0.9, 1.0, t, x)
        row = {"kernel": "family_quadrature", "size": n,
               "numpy_s": best_of(lambda: K.family_quadrature_numpy(*args, W), repeat, 20)}
        if K.HAS_NUMBA:
            K.family_quadrature_jit(*args)
            row["numba_s"] = best_of(lambda: K.family_quadrature_jit(*args), repeat, 20)
        rows.append(row)
    return rows


def bench_wolfe(repeat):
    rows = []
    rng = np.random.default_rng(1)
    for k, d in ((4, 3), (16, 8), (64, 20)):
        P = rng.standard_normal((k, d)) + 0.5
        row = {"kernel": "wolfe_mnp", "size": f"{k}x{d}",
               "numpy_s": best_of(lambda: K.wolfe_mnp_py(P, 1000, 1e-12), repeat, 20)}
        if K.HAS_NUMBA:
            K.wolfe_mnp_jit(P, 1000, 1e-12)
            row["numba_s"] = best_of(lambda: K.wolfe_mnp_jit(P, 1000, 1e-12), repeat, 20)
        rows.append(row)
    return rows


def bench_end_to_end(n=200):
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, LIPINV_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env,
                             capture_output=True, text=True, check=True)
        out["numba_s" if flag == "1" else "numpy_s"] = float(res.stdout.strip())
    return {"kernel": "volterra solve", "size": n, **out}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="also write the rows to this file")
    args = ap.parse_args(argv)

    rows = bench_quadrature(args.repeat) + bench_wolfe(args.repeat) + [bench_end_to_end()]
    print(f"{'kernel':<20}{'size':>8}{'numpy [ms]':>14}{'numba [ms]':>14}{'speedup':>10}")
    for r in rows:
        jit = r.get("numba_s")
        speed = f"{r['numpy_s'] / jit:9.1f}x" if jit else "        -"
        jit_ms = f"{1e3 * jit:14.3f}" if jit else f"{'-':>14}"
        print(f"{r['kernel']:<20}{str(r['size']):>8}{1e3 * r['numpy_s']:14.3f}{jit_ms}{speed:>10}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
